from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from projinf import io
from projinf.cli import dlambda_path, main
from projinf.influence import tau_exact
from projinf.linalg import compact_eig
from projinf.planner import effective_dim


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def fisher_of(path):
    G = io.read_gradients(path)
    return np.sort(np.linalg.eigvalsh(G.T @ G / len(G)))[::-1]


def test_gen_flat(tmp_path, capsys):
    p = tmp_path / "g.grdf"
    assert run(capsys, "gen", "--n", 400, "--d", 40, "--spectrum", "flat", "--out", p)[0] == 0
    w = fisher_of(p)
    assert w[0] / np.median(w) <= 2


def test_gen_hard_exact(tmp_path, capsys):
    p = tmp_path / "h.grdf"
    assert run(capsys, "gen", "--n", 50, "--d", 32, "--spectrum", "hard(8,16,1e-3)", "--lambda", 2,
               "--out", p)[0] == 0
    w = fisher_of(p)
    np.testing.assert_allclose(w[:8], 2.0, rtol=1e-12)
    np.testing.assert_allclose(w[8:16], 2e-3, rtol=1e-9)
    np.testing.assert_allclose(w[16:], 0.0, atol=1e-13)


def test_gen_single_row(tmp_path, capsys):
    p, c = tmp_path / "g.grdf", tmp_path / "c.npz"
    run(capsys, "gen", "--n", 1, "--d", 6, "--out", p)
    code, out, _ = run(capsys, "fisher", "--grads", p, "--out", c)
    assert code == 0 and json.loads(out)["rank"] == 1


def test_gen_usage_errors(tmp_path, capsys):
    assert run(capsys, "gen", "--n", 0, "--d", 3, "--out", tmp_path / "x")[0] == 2
    assert run(capsys, "gen", "--n", 3, "--d", 3, "--spectrum", "cauchy", "--out", tmp_path / "x")[0] == 2
    assert run(capsys, "gen", "--n", 3, "--d", 8, "--spectrum", "hard:2,4,0.1", "--out", tmp_path / "x")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--n", "3", "--d", "3"])
    assert exc.value.code == 2


def test_fisher_examples(tmp_path, capsys):
    g, c = tmp_path / "g.grdf", tmp_path / "c.npz"
    io.write_gradients(g, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert run(capsys, "fisher", "--grads", g, "--out", c)[0] == 0
    np.testing.assert_allclose(io.load_curvature(c).lambdas, [0.5, 0.5])
    io.write_gradients(g, np.random.default_rng(0).standard_normal((3, 7)))
    run(capsys, "fisher", "--grads", g, "--out", c)
    assert io.load_curvature(c).rank <= 3
    assert run(capsys, "fisher", "--grads", g, "--cap", 5, "--out", c)[0] == 2
    assert run(capsys, "fisher", "--grads", tmp_path / "missing", "--out", c)[0] == 2


def test_powerlaw_roundtrip(tmp_path, capsys):
    g, c, s = tmp_path / "g.grdf", tmp_path / "c.npz", tmp_path / "s.csv"
    run(capsys, "gen", "--n", 4000, "--d", 40, "--spectrum", "powerlaw:1", "--seed", 3, "--out", g)
    run(capsys, "fisher", "--grads", g, "--out", c)
    assert run(capsys, "spectrum", "--curvature", c, "--out", s)[0] == 0
    w = np.array([float(r["lambda_i"]) for r in read_csv(s)])
    target = np.arange(1.0, 41) ** -1.0
    assert np.abs(w[:10] / target[:10] - 1).max() <= 0.2
    assert np.corrcoef(np.log(w), np.log(target))[0, 1] >= 0.95


def test_spectrum_tables(tmp_path, capsys):
    c, s = tmp_path / "c.npz", tmp_path / "s.csv"
    io.save_curvature(c, compact_eig(np.eye(5)))
    run(capsys, "spectrum", "--curvature", c, "--out", s)
    assert {r["lambda_i"] for r in read_csv(s)} == {"1.0"}
    table = read_csv(dlambda_path(s))
    assert len(table) == 13
    dl = [float(r["d_lambda"]) for r in table]
    assert all(a > b for a, b in zip(dl, dl[1:]))
    g = tmp_path / "h.grdf"
    run(capsys, "gen", "--n", 40, "--d", 32, "--spectrum", "hard:8,16,0.001", "--lambda", 1, "--out", g)
    run(capsys, "fisher", "--grads", g, "--out", c)
    run(capsys, "spectrum", "--curvature", c, "--out", s)
    at_one = [float(r["d_lambda"]) for r in read_csv(dlambda_path(s)) if float(r["lambda"]) == 1.0][0]
    assert at_one == pytest.approx(8 / 2 + 1e-3 * 8 / (1 + 1e-3), abs=1e-10)


def test_plan_examples(tmp_path, capsys):
    # eigenvalues (1, 1, 1, 1) in d = 10000 give d_lambda = 2 at lambda = 1
    c = tmp_path / "c.npz"
    from projinf.linalg import DEFAULT_POLICY, CompactEigen
    io.save_curvature(c, CompactEigen(np.eye(10000, 4), np.ones(4), DEFAULT_POLICY))
    code, out, _ = run(capsys, "plan", "--curvature", c, "--lambda", 1, "--eps", 0.1, "--delta", 0.05, "--C", 16)
    rep = json.loads(out)
    assert code == 0 and rep["m_recommended"] == 7994 and rep["capped"] is False
    io.save_curvature(c, compact_eig(np.diag([1.0, 1, 1, 1, 0, 0])))
    rep = json.loads(run(capsys, "plan", "--curvature", c, "--lambda", 1, "--eps", 0.1, "--delta", 0.05)[1])
    assert rep["capped"] is True and rep["m_recommended"] == 6
    rep = json.loads(run(capsys, "plan", "--curvature", c, "--lambda", 0, "--eps", 0.1, "--delta", 0.05)[1])
    assert rep["m_recommended"] == 4 and rep["note"]
    assert run(capsys, "plan", "--curvature", c, "--lambda", 1, "--eps", 2, "--delta", 0.05)[0] == 2
    assert run(capsys, "plan", "--curvature", c, "--eps", 0.1, "--delta", 0.05)[0] == 2


def test_plan_factorized(tmp_path, capsys):
    f, c = tmp_path / "f.kfcf", tmp_path / "k.npz"
    io.write_factors(f, np.diag([4.0, 1.0]), np.diag([9.0, 1.0]))
    assert run(capsys, "kfac-load", "--factors", f, "--out", c)[0] == 0
    code, out, _ = run(capsys, "plan", "--curvature", c, "--lambda", 6, "--eps", 0.3, "--delta", 0.1,
                       "--C", 1, "--factorized")
    rep = json.loads(out)
    assert rep["d_A_eff"] == pytest.approx(6 / 7 + 3 / 5)
    assert run(capsys, "plan", "--curvature", c, "--lambda", 37, "--eps", 0.3, "--delta", 0.1,
               "--factorized")[0] == 2


@pytest.fixture
def grads(tmp_path, capsys):
    tr, te = tmp_path / "train.grdf", tmp_path / "test.grdf"
    run(capsys, "gen", "--n", 60, "--d", 24, "--spectrum", "powerlaw:1", "--seed", 1, "--out", tr)
    G = io.read_gradients(tr)
    io.write_gradients(te, G[:5] + 0.0)
    return tr, te


def test_attribute_exact(tmp_path, capsys, grads):
    tr, te = grads
    one = tmp_path / "one.grdf"
    io.write_gradients(one, io.read_gradients(tr)[:1])
    out = tmp_path / "a.csv"
    assert run(capsys, "attribute", "--train", one, "--test", one, "--lambda", 0.5, "--out", out)[0] == 0
    rows = read_csv(out)
    g = io.read_gradients(one)[0]
    eig = compact_eig(np.outer(g, g))
    assert len(rows) == 1 and float(rows[0]["score"]) == pytest.approx(tau_exact(eig, 0.5, g, g), rel=1e-12)
    assert run(capsys, "attribute", "--train", tr, "--test", te, "--lambda", 0.5, "--out", out)[0] == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["train_idx", "test_idx", "score"] and len(rows) == 300


def test_attribute_sketched_envelope(tmp_path, capsys, grads):
    tr, te = grads
    out = tmp_path / "a.csv"
    G = io.read_gradients(tr)
    eig = compact_eig(G.T @ G / len(G))
    lam, eps = 0.05, 0.5
    m = math.ceil(16 * (effective_dim(eig, lam) + math.log(10)) / eps**2)
    assert run(capsys, "attribute", "--train", tr, "--test", tr, "--lambda", lam, "--sketch", "gaussian",
               "--m", m, "--seed", 4, "--out", out)[0] == 0
    S = np.array([float(r["score"]) for r in read_csv(out)]).reshape(60, 60)
    exact = G @ np.linalg.pinv(eig.dense() + lam * np.eye(24)) @ G.T
    norms = np.sqrt(np.diag(G @ np.linalg.pinv(eig.dense()) @ G.T))
    err = np.abs(S - exact) / np.outer(norms, norms)
    assert np.percentile(err, 95) <= eps
    first = (tmp_path / "a.csv").read_bytes()
    run(capsys, "attribute", "--train", tr, "--test", tr, "--lambda", lam, "--sketch", "gaussian",
        "--m", m, "--seed", 4, "--out", out)
    assert (tmp_path / "a.csv").read_bytes() == first


def test_attribute_kron(tmp_path, capsys):
    f, c = tmp_path / "f.kfcf", tmp_path / "k.npz"
    io.write_factors(f, np.diag([2.0, 1.0, 0.0]), np.diag([1.0, 3.0]))
    run(capsys, "kfac-load", "--factors", f, "--out", c)
    g = tmp_path / "g.grdf"
    io.write_gradients(g, np.random.default_rng(2).standard_normal((3, 6)))
    out = tmp_path / "a.csv"
    assert run(capsys, "attribute", "--train", g, "--test", g, "--curvature", c, "--lambda", 1,
               "--sketch", "kron:gaussianxsjl:1", "--m-factors", "2,2", "--out", out)[0] == 0
    assert len(read_csv(out)) == 9
    assert run(capsys, "attribute", "--train", g, "--test", g, "--curvature", c, "--lambda", 1,
               "--sketch", "kron:gaussianxgaussian", "--out", out)[0] == 2


def test_sweep(tmp_path, capsys):
    c, out = tmp_path / "c.npz", tmp_path / "s.csv"
    from projinf.verify.instances import psd_eig
    eig = psd_eig(128, 64, 1, "powerlaw:1")
    io.save_curvature(c, eig)
    lambdas = "1e-3,1e-2,1e-1,1"
    assert run(capsys, "sweep", "--curvature", c, "--lambdas", lambdas, "--m-mults", "1,4,16,64",
               "--trials", 1, "--pairs", 200, "--seed", 5, "--out", out)[0] == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["lambda", "m", "trial", "seed", "d_lambda", "eps_lambda_p50", "eps_lambda_p95",
                             "leakage_p95", "wall_time_ms"]
    by_lam = {}
    for r in rows:
        by_lam.setdefault(r["lambda"], []).append(float(r["eps_lambda_p95"]))
    decreasing = [all(a > b for a, b in zip(v, v[1:])) for v in by_lam.values()]
    assert np.mean(decreasing) >= 0.9
    assert all(float(r["wall_time_ms"]) == 0.0 for r in rows)
    first = out.read_bytes()
    run(capsys, "sweep", "--curvature", c, "--lambdas", lambdas, "--m-mults", "1,4,16,64",
        "--trials", 1, "--pairs", 200, "--seed", 5, "--out", out)
    assert out.read_bytes() == first


def test_sweep_regularization_dominated(tmp_path, capsys):
    c, out = tmp_path / "c.npz", tmp_path / "s.csv"
    from projinf.verify.instances import psd_eig
    eig = psd_eig(64, 16, 2)
    io.save_curvature(c, eig)
    mult = 7.5 / effective_dim(eig, 1e6)
    run(capsys, "sweep", "--curvature", c, "--lambdas", "1e6", "--m-mults", repr(mult), "--trials", 3,
        "--out", out)
    rows = read_csv(out)
    assert {r["m"] for r in rows} == {"8"}
    assert all(float(r["eps_lambda_p95"]) <= 0.1 for r in rows)


def test_sweep_training_rows(tmp_path, capsys, grads):
    tr, _ = grads
    c, out = tmp_path / "c.npz", tmp_path / "s.csv"
    run(capsys, "fisher", "--grads", tr, "--out", c)
    assert run(capsys, "sweep", "--curvature", c, "--grads", tr, "--lambdas", "0.1", "--m-mults", "2,8",
               "--trials", 2, "--pairs", 20, "--out", out)[0] == 0
    assert len(read_csv(out)) == 4


def test_leakage_command(tmp_path, capsys, grads):
    tr, te = grads
    c = tmp_path / "c.npz"
    io.save_curvature(c, compact_eig(np.diag(np.r_[np.ones(12), np.zeros(12)])))
    code, out, _ = run(capsys, "leakage", "--train", tr, "--test", te, "--curvature", c, "--lambda", 1,
                       "--eps", 0.3, "--sketch", "gaussian", "--m", 12)
    reps = json.loads(out)
    assert code == 0 and len(reps) == 300
    assert all(abs(r["tau_exact_perp"]) <= 1e-12 for r in reps)
    assert run(capsys, "leakage", "--train", tr, "--test", te, "--lambda", 1, "--eps", 0.3)[0] == 2


def test_verify_barrier_seed7(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert run(capsys, "verify", "--suite", "barrier", "--seed", 7, "--out", out)[0] == 0
    doc = json.loads(out.read_text())
    assert doc["pass"] and doc["results"][0]["name"] == "barrier"


def test_verify_unknown_suite(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--suite", "nope"])
    assert exc.value.code == 2


def test_verify_failure_exit_code(monkeypatch, capsys):
    from projinf import cli
    from projinf.verify import ProbeResult

    failing = ProbeResult("fake", False, 1.0, 0.5, 1, [0])
    monkeypatch.setattr(cli, "run_suite", lambda *a, **k: [failing])
    code, out, _ = run(capsys, "verify", "--suite", "anti")
    assert code == 1 and json.loads(out)["pass"] is False
