"""Command-line interface.

Exit codes: 0 success, 1 probe failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

import numpy as np

from projinf import io
from projinf.errors import CapExceeded, ProjInfError
from projinf.influence import as_eig, influence_gram
from projinf.leakage import leakage_report
from projinf.linalg import DEFAULT_KRON_CAP, KroneckerPair, RankPolicy, compact_eig
from projinf.planner import effective_dim, plan_factorized, plan_sketch_size
from projinf.seeding import MASK64, mix, stream
from projinf.sketch import build_sketch, factor_specs, make_spec, parse_family
from projinf.sweep import SWEEP_HEADER, rows_as_tuples, run_sweep

SUITES = ("all", "barrier", "sandwich", "lower", "anti", "kfac", "leakage")
DLAMBDA_GRID = tuple(10.0**e for e in range(-6, 7))


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _emit(text: str, out) -> None:
    if out:
        io.write_text(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- gen / fisher / kfac-load

_SPECTRUM = re.compile(r"^(powerlaw|flat|hard)(?:[:(]([^)]*)\)?)?$")


def parse_spectrum(text: str):
    """``powerlaw:<p>``, ``flat`` or ``hard:<k>,<r>,<eta>``; parentheses also accepted."""
    m = _SPECTRUM.match(text.strip().lower().replace(" ", ""))
    if not m:
        raise UsageError(f"unknown spectrum {text!r}")
    kind, params = m.group(1), [p for p in (m.group(2) or "").split(",") if p]
    try:
        if kind == "flat" and not params:
            return ("flat",)
        if kind == "powerlaw" and len(params) <= 1:
            return ("powerlaw", float(params[0]) if params else 1.0)
        if kind == "hard" and len(params) == 3:
            return ("hard", int(params[0]), int(params[1]), float(params[2]))
    except ValueError:
        pass
    raise UsageError(f"bad spectrum parameters in {text!r}")


def generate_gradients(n: int, d: int, spectrum, seed: int, lam: float = 1.0) -> np.ndarray:
    """Per-example gradients whose empirical Fisher has the requested shape.

    powerlaw: coordinate j scaled by ``j^{-p/2}``; flat: standard normal;
    hard: exactly ``diag(lam 1_k, eta lam 1_{r-k}, 0)`` as ``G^T G / n``.
    """
    if n < 1 or d < 1:
        raise UsageError("n and d must be >= 1")
    gen = stream(mix(seed, "gen"))
    kind = spectrum[0]
    if kind == "flat":
        return gen.standard_normal((n, d))
    if kind == "powerlaw":
        return gen.standard_normal((n, d)) * np.arange(1.0, d + 1) ** (-spectrum[1] / 2)
    _, k, r, eta = spectrum
    if not 1 <= k <= r <= d or r > n:
        raise UsageError("hard spectrum needs 1 <= k <= r <= d and r <= n")
    Q, R = np.linalg.qr(gen.standard_normal((n, r)))
    Q = Q * np.sign(np.diag(R))
    diag = np.r_[np.full(k, lam), np.full(r - k, eta * lam)]
    G = np.zeros((n, d))
    G[:, :r] = Q * np.sqrt(n * diag)
    return G


def cmd_gen(args) -> int:
    G = generate_gradients(args.n, args.d, parse_spectrum(args.spectrum), args.seed, args.lam or 1.0)
    io.write_gradients(args.out, G)
    return 0


def fisher_eig(G, policy: RankPolicy, cap: int = DEFAULT_KRON_CAP):
    n, d = G.shape
    if d > cap:
        raise CapExceeded(f"d = {d} exceeds the dense curvature cap {cap}")
    return compact_eig(G.T @ G / n, policy)


def cmd_fisher(args) -> int:
    G = io.read_gradients(args.grads)
    eig = fisher_eig(G, RankPolicy(rel_tol=args.rank_tol), args.cap)
    io.save_curvature(args.out, eig)
    sys.stdout.write(io.json_text({"rank": eig.rank, "dim": eig.dim, "lambda_max": eig.lambda_max}))
    return 0


def cmd_kfac_load(args) -> int:
    A, E = io.read_factors(args.factors)
    pair = KroneckerPair(A, E, RankPolicy(rel_tol=args.rank_tol))
    io.save_curvature(args.out, pair)
    sys.stdout.write(io.json_text({"d_A": pair.d_A, "d_E": pair.d_E, "rank_A": pair.eig_A.rank,
                                   "rank_E": pair.eig_E.rank}))
    return 0


# ---------------------------------------------------------------- plan

def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def cmd_plan(args) -> int:
    _require(args, "lam", "eps", "delta")
    curv = io.load_curvature(args.curvature)
    if args.factorized:
        if not isinstance(curv, KroneckerPair):
            raise UsageError("--factorized needs a Kronecker curvature cache (from kfac-load)")
        report = plan_factorized(curv.eig_A, curv.eig_E, args.lam, args.eps, args.delta, args.C).to_dict()
    else:
        eig = as_eig(curv)
        report = plan_sketch_size(eig, args.lam, args.eps, args.delta, args.C).to_dict()
    _emit(io.json_text(report), args.out)
    return 0


# ---------------------------------------------------------------- sketch selection

def _sketch_from_args(args, curv, lam: float):
    if args.sketch is None:
        return None
    family, s, inner = parse_family(args.sketch)
    if family == "kron":
        if not isinstance(curv, KroneckerPair):
            raise UsageError("Kronecker sketches need a Kronecker curvature cache")
        if args.m_factors is None:
            raise UsageError("Kronecker sketches need --m-factors <m_A>,<m_E>")
        m_A, m_E = (int(x) for x in args.m_factors.split(","))
        fam_A, s_A, _ = parse_family(inner[0])
        fam_E, s_E, _ = parse_family(inner[1])
        spec = factor_specs(fam_A, fam_E, m_A, m_E, curv.d_A, curv.d_E, args.seed, s=s_A or s_E)
        return build_sketch(spec)
    eig = as_eig(curv)
    if args.m is not None:
        m = args.m
    elif args.m_mult is not None:
        if not lam > 0:
            raise UsageError("--m-mult needs --lambda > 0")
        m = max(1, math.ceil(args.m_mult * effective_dim(eig, lam)))
    else:
        raise UsageError("a sketch needs --m or --m-mult")
    return build_sketch(make_spec(family, m, eig.dim, args.seed, s=s))


def _curvature_for(args, train):
    if args.curvature:
        return io.load_curvature(args.curvature)
    return fisher_eig(train, RankPolicy())


# ---------------------------------------------------------------- attribute

def cmd_attribute(args) -> int:
    _require(args, "lam")
    train = io.read_gradients(args.train)
    test = io.read_gradients(args.test)
    curv = _curvature_for(args, train)
    sk = _sketch_from_args(args, curv, args.lam)
    scores = influence_gram(train, test, curv, args.lam, sk)
    rows = [(i, j, scores[i, j]) for i in range(scores.shape[0]) for j in range(scores.shape[1])]
    _emit(io.csv_text(("train_idx", "test_idx", "score"), rows), args.out)
    return 0


# ---------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    curv = io.load_curvature(args.curvature)
    eig = as_eig(curv)
    family, s, _ = parse_family(args.sketch or "gaussian")
    if family == "kron":
        raise UsageError("sweeps use oblivious (non-Kronecker) sketches")
    grads = io.read_gradients(args.grads) if args.grads else None
    lambdas = args.lambdas if args.lambdas else ([args.lam] if args.lam else None)
    if not lambdas:
        raise UsageError("sweep needs --lambdas or --lambda")
    rows = run_sweep(eig, lambdas, args.m_mults, args.trials or 1, args.seed, args.pairs, family, s,
                     grads, args.jobs, args.record_time)
    _emit(io.csv_text(SWEEP_HEADER, rows_as_tuples(rows)), args.out)
    return 0


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(args) -> int:
    eig = as_eig(io.load_curvature(args.curvature))
    spec_rows = [(i + 1, float(v)) for i, v in enumerate(eig.lambdas)]
    curve = [(lam, effective_dim(eig, lam)) for lam in DLAMBDA_GRID]
    spec_text = io.csv_text(("i", "lambda_i"), spec_rows)
    curve_text = io.csv_text(("lambda", "d_lambda"), curve)
    if args.out:
        io.write_text(args.out, spec_text)
        io.write_text(dlambda_path(args.out), curve_text)
    else:
        sys.stdout.write(spec_text + "\n" + curve_text)
    return 0


def dlambda_path(out) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".dlambda" + (p.suffix or ".csv"))


# ---------------------------------------------------------------- leakage

def cmd_leakage(args) -> int:
    _require(args, "lam", "eps")
    train = io.read_gradients(args.train)
    test = io.read_gradients(args.test)
    curv = _curvature_for(args, train)
    sk = _sketch_from_args(args, curv, args.lam)
    if sk is None:
        raise UsageError("leakage needs a sketch (--sketch with --m or --m-mult)")
    reports = []
    for i, g in enumerate(train):
        for j, gp in enumerate(test):
            rep = leakage_report(sk, curv, args.lam, args.eps, g, gp).to_dict()
            rep.update(train_idx=i, test_idx=j)
            reports.append(rep)
    _emit(io.json_text(reports), args.out)
    return 0


# ---------------------------------------------------------------- verify

def run_suite(suite: str, seed: int, trials: int | None = None, workers: int = 1):
    """Probe results for a named suite with the default desk-scale configs."""
    from projinf import verify as V
    from projinf.planner import default_constant

    def T(default):
        return trials if trials is not None else default

    C = default_constant()
    out = []
    if suite in ("all", "barrier"):
        out.append(V.probe_unregularized_dichotomy(V.ProbeConfig(trials=T(40), base_seed=seed, d=64, workers=workers)))
    if suite in ("all", "sandwich"):
        cfg = V.ProbeConfig(trials=T(100), base_seed=seed, epsilon=0.25, delta=0.1, C=C, workers=workers)
        for member in V.powerlaw_corpus(d=256, r=128, seed=seed):
            out.append(V.probe_sandwich(cfg, member))
            out.append(V.probe_influence_bound(cfg, member))
    if suite in ("all", "lower"):
        inst = V.HardInstance.for_epsilon(8, 16, 64, 1.0, 0.5)
        out.append(V.probe_lower_bound(inst, 32, T(500), 0.5, seed, workers=workers))
    if suite in ("all", "anti"):
        out.append(V.probe_anti_concentration(128, 32, T(2000), seed, workers=workers))
    if suite in ("all", "kfac"):
        cfg = V.ProbeConfig(trials=T(50), base_seed=seed, epsilon=0.3, delta=0.1, C=C, lam=0.05, workers=workers)
        out.append(V.probe_factorized_barrier(cfg))
        pair = V.kron_instance(8, 8, 8, 8, mix(seed, "kfac-upper-instance"), "powerlaw:1")
        out.append(V.probe_factorized_deviation(cfg, pair))
        out.append(V.probe_cross_term(cfg))
    if suite in ("all", "leakage"):
        cfg = V.ProbeConfig(trials=T(100), base_seed=seed, epsilon=0.3, delta=0.1, C=C, d=256, r=4,
                            lam=1.0, workers=workers)
        out.append(V.probe_leakage_exact(cfg.with_(d=40, r=10)))
        out.append(V.probe_leakage_bound(cfg))
        out.append(V.probe_leakage_rate(cfg))
        out.append(V.probe_factorized_leakage(cfg))
    return out


def cmd_verify(args) -> int:
    results = run_suite(args.suite, args.seed, args.trials, args.jobs)
    passed = all(r.passed for r in results)
    doc = {"suite": args.suite, "seed": args.seed, "pass": passed, "results": [r.to_dict() for r in results]}
    _emit(io.json_text(doc), args.out)
    return 0 if passed else 1


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--out", help="output path (stdout when omitted, where applicable)")
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--sketch", help="gaussian | rademacher | sjl:<s> | kron:<famA>x<famE>")
    size = common.add_mutually_exclusive_group()
    size.add_argument("--m", type=int)
    size.add_argument("--m-mult", type=float)
    common.add_argument("--m-factors", help="factor sizes m_A,m_E for Kronecker sketches")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")

    p = argparse.ArgumentParser(prog="projinf", description="Sketched influence scores: plan, attribute, verify.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen", parents=[common], help="write synthetic gradients (GRDF)")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--spectrum", default="powerlaw:1", help="powerlaw:<p> | flat | hard:<k>,<r>,<eta>")
    q.set_defaults(func=cmd_gen, needs_out=True)

    q = sub.add_parser("fisher", parents=[common], help="empirical Fisher eigendecomposition cache")
    q.add_argument("--grads", required=True)
    q.add_argument("--rank-tol", type=float, default=1e-10)
    q.add_argument("--cap", type=int, default=DEFAULT_KRON_CAP)
    q.set_defaults(func=cmd_fisher, needs_out=True)

    q = sub.add_parser("kfac-load", parents=[common], help="load Kronecker factors (KFCF) into a cache")
    q.add_argument("--factors", required=True)
    q.add_argument("--rank-tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_kfac_load, needs_out=True)

    q = sub.add_parser("plan", parents=[common], help="recommend a sketch size")
    q.add_argument("--curvature", required=True)
    q.add_argument("--C", type=float)
    q.add_argument("--factorized", action="store_true")
    q.set_defaults(func=cmd_plan)

    q = sub.add_parser("attribute", parents=[common], help="influence scores as CSV")
    q.add_argument("--train", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--curvature", help="cache; defaults to the Fisher of --train")
    q.set_defaults(func=cmd_attribute)

    q = sub.add_parser("sweep", parents=[common], help="error versus sketch size")
    q.add_argument("--curvature", required=True)
    q.add_argument("--lambdas", type=_floats)
    q.add_argument("--m-mults", type=_floats, default=[1.0, 4.0, 16.0, 64.0])
    q.add_argument("--pairs", type=int, default=200)
    q.add_argument("--grads", help="draw pairs from these gradients instead of synthetic in-range ones")
    q.add_argument("--record-time", action="store_true", help="fill wall_time_ms (output no longer byte-stable)")
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("verify", parents=[common], help="run probe suites")
    q.add_argument("--suite", default="all", choices=SUITES)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("spectrum", parents=[common], help="ordered eigenvalues and d_lambda curve")
    q.add_argument("--curvature", required=True)
    q.set_defaults(func=cmd_spectrum)

    q = sub.add_parser("leakage", parents=[common], help="leakage reports for train/test pairs")
    q.add_argument("--train", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--curvature")
    q.set_defaults(func=cmd_leakage)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "needs_out", False) and not args.out:
        parser.error(f"{args.command} needs --out")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ProjInfError, OSError, ValueError) as exc:
        print(f"projinf {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
