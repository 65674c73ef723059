"""Seeded probes for every guarantee about sketched influence.

Each probe draws independent trials whose seeds are
``mix(base_seed, probe_id, trial)``; a trial is a pure function of its seed.
Statistical probes compare an empirical failure rate with
``delta + 2 sqrt(delta / T)``; deterministic implications must hold on
every trial.
"""
from __future__ import annotations

import math
from functools import partial

import numpy as np

from projinf.errors import LambdaTooLarge, RegimeViolation
from projinf.influence import SketchedCurvature, self_norm, tau_exact
from projinf.leakage import decompose, decompose_factorized
from projinf.linalg import CompactEigen, KroneckerPair, kron_eig
from projinf.planner import (
    effective_dim,
    leakage_bounds,
    kernel_span_dim,
    plan_factorized,
    plan_factorized_leakage,
    plan_leakage_sketch_size,
    plan_sketch_size,
)
from projinf.seeding import mix, stream
from projinf.sketch import apply, build_sketch, factor_specs, make_spec
from projinf.verify.core import ProbeConfig, ProbeResult, failure_threshold, run_trials, trial_seed
from projinf.verify.instances import CorpusMember, HardInstance, in_range_vectors, kron_instance, psd_eig

EXACT_TOL = 1e-8
VIOLATION_RATIO = 1e-9
MIN_SELF_NORM = 0.1


def _seeds(cfg: ProbeConfig, probe_id: str, n: int | None = None):
    return [trial_seed(cfg.base_seed, probe_id, t) for t in range(cfg.trials if n is None else n)]


def _spec_norm_sym(M) -> float:
    M = 0.5 * (M + M.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(M)))) if M.size else 0.0


def _normalized(eig, sc, lam, g, gp):
    err = abs(sc.tau(lam, g, gp) - tau_exact(eig, lam, g, gp))
    return err / math.sqrt(self_norm(eig, g) * self_norm(eig, gp))


def _null_vector(M) -> np.ndarray:
    """Unit vector in the null space of a wide matrix."""
    _, _, Vt = np.linalg.svd(M)
    return Vt[-1]


# ---------------------------------------------------------------- rank barrier

def _barrier_trial(cfg: ProbeConfig, pairs: int, seed: int):
    inst_seed = mix(seed, "instance")
    r = 4 + inst_seed % 29
    eig = psd_eig(cfg.d, r, inst_seed, cfg.spectrum)
    sk = build_sketch(make_spec(cfg.family, r, cfg.d, mix(seed, "full")))
    sc = SketchedCurvature(sk, eig)
    X = in_range_vectors(eig, 2 * pairs, mix(seed, "pairs"))
    worst = max(_normalized(eig, sc, 0.0, X[2 * i], X[2 * i + 1]) for i in range(pairs))

    sk = build_sketch(make_spec(cfg.family, r - 1, cfg.d, mix(seed, "deficient")))
    z = _null_vector(apply(sk, eig.U))
    g = eig.U @ z
    tau0 = self_norm(eig, g)
    tau_sk = SketchedCurvature(sk, eig).tau(0.0, g, g)
    violated = tau0 >= MIN_SELF_NORM and tau_sk <= VIOLATION_RATIO * tau0
    return int(r), float(worst), bool(violated), float(tau0), float(tau_sk)


def probe_unregularized_dichotomy(cfg: ProbeConfig, pairs: int = 50) -> ProbeResult:
    """At ``m = r`` unregularized scores are exact; at ``m = r - 1`` a gradient
    with positive self-norm is mapped to zero."""
    seeds = _seeds(cfg, "barrier")
    rows = run_trials(partial(_barrier_trial, cfg, pairs), seeds, cfg.workers)
    worst = max(r[1] for r in rows)
    violations = sum(r[2] for r in rows)
    passed = worst <= EXACT_TOL and violations == len(rows)
    return ProbeResult("barrier", passed, worst, EXACT_TOL, len(rows), seeds, [r[1] for r in rows],
                       {"violation_rate": violations / len(rows), "ranks": [r[0] for r in rows],
                        "max_violation_ratio": max(r[4] / r[3] for r in rows)})


# ---------------------------------------------------------------- regularized upper bound

def _planned_m(member: CorpusMember, cfg: ProbeConfig) -> int:
    return plan_sketch_size(member.eig, member.lam, cfg.epsilon, cfg.delta, cfg.C).m_required


def sandwich_terms(eig: CompactEigen, lam: float, PU) -> tuple[float, float]:
    """``(||B^T (P^T P - I) B||, ||F(F+lam)^-1 - G(G+lam)^-1||)`` computed in range(F)."""
    l = eig.lambdas
    h = l / (l + lam)
    X = PU * np.sqrt(h)
    first = _spec_norm_sym(X.T @ X - np.diag(h))
    Y = PU * np.sqrt(l)
    K = Y.T @ Y
    H = np.linalg.solve(K + lam * np.eye(len(l)), K)
    second = _spec_norm_sym(np.diag(h) - H)
    return first, second


def _sandwich_trial(member: CorpusMember, cfg: ProbeConfig, m: int, seed: int):
    sk = build_sketch(make_spec(cfg.family, m, member.eig.dim, seed))
    return sandwich_terms(member.eig, member.lam, apply(sk, member.eig.U))


def probe_sandwich(cfg: ProbeConfig, member: CorpusMember, m: int | None = None) -> ProbeResult:
    """Failure event: whitened deviation above ``eps/2``. The resolvent gap must
    obey ``gap <= 2 dev / (1 - dev)`` whenever ``dev < 1``."""
    m = _planned_m(member, cfg) if m is None else m
    seeds = _seeds(cfg, f"sandwich/{member.name}")
    rows = run_trials(partial(_sandwich_trial, member, cfg, m), seeds, cfg.workers)
    implication = all(s <= 2 * f / (1 - f) + 1e-12 for f, s in rows if f < 1)
    rate = float(np.mean([f > cfg.epsilon / 2 for f, _ in rows]))
    thr = failure_threshold(cfg.delta, len(rows))
    return ProbeResult(f"sandwich/{member.name}", implication and rate <= thr, rate, thr, len(rows), seeds,
                       [f for f, _ in rows],
                       {"m": m, "lambda": member.lam, "d_lambda": member.d_lambda,
                        "implication_holds": implication, "max_gap": max(s for _, s in rows)})


def _influence_trial(member: CorpusMember, cfg: ProbeConfig, m: int, seed: int):
    sk = build_sketch(make_spec(cfg.family, m, member.eig.dim, seed))
    g, gp = in_range_vectors(member.eig, 2, mix(seed, "pair"))
    return _normalized(member.eig, SketchedCurvature(sk, member.eig), member.lam, g, gp)


def _influence_pairs_trial(member: CorpusMember, cfg: ProbeConfig, m: int, pairs: int, seed: int):
    sk = build_sketch(make_spec(cfg.family, m, member.eig.dim, seed))
    sc = SketchedCurvature(sk, member.eig)
    X = in_range_vectors(member.eig, 2 * pairs, mix(seed, "pairs"))
    return [_normalized(member.eig, sc, member.lam, X[2 * i], X[2 * i + 1]) for i in range(pairs)]


def probe_influence_bound(cfg: ProbeConfig, member: CorpusMember, m: int | None = None) -> ProbeResult:
    """Failure event: normalized influence error above ``eps`` for a random in-range pair."""
    m = _planned_m(member, cfg) if m is None else m
    seeds = _seeds(cfg, f"influence/{member.name}")
    errs = run_trials(partial(_influence_trial, member, cfg, m), seeds, cfg.workers)
    rate = float(np.mean([e > cfg.epsilon for e in errs]))
    thr = failure_threshold(cfg.delta, len(errs))
    return ProbeResult(f"influence/{member.name}", rate <= thr, rate, thr, len(errs), seeds, errs,
                       {"m": m, "lambda": member.lam, "d_lambda": member.d_lambda,
                        "p95": float(np.percentile(errs, 95))})


def probe_error_rate(cfg: ProbeConfig, member: CorpusMember, multipliers=(2, 8), factor: int = 4,
                     band=(0.35, 0.72), pairs: int = 10) -> ProbeResult:
    """Median normalized error at ``factor * m`` over median at ``m``; expected near
    ``factor^{-1/2}``. Each trial draws one sketch and ``pairs`` gradient pairs."""
    base = math.ceil(member.d_lambda)
    ratios, seeds_all = {}, []
    for mult in multipliers:
        meds = []
        for m in (mult * base, factor * mult * base):
            seeds = _seeds(cfg, f"rate/{member.name}/{m}")
            seeds_all += seeds
            errs = run_trials(partial(_influence_pairs_trial, member, cfg, m, pairs), seeds, cfg.workers)
            meds.append(float(np.median(np.concatenate(errs))))
        ratios[str(mult * base)] = meds[1] / meds[0]
    vals = list(ratios.values())
    passed = all(band[0] <= v <= band[1] for v in vals)
    worst = max(vals, key=lambda v: abs(math.log(v / factor**-0.5)))
    return ProbeResult(f"rate/{member.name}", passed, worst, band[1], cfg.trials, seeds_all, vals,
                       {"ratios": ratios, "band": list(band), "d_lambda": member.d_lambda})


# ---------------------------------------------------------------- lower bound

def _lower_trial(inst: HardInstance, m: int, eig: CompactEigen, seed: int):
    sk = build_sketch(make_spec("gaussian", m, inst.d, seed))
    P_L = sk.matrix[:, : inst.k]
    w, V = np.linalg.eigh(P_L.T @ P_L)
    y = V[:, int(np.argmax(np.abs(w - 1)))]
    g = inst.gradient(y)
    tau = tau_exact(eig, inst.lam, g, g)
    tau_sk = SketchedCurvature(sk, eig).tau(inst.lam, g, g)
    return abs(tau_sk - tau), tau


def probe_lower_bound(inst: HardInstance, m: int, trials: int, epsilon: float, base_seed: int = 0,
                      min_frequency: float = 0.02, workers: int = 1) -> ProbeResult:
    """Frequency of error at least ``eps/32`` on the hard instance, using the
    eigenvector of ``P_L^T P_L`` farthest from 1 as the witness direction."""
    if not math.isclose(inst.eta, epsilon / 288, rel_tol=1e-12):
        raise RegimeViolation(f"eta must be eps/288 = {epsilon / 288}, got {inst.eta}")
    if m > inst.k / epsilon**2:
        raise RegimeViolation(f"m = {m} exceeds k / eps^2 = {inst.k / epsilon**2}")
    if inst.r - inst.k > m:
        raise RegimeViolation(f"r - k = {inst.r - inst.k} exceeds m = {m}")
    seeds = [trial_seed(base_seed, "lower", t) for t in range(trials)]
    rows = run_trials(partial(_lower_trial, inst, m, inst.eig), seeds, workers)
    freq = float(np.mean([e >= epsilon / 32 for e, _ in rows]))
    return ProbeResult("lower", freq >= min_frequency, freq, min_frequency, trials, seeds,
                       [e for e, _ in rows],
                       {"m": m, "d_lambda": effective_dim(inst.eig, inst.lam),
                        "max_tau_deviation": max(abs(t - 0.5) for _, t in rows)})


# ---------------------------------------------------------------- anti-concentration

def _anti_trial(m: int, k: int, seed: int):
    W = stream(seed).standard_normal((m, k))
    D = W.T @ W / m - np.eye(k)
    return _spec_norm_sym(D), float(np.sum(D * D))


def probe_anti_concentration(m: int, k: int, trials: int, base_seed: int = 0,
                             min_frequency: float = 0.02, moment_tol: float = 0.15,
                             workers: int = 1) -> ProbeResult:
    """``S = W^T W / m``: frequency of ``||S - I|| >= sqrt(k/m)/2`` and the mean of
    ``||S - I||_F^2`` against ``k(k+1)/m``."""
    seeds = [trial_seed(base_seed, "anti", t) for t in range(trials)]
    rows = run_trials(partial(_anti_trial, m, k), seeds, workers)
    level = 0.5 * math.sqrt(k / m)
    freq = float(np.mean([op >= level for op, _ in rows]))
    target = k * (k + 1) / m
    mean_fro = float(np.mean([f for _, f in rows]))
    moment_ok = abs(mean_fro / target - 1) <= moment_tol
    return ProbeResult("anti", freq >= min_frequency and moment_ok, freq, min_frequency, trials, seeds,
                       [op for op, _ in rows],
                       {"frobenius_mean": mean_fro, "frobenius_target": target, "moment_ok": moment_ok})


# ---------------------------------------------------------------- factorized barrier

QUADRANTS = ((0, 0), (1, 0), (0, 1), (1, 1))


def _kron_barrier_trial(cfg: ProbeConfig, dims, pairs: int, seed: int):
    d_A, r_A, d_E, r_E = dims
    pair = kron_instance(d_A, r_A, d_E, r_E, mix(seed, "instance"), cfg.spectrum)
    eig = kron_eig(pair)
    UA, UE = pair.eig_A.U, pair.eig_E.U
    out = []
    for q, (defA, defE) in enumerate(QUADRANTS):
        spec = factor_specs(cfg.family, cfg.family, r_A - defA, r_E - defE, d_A, d_E, mix(seed, "quadrant", q))
        sk = build_sketch(spec)
        sc = SketchedCurvature(sk, pair)
        if not (defA or defE):
            X = in_range_vectors(eig, 2 * pairs, mix(seed, "pairs"))
            worst = max(_normalized(eig, sc, 0.0, X[2 * i], X[2 * i + 1]) for i in range(pairs))
            out.append((worst <= EXACT_TOL, worst))
            continue
        gen = stream(mix(seed, "partner", q))
        if defA:
            a = UA @ _null_vector(apply(sk.factors[0], UA))
            e = UE @ gen.standard_normal(r_E)
        else:
            a = UA @ gen.standard_normal(r_A)
            e = UE @ _null_vector(apply(sk.factors[1], UE))
        g = np.kron(a, e)
        tau0 = self_norm(eig, g)
        ratio = sc.tau(0.0, g, g) / tau0
        out.append((tau0 > 0 and ratio <= VIOLATION_RATIO, ratio))
    return out


def probe_factorized_barrier(cfg: ProbeConfig, d_A=8, r_A=3, d_E=8, r_E=4, pairs: int = 20) -> ProbeResult:
    """Exact at ``(m_A, m_E) = (r_A, r_E)``; one deficient factor already admits a
    gradient with zero sketched score."""
    seeds = _seeds(cfg, "kfac-barrier")
    rows = run_trials(partial(_kron_barrier_trial, cfg, (d_A, r_A, d_E, r_E), pairs), seeds, cfg.workers)
    per_quadrant = [float(np.mean([row[q][0] for row in rows])) for q in range(4)]
    conform = min(per_quadrant)
    return ProbeResult("kfac-barrier", conform == 1.0, conform, 1.0, len(rows), seeds,
                       [row[0][1] for row in rows],
                       {"quadrant_conformance": dict(zip(["full", "A-deficient", "E-deficient", "both-deficient"],
                                                         per_quadrant))})


# ---------------------------------------------------------------- factorized upper bound

def deviation_split(pair: KroneckerPair, lam: float, P_A, P_E):
    """``(T1, T2, T3, total)``: whitened norms of ``D_A kron I``, ``I kron D_E``,
    ``D_A kron D_E`` and of their sum ``P^T P - I``."""
    eig = kron_eig(pair)
    B = (eig.U * np.sqrt(eig.lambdas / (eig.lambdas + lam))) @ eig.U.T
    DA = P_A.T @ P_A - np.eye(pair.d_A)
    DE = P_E.T @ P_E - np.eye(pair.d_E)
    terms = [np.kron(DA, np.eye(pair.d_E)), np.kron(np.eye(pair.d_A), DE), np.kron(DA, DE)]
    T = [_spec_norm_sym(B @ M @ B) for M in terms]
    total = _spec_norm_sym(B @ (terms[0] + terms[1] + terms[2]) @ B)
    return T[0], T[1], T[2], total


def _kron_upper_trial(pair: KroneckerPair, cfg: ProbeConfig, sizes, seed: int):
    m_A, m_E = sizes
    sk = build_sketch(factor_specs(cfg.family, cfg.family, m_A, m_E, pair.d_A, pair.d_E, seed))
    T1, T2, T3, total = deviation_split(pair, cfg.lam, sk.factors[0].dense(), sk.factors[1].dense())
    eig = kron_eig(pair)
    g, gp = in_range_vectors(eig, 2, mix(seed, "pair"))
    err = _normalized(eig, SketchedCurvature(sk, pair), cfg.lam, g, gp)
    return T1, T2, T3, total, err


def probe_factorized_deviation(cfg: ProbeConfig, pair: KroneckerPair) -> ProbeResult:
    """Planned factor sizes: influence error above ``eps`` is the failure event;
    ``total <= T1 + T2 + T3`` must hold on every trial. Also reports how often
    the whitened deviation exceeds ``2 eps + 3 eps^2``."""
    try:
        plan = plan_factorized(pair.eig_A, pair.eig_E, cfg.lam, cfg.epsilon, cfg.delta, cfg.C)
    except LambdaTooLarge as exc:
        raise RegimeViolation(str(exc)) from exc
    sizes = (plan.m_A_required, plan.m_E_required)
    seeds = _seeds(cfg, "kfac-upper")
    rows = run_trials(partial(_kron_upper_trial, pair, cfg, sizes), seeds, cfg.workers)
    split_ok = all(t <= a + b + c + 1e-10 * max(1.0, a + b + c) for a, b, c, t, _ in rows)
    eps = cfg.epsilon
    rate = float(np.mean([r[4] > eps for r in rows]))
    dev_rate = float(np.mean([r[3] > 2 * eps + 3 * eps**2 for r in rows]))
    thr = failure_threshold(cfg.delta, len(rows))
    return ProbeResult("kfac-upper", split_ok and rate <= thr and dev_rate <= thr, rate, thr, len(rows),
                       seeds, [r[4] for r in rows],
                       {"m_A": sizes[0], "m_E": sizes[1], "split_holds": split_ok,
                        "deviation_failure_rate": dev_rate, "lambda_A": plan.lambda_A,
                        "lambda_E": plan.lambda_E, "max_total": max(r[3] for r in rows)})


def _cross_trial(cfg: ProbeConfig, dims, sizes, seed: int):
    d_A, r_A, d_E, r_E = dims
    pair = kron_instance(d_A, r_A, d_E, r_E, mix(seed, "instance"), cfg.spectrum)
    gen = stream(mix(seed, "test"))
    dec = decompose_factorized(pair.eig_A, pair.eig_E, gen.standard_normal(d_A), gen.standard_normal(d_E))
    sk = build_sketch(factor_specs(cfg.family, cfg.family, sizes[0], sizes[1], d_A, d_E, seed))
    PA, PE = sk.factors[0].dense(), sk.factors[1].dense()
    return cross_term_check(pair, dec, PA, PE)


def cross_term_check(pair: KroneckerPair, dec, P_A, P_E):
    """``(cross, bound)`` with ``cross = ||U^T (P^T P - I) g'_perp||`` and the bound
    built from the measured factor primitives."""
    UA, UE = pair.eig_A.U, pair.eig_E.U
    DA = P_A.T @ P_A - np.eye(pair.d_A)
    DE = P_E.T @ P_E - np.eye(pair.d_E)
    ratios = []
    for U, D, x in ((UA, DA, dec.a_par), (UA, DA, dec.a_perp), (UE, DE, dec.e_par), (UE, DE, dec.e_perp)):
        nx = np.linalg.norm(x)
        if nx > 0:
            ratios.append(np.linalg.norm(U.T @ D @ x) / nx)
    eps = max(ratios) if ratios else 0.0
    g_perp = dec.g_perp
    PtP = np.kron(P_A.T @ P_A, P_E.T @ P_E)
    cross = float(np.linalg.norm(np.kron(UA, UE).T @ (PtP @ g_perp - g_perp)))
    na, nap = np.linalg.norm(dec.a_par), np.linalg.norm(dec.a_perp)
    ne, nep = np.linalg.norm(dec.e_par), np.linalg.norm(dec.e_perp)
    bound = (2 * eps + 3 * eps**2) * (na * nep + nap * ne + nap * nep)
    return cross, float(bound)


def probe_cross_term(cfg: ProbeConfig, d_A=6, r_A=3, d_E=5, r_E=2, m_A=12, m_E=10) -> ProbeResult:
    """The cross-term bound from measured factor primitives holds on every trial."""
    seeds = _seeds(cfg, "kfac-cross")
    rows = run_trials(partial(_cross_trial, cfg, (d_A, r_A, d_E, r_E), (m_A, m_E)), seeds, cfg.workers)
    ok = [c <= b + 1e-9 for c, b in rows]
    worst = max((c / b if b > 0 else 0.0) for c, b in rows)
    return ProbeResult("kfac-cross", all(ok), worst, 1.0, len(rows), seeds, [c for c, _ in rows],
                       {"holds_fraction": float(np.mean(ok))})


# ---------------------------------------------------------------- leakage

LEAK_LAMBDAS = (0.0, 1e-3, 1.0, 10.0)


def _leak_exact_trial(cfg: ProbeConfig, seed: int):
    eig = psd_eig(cfg.d, cfg.r, mix(seed, "instance"), cfg.spectrum)
    g = in_range_vectors(eig, 1, mix(seed, "g"))[0]
    _, g_perp = decompose(eig, stream(mix(seed, "test")).standard_normal(cfg.d))
    worst = 0.0
    for lam in LEAK_LAMBDAS:
        inv = max(1.0 / lam if lam > 0 else 0.0, 1.0 / float(eig.lambdas[-1]))
        scale = np.linalg.norm(g) * np.linalg.norm(g_perp) * inv
        worst = max(worst, abs(tau_exact(eig, lam, g, g_perp)) / scale)
    return worst


def probe_leakage_exact(cfg: ProbeConfig) -> ProbeResult:
    """Exact scores never couple range and kernel."""
    seeds = _seeds(cfg, "leak-exact")
    vals = run_trials(partial(_leak_exact_trial, cfg), seeds, cfg.workers)
    worst = max(vals)
    return ProbeResult("leak-exact", worst <= 1e-9, worst, 1e-9, len(vals), seeds, vals, {})


def _leak_bound_trial(eig: CompactEigen, cfg: ProbeConfig, k: int, m: int, seed: int):
    sk = build_sketch(make_spec(cfg.family, m, eig.dim, seed))
    sc = SketchedCurvature(sk, eig)
    g = in_range_vectors(eig, 1, mix(seed, "g"))[0]
    Y = stream(mix(seed, "tests")).standard_normal((k, eig.dim))
    worst = 0.0
    for y in Y:
        _, gp = decompose(eig, y)
        _, reg = leakage_bounds(eig, cfg.lam, cfg.epsilon, np.linalg.norm(g), np.linalg.norm(gp))
        worst = max(worst, float(abs(sc.tau(cfg.lam, g, gp)) / reg))
    return worst


def probe_leakage_bound(cfg: ProbeConfig, k: int = 32) -> ProbeResult:
    """With the leakage-planned size, every one of ``k`` test gradients must stay
    within the regularized leakage bound; failure is any exceedance."""
    eig = psd_eig(cfg.d, cfg.r, mix(cfg.base_seed, "leak-instance"), cfg.spectrum)
    Y = stream(mix(cfg.base_seed, "leak-kprime")).standard_normal((k, cfg.d))
    plan = plan_leakage_sketch_size(eig.rank, k, kernel_span_dim(eig, Y), cfg.epsilon, cfg.delta, cfg.C)
    seeds = _seeds(cfg, "leak-bound")
    vals = run_trials(partial(_leak_bound_trial, eig, cfg, k, plan.m), seeds, cfg.workers)
    rate = float(np.mean([v > 1 for v in vals]))
    thr = failure_threshold(cfg.delta, len(vals))
    return ProbeResult("leak-bound", rate <= thr, rate, thr, len(vals), seeds, vals,
                       {"m": plan.m, "regime": plan.regime, "max_ratio": max(vals)})


def _leak_value_trial(eig: CompactEigen, cfg: ProbeConfig, m: int, seed: int):
    sk = build_sketch(make_spec(cfg.family, m, eig.dim, seed))
    g = in_range_vectors(eig, 1, mix(seed, "g"))[0]
    _, gp = decompose(eig, stream(mix(seed, "test")).standard_normal(eig.dim))
    return abs(SketchedCurvature(sk, eig).tau(cfg.lam, g, gp))


def probe_leakage_rate(cfg: ProbeConfig, m: int = 32, factor: int = 4, band=(0.35, 0.72)) -> ProbeResult:
    """Median leakage at ``factor * m`` over the median at ``m``."""
    eig = psd_eig(cfg.d, cfg.r, mix(cfg.base_seed, "leak-instance"), cfg.spectrum)
    meds, seeds_all = [], []
    for size in (m, factor * m):
        seeds = _seeds(cfg, f"leak-rate/{size}")
        seeds_all += seeds
        meds.append(float(np.median(run_trials(partial(_leak_value_trial, eig, cfg, size), seeds, cfg.workers))))
    ratio = meds[1] / meds[0]
    return ProbeResult("leak-rate", band[0] <= ratio <= band[1], ratio, band[1], cfg.trials, seeds_all, meds,
                       {"band": list(band), "m": [m, factor * m]})


def _kron_leak_trial(pair: KroneckerPair, cfg: ProbeConfig, tests, sizes, seed: int):
    eig = kron_eig(pair)
    sk = build_sketch(factor_specs(cfg.family, cfg.family, sizes[0], sizes[1], pair.d_A, pair.d_E, seed))
    sc = SketchedCurvature(sk, pair)
    g = in_range_vectors(eig, 1, mix(seed, "g"))[0]
    worst = 0.0
    for a, e in tests:
        gp = decompose_factorized(pair.eig_A, pair.eig_E, a, e).g_perp
        _, reg = leakage_bounds(eig, cfg.lam, cfg.epsilon, np.linalg.norm(g), np.linalg.norm(gp))
        worst = max(worst, float(abs(sc.tau(cfg.lam, g, gp)) / reg))
    return worst


def probe_factorized_leakage(cfg: ProbeConfig, d_A=8, r_A=3, d_E=8, r_E=4, k: int = 8) -> ProbeResult:
    """Rank-one test gradients ``a' kron e'`` against Kronecker curvature and sketch."""
    pair = kron_instance(d_A, r_A, d_E, r_E, mix(cfg.base_seed, "kfac-leak-instance"), cfg.spectrum)
    gen = stream(mix(cfg.base_seed, "kfac-leak-tests"))
    tests = [(gen.standard_normal(d_A), gen.standard_normal(d_E)) for _ in range(k)]
    plan_A, plan_E = plan_factorized_leakage(pair.eig_A, pair.eig_E, [a for a, _ in tests],
                                             [e for _, e in tests], cfg.epsilon, cfg.delta, cfg.C)
    sizes = (plan_A.m, plan_E.m)
    seeds = _seeds(cfg, "kfac-leak")
    vals = run_trials(partial(_kron_leak_trial, pair, cfg, tests, sizes), seeds, cfg.workers)
    rate = float(np.mean([v > 1 for v in vals]))
    thr = failure_threshold(cfg.delta, len(vals))
    return ProbeResult("kfac-leak", rate <= thr, rate, thr, len(vals), seeds, vals,
                       {"m_A": sizes[0], "m_E": sizes[1], "regime_A": plan_A.regime,
                        "regime_E": plan_E.regime, "max_ratio": max(vals)})
