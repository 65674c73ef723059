"""Effective dimension, sketch-size planning and closed-form leakage bounds.

Sketch sizes follow ``m = ceil(C * (d_lambda + ln(1/delta)) / eps^2)``,
clipped to the ambient dimension. ``C`` is an empirical constant; see
:func:`projinf.verify.calibrate_constant` and :func:`default_constant`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from projinf.errors import LambdaTooLarge, NonPositiveLambda, OutOfRangeParam
from projinf.linalg import DEFAULT_POLICY, CompactEigen, RankPolicy

FALLBACK_C = 16.0
CALIBRATION_FILE = "calibration.json"


def default_constant() -> float:
    """Planner constant from the shipped calibration record, else 16."""
    try:
        text = resources.files("projinf").joinpath(CALIBRATION_FILE).read_text()
        return float(json.loads(text)["C"])
    except (FileNotFoundError, KeyError, ValueError):
        return FALLBACK_C


def _spectrum(eig) -> np.ndarray:
    return eig.lambdas if isinstance(eig, CompactEigen) else np.asarray(eig, dtype=np.float64)


def effective_dim(eig, lam: float) -> float:
    """``sum_j lambda_j / (lambda_j + lam)`` over the nonzero spectrum."""
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    w = _spectrum(eig)
    return float(np.sum(w / (w + lam)))


def _check_eps_delta(epsilon, delta):
    if not 0 < epsilon < 1:
        raise OutOfRangeParam(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < delta < 1:
        raise OutOfRangeParam(f"delta must lie in (0, 1), got {delta}")


def _check_C(C):
    if not C > 0:
        raise OutOfRangeParam(f"C must be > 0, got {C}")


def raw_size(C, complexity, epsilon) -> int:
    return math.ceil(C * complexity / epsilon**2)


@dataclass(frozen=True)
class PlannerReport:
    lam: float
    d_lambda: float
    rank: int
    dim: int
    m_recommended: int
    epsilon: float
    delta: float
    calibration_C: float
    capped: bool
    m_required: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def plan_sketch_size(eig: CompactEigen, lam: float, epsilon: float, delta: float,
                     C: float | None = None) -> PlannerReport:
    _check_eps_delta(epsilon, delta)
    C = default_constant() if C is None else C
    _check_C(C)
    if lam == 0:
        # no compression below the rank is possible without regularization
        m = max(eig.rank, 1)
        return PlannerReport(0.0, float(eig.rank), eig.rank, eig.dim, m, epsilon, delta, C,
                             False, m, "unregularized: exact iff m >= rank and the sketch is injective on range(F)")
    d_lam = effective_dim(eig, lam)
    x = C * (d_lam + math.log(1 / delta)) / epsilon**2
    m = math.ceil(x)
    capped = x >= eig.dim
    return PlannerReport(float(lam), d_lam, eig.rank, eig.dim, max(1, min(m, eig.dim)),
                         epsilon, delta, C, capped, max(1, m))


@dataclass(frozen=True)
class FactorizedPlan:
    lam: float
    lambda_A: float
    lambda_E: float
    d_A_eff: float
    d_E_eff: float
    m_A: int
    m_E: int
    m: int
    epsilon: float
    delta: float
    calibration_C: float
    capped_A: bool
    capped_E: bool
    m_A_required: int = 0
    m_E_required: int = 0
    note: str = "total size m_A * m_E scales as eps^-4"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def plan_factorized(eig_A: CompactEigen, eig_E: CompactEigen, lam: float, epsilon: float,
                    delta: float, C: float | None = None) -> FactorizedPlan:
    """Factor sizes from the rescaled levels ``lam/||E||`` (for A) and ``lam/||A||`` (for E)."""
    _check_eps_delta(epsilon, delta)
    C = default_constant() if C is None else C
    _check_C(C)
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    nA, nE = eig_A.lambda_max, eig_E.lambda_max
    if nA == 0 or nE == 0 or lam > nA * nE:
        raise LambdaTooLarge(f"lambda={lam} exceeds ||A|| * ||E|| = {nA * nE}")
    lam_E, lam_A = lam / nE, lam / nA
    dA, dE = effective_dim(eig_A, lam_E), effective_dim(eig_E, lam_A)
    log_term = math.log(1 / delta)
    xA = C * (dA + log_term) / epsilon**2
    xE = C * (dE + log_term) / epsilon**2
    cA, cE = xA >= eig_A.dim, xE >= eig_E.dim
    rA, rE = math.ceil(xA), math.ceil(xE)
    mA, mE = min(rA, eig_A.dim), min(rE, eig_E.dim)
    return FactorizedPlan(float(lam), lam_A, lam_E, dA, dE, mA, mE, mA * mE,
                          epsilon, delta, C, cA, cE, rA, rE)


def leakage_bounds(eig: CompactEigen, lam: float, epsilon: float, norm_g: float, norm_gperp: float):
    """``(unregularized, regularized)`` leakage bounds.

    unregularized: ``eps |g| |g'_perp| / lambda_min^+``, infinite at rank 0;
    regularized: ``eps |g| |g'_perp| (1/lam + 2 ||F|| / lam^2)``.
    """
    if norm_g < 0 or norm_gperp < 0:
        raise OutOfRangeParam("norms must be nonnegative")
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    base = epsilon * norm_g * norm_gperp
    if eig.rank == 0:
        unreg = math.inf if base > 0 else 0.0
    else:
        unreg = base / float(eig.lambdas[-1])
    reg = base * (1.0 / lam + 2.0 * eig.lambda_max / lam**2)
    return unreg, reg


@dataclass(frozen=True)
class LeakagePlan:
    m: int
    regime: str
    complexity: float


def plan_leakage_sketch_size(rank: int, k: int, k_prime: int, epsilon: float, delta: float,
                             C: float | None = None) -> LeakagePlan:
    """``ceil(C (r + min(ln(k/delta), k' + ln(1/delta))) / eps^2)``.

    ``union`` is a union bound over the k test gradients; ``subspace``
    covers the span of their kernel components at once.
    """
    _check_eps_delta(epsilon, delta)
    C = default_constant() if C is None else C
    _check_C(C)
    if k < 1 or not 0 <= k_prime <= k or rank < 0:
        raise OutOfRangeParam(f"need k >= 1, 0 <= k' <= k, rank >= 0 (k={k}, k'={k_prime}, rank={rank})")
    union = math.log(k / delta)
    subspace = k_prime + math.log(1 / delta)
    regime = "union" if union <= subspace else "subspace"
    complexity = rank + min(union, subspace)
    return LeakagePlan(raw_size(C, complexity, epsilon), regime, complexity)


def kernel_span_dim(eig: CompactEigen, test_grads, policy: RankPolicy = DEFAULT_POLICY) -> int:
    """Numerical rank of the stacked kernel components of the test gradients."""
    Y = np.atleast_2d(np.asarray(test_grads, dtype=np.float64))
    perp = Y - (Y @ eig.U) @ eig.U.T
    if perp.size == 0:
        return 0
    s = np.linalg.svd(perp, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s**2 > policy.cutoff(s[0] ** 2)))


def plan_factorized_leakage(eig_A: CompactEigen, eig_E: CompactEigen, a_primes, e_primes,
                            epsilon: float, delta: float, C: float | None = None,
                            policy: RankPolicy = DEFAULT_POLICY):
    """Factor sizes for leakage control with rank-one test gradients ``a'_j kron e'_j``.

    Each factor uses its own rank, the count of test factors with a kernel
    part, and the span dimension of those kernel parts.
    """
    plans = []
    for eig, vecs in ((eig_A, a_primes), (eig_E, e_primes)):
        V = np.atleast_2d(np.asarray(vecs, dtype=np.float64))
        perp = V - (V @ eig.U) @ eig.U.T
        norms = np.linalg.norm(perp, axis=1)
        scale = max(float(np.max(np.linalg.norm(V, axis=1))), 1e-300)
        k = max(1, int(np.sum(norms > 1e-12 * scale)))
        k_prime = min(k, kernel_span_dim(eig, V, policy))
        plans.append(plan_leakage_sketch_size(eig.rank, k, k_prime, epsilon, delta, C))
    return plans[0], plans[1]
