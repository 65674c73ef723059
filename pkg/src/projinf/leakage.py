"""Range/kernel split of test gradients and the sketch-induced leakage term.

The exact score never couples ``range(F)`` with ``ker(F)``, so
``tau(g, g'_perp) = 0``. After sketching, ``tau_sketched(g, g'_perp)`` is in
general nonzero; this module measures it and compares it to the closed-form
bounds from :mod:`projinf.planner`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from projinf.errors import DimMismatch, NumericalBreakdown, Unsupported
from projinf.influence import SketchedCurvature, as_eig, tau_exact
from projinf.linalg import DEFAULT_POLICY, CompactEigen, KroneckerPair, RankPolicy
from projinf.planner import leakage_bounds

EXACT_ZERO_TOL = 1e-9


def decompose(eig: CompactEigen, g_prime):
    """``(g_par, g_perp)`` with ``g_par = U U^T g'``."""
    g_prime = np.asarray(g_prime, dtype=np.float64)
    if g_prime.shape != (eig.dim,):
        raise DimMismatch(f"g' has shape {g_prime.shape}, expected ({eig.dim},)")
    g_par = eig.project(g_prime)
    return g_par, g_prime - g_par


@dataclass(frozen=True)
class FactorDecomposition:
    a_par: np.ndarray
    a_perp: np.ndarray
    e_par: np.ndarray
    e_perp: np.ndarray

    @property
    def g_perp(self) -> np.ndarray:
        return (np.kron(self.a_par, self.e_perp) + np.kron(self.a_perp, self.e_par)
                + np.kron(self.a_perp, self.e_perp))

    @property
    def g_par(self) -> np.ndarray:
        return np.kron(self.a_par, self.e_par)


def decompose_factorized(eig_A: CompactEigen, eig_E: CompactEigen, a_prime, e_prime) -> FactorDecomposition:
    a_par, a_perp = decompose(eig_A, a_prime)
    e_par, e_perp = decompose(eig_E, e_prime)
    return FactorDecomposition(a_par, a_perp, e_par, e_perp)


def _exact_scale(eig: CompactEigen, lam, g, g_perp):
    inv = 1.0 / lam if lam > 0 else 0.0
    if eig.rank:
        inv = max(inv, 1.0 / float(eig.lambdas[-1]))
    return np.linalg.norm(g) * np.linalg.norm(g_perp) * inv


def leakage_term(sk, F, lam: float, g, g_perp, policy: RankPolicy = DEFAULT_POLICY,
                 sketched: SketchedCurvature | None = None) -> float:
    """``tau_sketched(g, g_perp)`` after re-projecting both inputs.

    Also checks that the exact counterpart vanishes.
    """
    eig = as_eig(F, policy)
    g = eig.project(np.asarray(g, dtype=np.float64))
    given = np.asarray(g_perp, dtype=np.float64)
    g_perp = given - eig.project(given)
    exact = tau_exact(eig, lam, g, g_perp)
    # roundoff in the re-projection scales with the vector as given
    if abs(exact) > EXACT_ZERO_TOL * max(_exact_scale(eig, lam, g, given), 1e-300):
        raise NumericalBreakdown(f"exact score across range and kernel is {exact:.3e}, not 0")
    sc = sketched if sketched is not None else SketchedCurvature(sk, F, policy)
    return sc.tau(lam, g, g_perp)


def total_error_split(sk, F, lam: float, g, g_prime, policy: RankPolicy = DEFAULT_POLICY,
                      sketched: SketchedCurvature | None = None):
    """``(in_range_error, |leakage|, total_error)`` with the triangle split checked."""
    eig = as_eig(F, policy)
    g_par, g_perp = decompose(eig, g_prime)
    sc = sketched if sketched is not None else SketchedCurvature(sk, F, policy)
    in_range = abs(sc.tau(lam, g, g_par) - tau_exact(eig, lam, g, g_par))
    leak = abs(sc.tau(lam, g, g_perp))
    total = abs(sc.tau(lam, g, g_prime) - tau_exact(eig, lam, g, g_prime))
    scale = max(1.0, in_range + leak)
    if total > in_range + leak + 1e-9 * scale:
        raise NumericalBreakdown("triangle split violated")
    return in_range, leak, total


@dataclass(frozen=True)
class LeakageReport:
    norm_g_par: float
    norm_g_perp: float
    tau_exact_perp: float
    leakage_value: float
    bound_unreg: float
    bound_reg: float
    lam: float
    m: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "norm_g_par": self.norm_g_par,
            "norm_g_perp": self.norm_g_perp,
            "tau_exact_perp": self.tau_exact_perp,
            "leakage_value": self.leakage_value,
            "bound_unreg": self.bound_unreg,
            "bound_reg": self.bound_reg,
            "lambda": self.lam,
            "m": self.m,
            "seed": self.seed,
        }


def leakage_report(sk, F, lam: float, epsilon: float, g, g_prime,
                   policy: RankPolicy = DEFAULT_POLICY) -> LeakageReport:
    eig = as_eig(F, policy)
    g = eig.project(np.asarray(g, dtype=np.float64))
    g_par, g_perp = decompose(eig, g_prime)
    exact = tau_exact(eig, lam, g, g_perp)
    value = leakage_term(sk, F, lam, g, g_perp, policy)
    unreg, reg = leakage_bounds(eig, lam, epsilon, float(np.linalg.norm(g)), float(np.linalg.norm(g_perp)))
    return LeakageReport(float(np.linalg.norm(g_par)), float(np.linalg.norm(g_perp)), exact, value,
                         unreg, reg, lam, sk.m, sk.spec.seed)


def factorized_leakage(sk, pair: KroneckerPair, lam: float, g, test_grad,
                       policy: RankPolicy = DEFAULT_POLICY) -> float:
    """Leakage for a rank-one test gradient given as ``(a', e')``.

    Dense (non-factored) test gradients are rejected: the factorized
    guarantee only covers ``a' kron e'``.
    """
    if not (isinstance(test_grad, tuple) and len(test_grad) == 2):
        raise Unsupported("factorized leakage needs a rank-one test gradient (a', e')")
    dec = decompose_factorized(pair.eig_A, pair.eig_E, *test_grad)
    return leakage_term(sk, pair, lam, g, dec.g_perp, policy)
