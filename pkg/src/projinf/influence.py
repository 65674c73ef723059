"""Exact and sketched influence scores.

``tau(g, g') = g^T (F + lam I)^{-1} g'`` with the pseudoinverse at ``lam = 0``.
The sketched score replaces F by ``P F P^T`` and the gradients by ``P g``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from projinf.errors import DimMismatch, NonPositiveLambda, NumericalBreakdown
from projinf.linalg import (
    DEFAULT_POLICY,
    CompactEigen,
    KroneckerPair,
    RankPolicy,
    compact_eig,
    kron_eig,
    resolvent_apply,
)
from projinf.sketch import RealizedSketch, SketchSpec, apply, build_sketch

SELF_NORM_FLOOR = 1e-14


def _check_lambda(lam):
    if not lam >= 0:
        raise NonPositiveLambda(f"lambda must be >= 0, got {lam}")


def as_eig(F, policy: RankPolicy = DEFAULT_POLICY) -> CompactEigen:
    """Compact eigendecomposition of any supported curvature operator."""
    if isinstance(F, CompactEigen):
        return F
    if isinstance(F, KroneckerPair):
        return kron_eig(F)
    return compact_eig(F, policy)


def tau_exact(eig: CompactEigen, lam: float, g, g_prime) -> float:
    _check_lambda(lam)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (eig.dim,):
        raise DimMismatch(f"g has shape {g.shape}, expected ({eig.dim},)")
    return float(g @ resolvent_apply(eig, lam, g_prime))


def self_norm(eig: CompactEigen, g) -> float:
    """``tau_0(g, g)`` of the range-projected gradient."""
    c = eig.U.T @ np.asarray(g, dtype=np.float64)
    return float(np.sum(c * c / eig.lambdas))


def sketched_gram_eigh(sk: RealizedSketch, eig: CompactEigen, policy: RankPolicy = DEFAULT_POLICY):
    """Full eigendecomposition ``(w, V)`` of ``P F P^T`` (descending, m entries).

    Computed from the SVD of ``Y = P U diag(sqrt(lambdas))`` so that the
    sketched spectrum keeps the conditioning of ``Y`` rather than its square.
    Eigenvalues at or below the policy cutoff (relative to the sketched
    spectrum's own maximum) are set to zero.
    """
    Y = apply(sk, eig.U) * np.sqrt(eig.lambdas)
    if not np.all(np.isfinite(Y)):
        raise NumericalBreakdown("non-finite sketched curvature factor")
    m = sk.m
    if Y.shape[1] == 0:
        return np.zeros(m), np.eye(m)
    Q, s, _ = np.linalg.svd(Y, full_matrices=True)
    w = np.zeros(m)
    w[: len(s)] = s * s
    cut = policy.cutoff(w[0]) if w[0] > 0 else 0.0
    w[w <= cut] = 0.0
    return w, Q


class SketchedCurvature:
    """Eigendecomposed ``P F P^T``, reusable across gradients and lambdas.

    Dense sketches use one ``m x m`` eigenbasis. A Kronecker sketch
    against Kronecker curvature keeps the two sketched factors separate and
    works in their product eigenbasis.
    """

    def __init__(self, sk: RealizedSketch, F, policy: RankPolicy = DEFAULT_POLICY):
        self.sk = sk
        self.policy = policy
        self.factored = isinstance(F, KroneckerPair) and sk.is_kron
        if self.factored:
            pa, pe = sk.factors
            if (pa.d, pe.d) != (F.d_A, F.d_E):
                raise DimMismatch("factor sketch dims do not match curvature factors")
            self.w_A, self.V_A = sketched_gram_eigh(pa, F.eig_A, policy)
            self.w_E, self.V_E = sketched_gram_eigh(pe, F.eig_E, policy)
            self.m_A, self.m_E = len(self.w_A), len(self.w_E)
        else:
            eig = as_eig(F, policy)
            if eig.dim != sk.d:
                raise DimMismatch(f"curvature dim {eig.dim} != sketch dim {sk.d}")
            self.w, self.V = sketched_gram_eigh(sk, eig, policy)

    def project(self, v):
        return apply(self.sk, v)

    def _coef(self, pv):
        # coordinates of sketched vectors in the sketched eigenbasis
        if not self.factored:
            return self.V.T @ pv
        H = pv.reshape(self.m_A, self.m_E, -1)
        return np.einsum("ai,abk,bj->ijk", self.V_A, H, self.V_E, optimize=True).reshape(len(pv), -1)

    def _weights(self, lam):
        if self.factored:
            w = np.outer(self.w_A, self.w_E).ravel()
        else:
            w = self.w
        if lam > 0:
            return 1.0 / (w + lam)
        out = np.zeros_like(w)
        pos = w > 0
        out[pos] = 1.0 / w[pos]
        return out

    def bilinear(self, lam: float, pg, pg_prime):
        """Scores between sketched vectors; blocks give a matrix."""
        _check_lambda(lam)
        pg = np.asarray(pg, dtype=np.float64)
        pgp = np.asarray(pg_prime, dtype=np.float64)
        vec = pg.ndim == 1 and pgp.ndim == 1
        a = self._coef(pg.reshape(len(pg), -1))
        b = self._coef(pgp.reshape(len(pgp), -1))
        out = (a * self._weights(lam)[:, None]).T @ b
        if not np.all(np.isfinite(out)):
            raise NumericalBreakdown("non-finite sketched influence")
        return float(out[0, 0]) if vec else out

    def tau(self, lam: float, g, g_prime) -> float:
        return self.bilinear(lam, self.project(g), self.project(g_prime))


def _realize(sk):
    return build_sketch(sk) if isinstance(sk, SketchSpec) else sk


def tau_sketched(sk, F, lam: float, g, g_prime, policy: RankPolicy = DEFAULT_POLICY) -> float:
    sk = _realize(sk)
    for v in (g, g_prime):
        if np.shape(v) != (sk.d,):
            raise DimMismatch(f"gradient has shape {np.shape(v)}, sketch expects ({sk.d},)")
    return SketchedCurvature(sk, F, policy).tau(lam, g, g_prime)


def influence_gram(train_grads, test_grads, F, lam: float, sketch=None,
                   policy: RankPolicy = DEFAULT_POLICY):
    """``n x k`` matrix of scores between training and test gradients."""
    _check_lambda(lam)
    X = np.atleast_2d(np.asarray(train_grads, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(test_grads, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DimMismatch(f"train dim {X.shape[1]} != test dim {Y.shape[1]}")
    if sketch is None:
        eig = as_eig(F, policy)
        if eig.dim != X.shape[1]:
            raise DimMismatch(f"gradient dim {X.shape[1]} != curvature dim {eig.dim}")
        return X @ resolvent_apply(eig, lam, Y.T)
    sk = _realize(sketch)
    if sk.d != X.shape[1]:
        raise DimMismatch(f"gradient dim {X.shape[1]} != sketch dim {sk.d}")
    sc = SketchedCurvature(sk, F, policy)
    return np.atleast_2d(sc.bilinear(lam, sc.project(X.T), sc.project(Y.T)))


def normalized_error(eig: CompactEigen, sk, F, lam: float, g, g_prime,
                     policy: RankPolicy = DEFAULT_POLICY, sketched: SketchedCurvature | None = None):
    """``|tau_sketched - tau| / sqrt(tau_0(g,g) tau_0(g',g'))``, or None when
    either self-norm is at most 1e-14."""
    n1, n2 = self_norm(eig, g), self_norm(eig, g_prime)
    if n1 <= SELF_NORM_FLOOR or n2 <= SELF_NORM_FLOOR:
        return None
    sc = sketched if sketched is not None else SketchedCurvature(_realize(sk), F, policy)
    err = abs(sc.tau(lam, g, g_prime) - tau_exact(eig, lam, g, g_prime))
    return err / np.sqrt(n1 * n2)


@dataclass(frozen=True)
class InfluenceQuery:
    lam: float
    g: np.ndarray
    g_prime: np.ndarray
    curvature: object
    sketch: SketchSpec | None = None


@dataclass(frozen=True)
class InfluenceReport:
    tau_exact: float
    tau_sketched: float | None
    normalized_error: float | None
    self_norms: tuple[float, float]
    seed: int | None
    m: int | None

    def to_dict(self) -> dict:
        return {
            "tau_exact": self.tau_exact,
            "tau_sketched": self.tau_sketched,
            "normalized_error": self.normalized_error,
            "self_norms": list(self.self_norms),
            "seed": self.seed,
            "m": self.m,
        }


def evaluate(query: InfluenceQuery, policy: RankPolicy = DEFAULT_POLICY) -> InfluenceReport:
    eig = as_eig(query.curvature, policy)
    t = tau_exact(eig, query.lam, query.g, query.g_prime)
    norms = (self_norm(eig, query.g), self_norm(eig, query.g_prime))
    if query.sketch is None:
        return InfluenceReport(t, None, None, norms, None, None)
    sc = SketchedCurvature(build_sketch(query.sketch), query.curvature, policy)
    ts = sc.tau(query.lam, query.g, query.g_prime)
    err = None
    if min(norms) > SELF_NORM_FLOOR:
        err = abs(ts - t) / np.sqrt(norms[0] * norms[1])
    return InfluenceReport(t, ts, err, norms, query.sketch.seed, query.sketch.m)
