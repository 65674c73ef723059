"""Dense PSD kernel: compact eigendecompositions, pseudoinverse and ridge
resolvent application, and Kronecker-structured curvature pairs.

One eigendecomposition of F serves every regularization level: the ridge
resolvent is applied in the eigenbasis plus an explicit ``1/lambda`` term on
the orthogonal complement of ``range(F)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from projinf.errors import CapExceeded, DimMismatch, NonFinite, NonPositiveLambda, NotPsd, ZeroRank

DEFAULT_KRON_CAP = 4096


def symmetric(F, name="F"):
    """Return ``F`` as a read-only, exactly symmetric float64 array."""
    F = np.array(F, dtype=np.float64, copy=True)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise DimMismatch(f"{name} must be square, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise NonFinite(f"{name} has non-finite entries")
    F = 0.5 * (F + F.T)
    F.setflags(write=False)
    return F


@dataclass(frozen=True)
class RankPolicy:
    """Eigenvalues at or below ``max(abs_tol, rel_tol * scale)`` count as zero."""

    rel_tol: float = 1e-10
    abs_tol: float = 0.0

    def __post_init__(self):
        if self.rel_tol < 0 or self.abs_tol < 0:
            raise ValueError("rank tolerances must be nonnegative")
        if self.rel_tol == 0 and self.abs_tol == 0:
            raise ValueError("rel_tol and abs_tol cannot both be zero")

    def cutoff(self, scale: float) -> float:
        return max(self.abs_tol, self.rel_tol * scale)


DEFAULT_POLICY = RankPolicy()


@dataclass(frozen=True)
class CompactEigen:
    """``F = U diag(lambdas) U^T`` restricted to the numerical range of F."""

    U: np.ndarray
    lambdas: np.ndarray
    policy: RankPolicy = DEFAULT_POLICY

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.lambdas.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas[0]) if self.rank else 0.0

    def dense(self) -> np.ndarray:
        return (self.U * self.lambdas) @ self.U.T

    def project(self, v):
        """Orthogonal projection onto ``range(F)``."""
        v = _check_vec(self, v)
        return self.U @ (self.U.T @ v)

    def sqrt_apply(self, v):
        v = _check_vec(self, v)
        return self.U @ _scale_rows(self.U.T @ v, np.sqrt(self.lambdas))

    def matvec(self, v):
        v = _check_vec(self, v)
        return self.U @ _scale_rows(self.U.T @ v, self.lambdas)


def _scale_rows(coef, w):
    if coef.ndim == 1:
        return coef * w
    return coef * w[:, None]


def _check_vec(eig: CompactEigen, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != eig.dim:
        raise DimMismatch(f"vector has leading dimension {v.shape[0]}, expected {eig.dim}")
    return v


def _sign_normalize(V):
    # first clearly nonzero entry of every column made positive
    if V.size == 0:
        return V
    mask = np.abs(V) > 1e-8 * np.max(np.abs(V), axis=0, keepdims=True)
    first = np.argmax(mask, axis=0)
    signs = np.sign(V[first, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def compact_eig(F, policy: RankPolicy = DEFAULT_POLICY) -> CompactEigen:
    """Compact eigendecomposition of a symmetric PSD matrix.

    Eigenvalues above the policy cutoff are kept (descending). Negative
    eigenvalues within the cutoff are rounded to zero; anything below
    ``-cutoff`` raises :class:`NotPsd`.
    """
    F = symmetric(F)
    w, V = np.linalg.eigh(F)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    cut = policy.cutoff(scale)
    if w.size and w[0] < -cut:
        raise NotPsd(f"eigenvalue {w[0]:.3e} below -cutoff {cut:.3e}")
    keep = w > cut
    lam = w[keep][::-1].copy()
    U = _sign_normalize(V[:, keep][:, ::-1].copy())
    lam.setflags(write=False)
    U.setflags(write=False)
    return CompactEigen(U=U, lambdas=lam, policy=policy)


def full_eigh(M, policy: RankPolicy = DEFAULT_POLICY):
    """Full eigendecomposition of a PSD matrix with sub-cutoff eigenvalues set to 0.

    Returns ``(w, V)`` with ``w`` descending. Used where the kernel complement
    must stay in the basis (small sketched factors).
    """
    M = symmetric(M, "M")
    w, V = np.linalg.eigh(M)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    cut = policy.cutoff(scale)
    if w.size and w[0] < -cut:
        raise NotPsd(f"eigenvalue {w[0]:.3e} below -cutoff {cut:.3e}")
    w = np.where(w > cut, w, 0.0)
    return w[::-1].copy(), V[:, ::-1].copy()


def pinv_apply(eig: CompactEigen, v):
    """``U diag(1/lambda_i) U^T v``; ``v`` may be a vector or a d x k block."""
    v = _check_vec(eig, v)
    return eig.U @ _scale_rows(eig.U.T @ v, 1.0 / eig.lambdas)


def ridge_apply(eig: CompactEigen, lam: float, v):
    """Exact ``(F + lam I)^{-1} v`` including the kernel complement."""
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    v = _check_vec(eig, v)
    coef = eig.U.T @ v
    in_range = eig.U @ _scale_rows(coef, 1.0 / (eig.lambdas + lam))
    complement = (v - eig.U @ coef) / lam
    return in_range + complement


def resolvent_apply(eig: CompactEigen, lam: float, v):
    """Ridge resolvent for ``lam > 0``, pseudoinverse for ``lam == 0``."""
    if lam == 0:
        return pinv_apply(eig, v)
    return ridge_apply(eig, lam, v)


def lambda_min_plus(eig: CompactEigen) -> float:
    if eig.rank == 0:
        raise ZeroRank("F = 0 has no nonzero eigenvalue")
    return float(eig.lambdas[-1])


def psd_sqrt(F, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    eig = compact_eig(F, policy)
    return (eig.U * np.sqrt(eig.lambdas)) @ eig.U.T


@dataclass(frozen=True)
class KroneckerPair:
    """Curvature ``F = A kron E`` kept in factored form."""

    A: np.ndarray
    E: np.ndarray
    policy: RankPolicy = DEFAULT_POLICY

    def __post_init__(self):
        object.__setattr__(self, "A", symmetric(self.A, "A"))
        object.__setattr__(self, "E", symmetric(self.E, "E"))
        # validates PSD eagerly
        _ = self.eig_A, self.eig_E

    @cached_property
    def eig_A(self) -> CompactEigen:
        return compact_eig(self.A, self.policy)

    @cached_property
    def eig_E(self) -> CompactEigen:
        return compact_eig(self.E, self.policy)

    @property
    def d_A(self) -> int:
        return self.A.shape[0]

    @property
    def d_E(self) -> int:
        return self.E.shape[0]

    @property
    def dim(self) -> int:
        return self.d_A * self.d_E

    @property
    def rank(self) -> int:
        return self.eig_A.rank * self.eig_E.rank

    def eigenvalues(self) -> np.ndarray:
        """Nonzero eigenvalues of ``A kron E``, descending."""
        return np.sort(np.outer(self.eig_A.lambdas, self.eig_E.lambdas).ravel())[::-1]

    def norm(self) -> float:
        return self.eig_A.lambda_max * self.eig_E.lambda_max


def kron_dense(pair: KroneckerPair, cap: int = DEFAULT_KRON_CAP) -> np.ndarray:
    """Materialize ``A kron E`` (numpy ``kron`` ordering, index ``a * d_E + e``)."""
    if pair.dim > cap:
        raise CapExceeded(f"d_A * d_E = {pair.dim} exceeds cap {cap}")
    return symmetric(np.kron(pair.A, pair.E))


def kron_eig(pair: KroneckerPair) -> CompactEigen:
    """Compact eigendecomposition of ``A kron E`` assembled from the factors."""
    ea, ee = pair.eig_A, pair.eig_E
    lam = np.outer(ea.lambdas, ee.lambdas).ravel()
    U = np.kron(ea.U, ee.U)
    order = np.argsort(-lam, kind="stable")
    return CompactEigen(U=U[:, order], lambdas=lam[order], policy=pair.policy)
