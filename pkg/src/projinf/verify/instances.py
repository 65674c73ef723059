"""Synthetic curvature instances used by the probes and the calibration run."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from projinf.errors import OutOfRangeParam
from projinf.linalg import CompactEigen, KroneckerPair, compact_eig
from projinf.planner import effective_dim
from projinf.seeding import mix, stream


def random_orthonormal(d: int, r: int, seed: int) -> np.ndarray:
    """Haar-distributed ``d x r`` orthonormal columns."""
    Q, R = np.linalg.qr(stream(seed).standard_normal((d, r)))
    return Q * np.sign(np.diag(R))


def spectrum_values(kind: str, r: int, seed: int = 0) -> np.ndarray:
    """Descending positive spectra: ``powerlaw:<p>``, ``flat``, ``uniform:<lo>:<hi>``."""
    if kind == "flat":
        return np.ones(r)
    if kind.startswith("powerlaw:"):
        p = float(kind.split(":")[1])
        return np.arange(1.0, r + 1) ** (-p)
    if kind.startswith("uniform:"):
        lo, hi = (float(x) for x in kind.split(":")[1:3])
        return np.sort(stream(mix(seed, "spectrum")).uniform(lo, hi, r))[::-1]
    raise OutOfRangeParam(f"unknown spectrum {kind!r}")


def psd_eig(d: int, r: int, seed: int, spectrum: str = "uniform:1:10") -> CompactEigen:
    """Compact eig of a random rank-``r`` PSD matrix with the given spectrum."""
    U = random_orthonormal(d, r, mix(seed, "basis"))
    lam = spectrum_values(spectrum, r, seed)
    U.setflags(write=False)
    lam.setflags(write=False)
    return CompactEigen(U=U, lambdas=lam)


def psd_matrix(d: int, r: int, seed: int, spectrum: str = "uniform:1:10") -> np.ndarray:
    return psd_eig(d, r, seed, spectrum).dense()


def in_range_vectors(eig: CompactEigen, n: int, seed: int) -> np.ndarray:
    """``n`` gradients ``F^{1/2} z`` with Gaussian ``z``, as rows."""
    Z = stream(seed).standard_normal((n, eig.rank))
    return (Z * np.sqrt(eig.lambdas)) @ eig.U.T


def lambda_for_dim(spectrum: np.ndarray, target: float) -> float:
    """Regularization level at which ``d_lambda`` equals ``target``."""
    r = len(spectrum)
    if not 0 < target < r:
        raise OutOfRangeParam(f"target effective dimension must lie in (0, {r})")
    return brentq(lambda t: effective_dim(spectrum, t) - target, 1e-14, 1e14, xtol=1e-300, rtol=1e-14)


@dataclass(frozen=True)
class CorpusMember:
    name: str
    eig: CompactEigen
    lam: float

    @property
    def d_lambda(self) -> float:
        return effective_dim(self.eig, self.lam)


POWERLAW_EXPONENTS = (0.5, 1.0, 1.5, 2.0)


def powerlaw_corpus(d: int = 512, r: int = 256, exponents=POWERLAW_EXPONENTS,
                    target_dim: float = 1.5, seed: int = 0) -> list[CorpusMember]:
    """Power-law spectra on random bases, each with lambda set so ``d_lambda = target_dim``."""
    out = []
    for p in exponents:
        kind = f"powerlaw:{p:g}"
        eig = psd_eig(d, r, mix(seed, kind), kind)
        out.append(CorpusMember(kind, eig, lambda_for_dim(eig.lambdas, target_dim)))
    return out


@dataclass(frozen=True)
class HardInstance:
    """Diagonal curvature ``diag(lam 1_k, eta lam 1_{r-k}, 0)``."""

    k: int
    r: int
    d: int
    lam: float
    eta: float

    def __post_init__(self):
        if not 1 <= self.k <= self.r <= self.d:
            raise OutOfRangeParam("need 1 <= k <= r <= d")
        if not (self.lam > 0 and self.eta > 0):
            raise OutOfRangeParam("lambda and eta must be positive")

    @classmethod
    def for_epsilon(cls, k, r, d, lam, epsilon):
        return cls(k, r, d, lam, epsilon / 288)

    @property
    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.d)
        out[: self.k] = self.lam
        out[self.k: self.r] = self.eta * self.lam
        return out

    @property
    def F(self) -> np.ndarray:
        return np.diag(self.diagonal)

    @property
    def eig(self) -> CompactEigen:
        return compact_eig(self.F)

    def d_lambda_closed_form(self) -> float:
        return self.k / 2 + self.eta * (self.r - self.k) / (1 + self.eta)

    def gradient(self, y_L) -> np.ndarray:
        """``F^{1/2} (y_L, 0, 0)``."""
        y_L = np.asarray(y_L, dtype=np.float64)
        g = np.zeros(self.d)
        g[: self.k] = math.sqrt(self.lam) * y_L
        return g


def kron_instance(d_A: int, r_A: int, d_E: int, r_E: int, seed: int,
                  spectrum: str = "uniform:1:10") -> KroneckerPair:
    A = psd_matrix(d_A, r_A, mix(seed, "A"), spectrum)
    E = psd_matrix(d_E, r_E, mix(seed, "E"), spectrum)
    return KroneckerPair(A, E)
