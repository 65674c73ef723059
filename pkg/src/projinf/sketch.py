"""Oblivious and Kronecker-factorized sketching operators.

Realizations are deterministic in the spec: column ``j`` of a sketch draws
from a Philox stream keyed by ``spec.seed`` with counter lane ``j``, so the
columns can be generated in any order. Kronecker factors get their own seeds
(see :func:`kron_spec`).

Ordering convention for Kronecker objects follows ``numpy.kron``: a vector
``v`` of length ``d_A * d_E`` is indexed ``a * d_E + e``, which is
``vec(G)`` (column-major) for the ``d_E x d_A`` matrix ``G``. Then
``kron(P_A, P_E) @ v == vec(P_E @ G @ P_A.T)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from projinf.errors import DimMismatch, InvalidSpec, NumericalBreakdown
from projinf.linalg import DEFAULT_KRON_CAP, CompactEigen, KroneckerPair, kron_dense, symmetric
from projinf.seeding import MASK64, mix, stream

FAMILIES = ("gaussian", "rademacher", "sjl", "kron", "explicit")
DENSE_ENTRY_CAP = 1 << 26
DEFAULT_SJL_S = 8


@dataclass(frozen=True)
class SketchSpec:
    family: str
    m: int
    d: int
    seed: int = 0
    s: int | None = None
    spec_A: SketchSpec | None = None
    spec_E: SketchSpec | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown sketch family {self.family!r}")
        if self.m < 1 or self.d < 1:
            raise InvalidSpec(f"need m >= 1 and d >= 1, got m={self.m}, d={self.d}")
        if not 0 <= self.seed <= MASK64:
            raise InvalidSpec("seed must be an unsigned 64-bit integer")
        if self.family == "sjl":
            s = DEFAULT_SJL_S if self.s is None else self.s
            s = min(s, self.m) if self.s is None else s
            if not 1 <= s <= self.m:
                raise InvalidSpec(f"sparse JL needs 1 <= s <= m, got s={s}, m={self.m}")
            object.__setattr__(self, "s", s)
        if self.family == "kron":
            a, e = self.spec_A, self.spec_E
            if a is None or e is None:
                raise InvalidSpec("Kronecker spec needs both factor specs")
            if a.family == "kron" or e.family == "kron":
                raise InvalidSpec("nested Kronecker factors are not supported")
            if self.m != a.m * e.m or self.d != a.d * e.d:
                raise InvalidSpec("Kronecker spec dims must be products of factor dims")
        if self.family in ("gaussian", "rademacher") and self.m * self.d > DENSE_ENTRY_CAP:
            raise InvalidSpec(f"dense sketch with m*d = {self.m * self.d} exceeds 2^26 entries")


def gaussian(m, d, seed=0):
    return SketchSpec("gaussian", m, d, seed)


def rademacher(m, d, seed=0):
    return SketchSpec("rademacher", m, d, seed)


def sparse_jl(m, d, seed=0, s=None):
    return SketchSpec("sjl", m, d, seed, s=s)


def kron_spec(spec_A: SketchSpec, spec_E: SketchSpec, seed=None) -> SketchSpec:
    seed = mix(spec_A.seed, spec_E.seed) if seed is None else seed
    return SketchSpec("kron", spec_A.m * spec_E.m, spec_A.d * spec_E.d, seed, spec_A=spec_A, spec_E=spec_E)


def factor_specs(family_A, family_E, m_A, m_E, d_A, d_E, seed, s=None):
    """Kronecker spec whose factor seeds are derived from ``seed``."""
    a = make_spec(family_A, m_A, d_A, mix(seed, "A"), s=s)
    e = make_spec(family_E, m_E, d_E, mix(seed, "E"), s=s)
    return kron_spec(a, e, seed)


def make_spec(family, m, d, seed, s=None):
    if family == "sjl":
        return sparse_jl(m, d, seed, s)
    return SketchSpec(family, m, d, seed)


def parse_family(text: str):
    """Parse CLI sketch strings: ``gaussian``, ``rademacher``, ``sjl:<s>``,
    ``kron:<famA>x<famE>``. Returns ``(family, s, (famA, famE) or None)``."""
    text = text.strip().lower()
    if text in ("gaussian", "rademacher"):
        return text, None, None
    if text == "sjl" or text.startswith("sjl:"):
        s = int(text.split(":", 1)[1]) if ":" in text else None
        return "sjl", s, None
    if text.startswith("kron:"):
        parts = text[5:].split("x")
        if len(parts) != 2:
            raise InvalidSpec(f"bad Kronecker sketch {text!r}")
        inner = [parse_family(p) for p in parts]
        if any(f == "kron" for f, _, _ in inner):
            raise InvalidSpec("nested Kronecker factors are not supported")
        return "kron", inner[0][1] or inner[1][1], (parts[0], parts[1])
    raise InvalidSpec(f"unknown sketch family {text!r}")


@dataclass(frozen=True, eq=False)
class RealizedSketch:
    """A concrete sketch. Exactly one representation is populated:
    ``matrix`` (dense), ``rows``/``signs`` (column-sparse), or ``factors``."""

    spec: SketchSpec
    matrix: np.ndarray | None = None
    rows: np.ndarray | None = None
    signs: np.ndarray | None = None
    factors: tuple[RealizedSketch, RealizedSketch] | None = field(default=None)

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def is_kron(self) -> bool:
        return self.factors is not None

    @cached_property
    def _csc(self):
        s = self.rows.shape[1]
        data = (self.signs / np.sqrt(s)).ravel()
        indptr = np.arange(0, self.d * s + 1, s)
        return sp.csc_matrix((data, self.rows.ravel(), indptr), shape=(self.m, self.d))

    def dense(self, cap: int = DENSE_ENTRY_CAP) -> np.ndarray:
        if self.m * self.d > cap:
            raise InvalidSpec(f"refusing to materialize {self.m} x {self.d} sketch")
        if self.matrix is not None:
            return self.matrix
        if self.factors is not None:
            return np.kron(self.factors[0].dense(cap), self.factors[1].dense(cap))
        return self._csc.toarray()


def build_sketch(spec: SketchSpec) -> RealizedSketch:
    if spec.family == "kron":
        return RealizedSketch(spec, factors=(build_sketch(spec.spec_A), build_sketch(spec.spec_E)))
    if spec.family == "explicit":
        raise InvalidSpec("explicit sketches are built with explicit_sketch()")
    m, d = spec.m, spec.d
    if spec.family == "sjl":
        s = spec.s
        rows = np.empty((d, s), dtype=np.int64)
        signs = np.empty((d, s), dtype=np.float64)
        for j in range(d):
            gen = stream(spec.seed, j)
            rows[j] = gen.choice(m, size=s, replace=False)
            signs[j] = 2.0 * gen.integers(0, 2, size=s) - 1.0
        rows.setflags(write=False)
        signs.setflags(write=False)
        return RealizedSketch(spec, rows=rows, signs=signs)
    P = np.empty((m, d), dtype=np.float64)
    scale = 1.0 / np.sqrt(m)
    for j in range(d):
        gen = stream(spec.seed, j)
        if spec.family == "gaussian":
            P[:, j] = gen.standard_normal(m)
        else:
            P[:, j] = 2.0 * gen.integers(0, 2, size=m) - 1.0
    P *= scale
    P.setflags(write=False)
    return RealizedSketch(spec, matrix=P)


def explicit_sketch(P) -> RealizedSketch:
    """Wrap a given dense matrix as a sketch (tests and oracles)."""
    P = np.array(P, dtype=np.float64)
    if P.ndim != 2:
        raise DimMismatch("explicit sketch must be a matrix")
    P.setflags(write=False)
    return RealizedSketch(SketchSpec("explicit", P.shape[0], P.shape[1]), matrix=P)


def kron_sketch(sk_A: RealizedSketch, sk_E: RealizedSketch) -> RealizedSketch:
    if sk_A.is_kron or sk_E.is_kron:
        raise InvalidSpec("nested Kronecker factors are not supported")
    spec = SketchSpec("kron", sk_A.m * sk_E.m, sk_A.d * sk_E.d, mix(sk_A.spec.seed, sk_E.spec.seed),
                      spec_A=sk_A.spec, spec_E=sk_E.spec)
    return RealizedSketch(spec, factors=(sk_A, sk_E))


def apply(sk: RealizedSketch, v):
    """``P @ v`` for a vector (d,) or a block (d, k)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != sk.d:
        raise DimMismatch(f"sketch expects leading dimension {sk.d}, got {v.shape[0]}")
    if sk.factors is not None:
        pa, pe = sk.factors
        if v.ndim == 1:
            H = v.reshape(pa.d, pe.d)
            return (_mat(pa) @ H @ _mat(pe).T).ravel()
        H = v.reshape(pa.d, pe.d, -1)
        out = np.einsum("ia,aek,je->ijk", _mat(pa), H, _mat(pe), optimize=True)
        return out.reshape(sk.m, -1)
    if sk.matrix is not None:
        return sk.matrix @ v
    return np.asarray(sk._csc @ v)


def _mat(sk: RealizedSketch):
    return sk.matrix if sk.matrix is not None else sk._csc.toarray()


def apply_factorized_matrix(sk_A: RealizedSketch, sk_E: RealizedSketch, G):
    """``P_E @ G @ P_A.T`` for a ``d_E x d_A`` gradient matrix ``G``."""
    G = np.asarray(G, dtype=np.float64)
    if G.shape != (sk_E.d, sk_A.d):
        raise DimMismatch(f"G must be {sk_E.d} x {sk_A.d}, got {G.shape}")
    PE_G = apply(sk_E, G)
    return apply(sk_A, PE_G.T).T


def sketch_curvature(sk: RealizedSketch, F, kron_cap: int = DEFAULT_KRON_CAP):
    """``P F P^T``. Kronecker sketch + Kronecker curvature stays factored."""
    if isinstance(F, KroneckerPair):
        if sk.factors is not None:
            pa, pe = sk.factors
            if (pa.d, pe.d) != (F.d_A, F.d_E):
                raise DimMismatch("factor sketch dims do not match curvature factors")
            return KroneckerPair(_two_sided(pa, F.A), _two_sided(pe, F.E), F.policy)
        F = kron_dense(F, kron_cap)
    if isinstance(F, CompactEigen):
        if F.dim != sk.d:
            raise DimMismatch(f"curvature dim is {F.dim}, sketch ambient dim is {sk.d}")
        PU = apply(sk, F.U)
        return symmetric((PU * F.lambdas) @ PU.T)
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (sk.d, sk.d):
        raise DimMismatch(f"curvature is {F.shape}, sketch ambient dim is {sk.d}")
    return _two_sided(sk, F)


def _two_sided(sk, F):
    PF = apply(sk, F)
    out = apply(sk, PF.T)
    if not np.all(np.isfinite(out)):
        raise NumericalBreakdown("non-finite sketched curvature")
    return symmetric(out)


def gram_deviation(sk: RealizedSketch, M) -> float:
    """``|| M^T (P^T P - I) M ||_2``."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] != sk.d:
        raise DimMismatch(f"M has {M.shape[0]} rows, sketch ambient dim is {sk.d}")
    PM = apply(sk, M)
    dev = PM.T @ PM - M.T @ M
    dev = 0.5 * (dev + dev.T)
    if dev.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(dev))))
