"""Error-versus-sketch-size sweeps over a grid of regularization levels."""
from __future__ import annotations

import math
import time
from dataclasses import astuple, dataclass
from functools import partial

import numpy as np

from projinf.errors import OutOfRangeParam
from projinf.influence import SketchedCurvature, self_norm, tau_exact
from projinf.leakage import decompose
from projinf.linalg import CompactEigen
from projinf.planner import effective_dim
from projinf.seeding import mix, stream
from projinf.sketch import build_sketch, make_spec
from projinf.verify.core import run_trials
from projinf.verify.instances import in_range_vectors

SWEEP_HEADER = ("lambda", "m", "trial", "seed", "d_lambda", "eps_lambda_p50", "eps_lambda_p95",
                "leakage_p95", "wall_time_ms")


@dataclass(frozen=True)
class SweepRow:
    lam: float
    m: int
    trial: int
    seed: int
    d_lambda: float
    eps_lambda_p50: float
    eps_lambda_p95: float
    leakage_p95: float
    wall_time_ms: float


@dataclass(frozen=True)
class _Cell:
    lam: float
    m: int
    trial: int
    seed: int


def _run_cell(eig: CompactEigen, grads, family: str, s, pairs: int, timed: bool, cell: _Cell) -> SweepRow:
    t0 = time.perf_counter()
    sk = build_sketch(make_spec(family, cell.m, eig.dim, cell.seed, s=s))
    sc = SketchedCurvature(sk, eig)
    gen = stream(mix(cell.seed, "pairs"))
    if grads is None:
        X = in_range_vectors(eig, 2 * pairs, mix(cell.seed, "grads"))
    else:
        X = grads[gen.integers(0, len(grads), size=2 * pairs)]
    errs = []
    for i in range(pairs):
        g, gp = X[2 * i], X[2 * i + 1]
        n1, n2 = self_norm(eig, g), self_norm(eig, gp)
        if min(n1, n2) <= 1e-14:
            continue
        errs.append(abs(sc.tau(cell.lam, g, gp) - tau_exact(eig, cell.lam, g, gp)) / math.sqrt(n1 * n2))
    leaks = []
    if eig.rank < eig.dim:
        # leakage relative to its regularized bound at eps = 1
        unit = 1.0 / cell.lam + 2.0 * eig.lambda_max / cell.lam**2
        T = gen.standard_normal((pairs, eig.dim))
        for i in range(pairs):
            g = X[2 * i]
            _, gp = decompose(eig, T[i])
            scale = np.linalg.norm(g) * np.linalg.norm(gp) * unit
            if scale > 0:
                leaks.append(abs(sc.tau(cell.lam, g, gp)) / scale)
    elapsed = (time.perf_counter() - t0) * 1e3 if timed else 0.0
    p50, p95 = (np.percentile(errs, [50, 95]) if errs else (0.0, 0.0))
    return SweepRow(cell.lam, cell.m, cell.trial, cell.seed, effective_dim(eig, cell.lam), float(p50),
                    float(p95), float(np.percentile(leaks, 95)) if leaks else 0.0, elapsed)


def run_sweep(eig: CompactEigen, lambdas, multipliers, trials: int, seed: int, pairs: int = 200,
              family: str = "gaussian", s=None, grads=None, workers: int = 1, timed: bool = False):
    """One row per ``(lambda, multiplier, trial)`` with ``m = ceil(multiplier * d_lambda)``.

    Rows are sorted by ``(lambda, m, trial)``. ``wall_time_ms`` is 0 unless
    ``timed`` is set, which keeps the output byte-stable.
    """
    if trials < 1 or pairs < 1:
        raise OutOfRangeParam("trials and pairs must be >= 1")
    cells = []
    for lam in lambdas:
        if not lam > 0:
            raise OutOfRangeParam(f"sweep lambdas must be > 0, got {lam}")
        d_lam = effective_dim(eig, lam)
        for mult in multipliers:
            if not mult > 0:
                raise OutOfRangeParam(f"multipliers must be > 0, got {mult}")
            m = max(1, math.ceil(mult * d_lam))
            for t in range(trials):
                cells.append(_Cell(float(lam), m, t, mix(seed, "sweep", repr(float(lam)), repr(float(mult)), t)))
    rows = run_trials(partial(_run_cell, eig, grads, family, s, pairs, timed), cells, workers)
    return sorted(rows, key=lambda r: (r.lam, r.m, r.trial, r.seed))


def rows_as_tuples(rows):
    return [astuple(r) for r in rows]
