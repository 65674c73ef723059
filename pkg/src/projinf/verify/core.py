"""Probe configuration, results and the seeded trial runner."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from projinf.errors import OutOfRangeParam
from projinf.seeding import MASK64, mix


def failure_threshold(delta: float, trials: int) -> float:
    """Allowed empirical failure rate: ``delta + 2 sqrt(delta / T)``."""
    return delta + 2.0 * math.sqrt(delta / trials)


def trial_seed(base_seed: int, probe_id: str, trial: int) -> int:
    return mix(base_seed, probe_id, trial)


@dataclass(frozen=True)
class ProbeConfig:
    trials: int = 100
    base_seed: int = 0
    epsilon: float = 0.25
    delta: float = 0.1
    family: str = "gaussian"
    d: int = 64
    r: int = 16
    spectrum: str = "uniform:1:10"
    lam: float = 1.0
    C: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise OutOfRangeParam("trials must be >= 1")
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise OutOfRangeParam("epsilon and delta must lie in (0, 1)")
        if not 0 <= self.base_seed <= MASK64:
            raise OutOfRangeParam("base_seed must be an unsigned 64-bit integer")

    def with_(self, **kw) -> ProbeConfig:
        return replace(self, **kw)


@dataclass
class ProbeResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    trials: int
    seeds: list[int]
    values: list[float] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "trials": int(self.trials),
            "seeds": [int(s) for s in self.seeds],
            "values": [float(v) for v in self.values],
            "details": _plain(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def run_trials(fn, seeds, workers: int = 1):
    """``[fn(s) for s in seeds]``, optionally across processes.

    Each trial depends only on its seed, so the output is identical for any
    worker count.
    """
    seeds = list(seeds)
    if workers <= 1 or len(seeds) < 2:
        return [fn(s) for s in seeds]
    chunk = max(1, len(seeds) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds, chunksize=chunk))
