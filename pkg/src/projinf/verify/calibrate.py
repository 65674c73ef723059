"""Empirical fit of the planner constant C."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from projinf.errors import CalibrationFailed
from projinf.verify.core import ProbeConfig
from projinf.verify.instances import CorpusMember, powerlaw_corpus
from projinf.verify.probes import probe_sandwich

C_GRID = (1, 2, 4, 8, 16, 32, 64)


@dataclass
class CalibrationResult:
    C: float
    epsilon: float
    delta: float
    trials: int
    table: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"C": self.C, "epsilon": self.epsilon, "delta": self.delta,
                "trials": self.trials, "table": self.table}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


def calibrate_constant(corpus: list[CorpusMember] | None = None, epsilon: float = 0.25, delta: float = 0.1,
                       trials: int = 400, base_seed: int = 0, grid=C_GRID, workers: int = 1) -> CalibrationResult:
    """Smallest C in ``grid`` whose planned sketch passes the sandwich probe on
    every corpus member. Members are visited in order and the search moves to
    the next C at the first failing member."""
    corpus = powerlaw_corpus() if corpus is None else corpus
    table = {}
    for C in sorted(grid):
        cfg = ProbeConfig(trials=trials, base_seed=base_seed, epsilon=epsilon, delta=delta, C=C, workers=workers)
        rows = {}
        ok = True
        for member in corpus:
            res = probe_sandwich(cfg, member)
            rows[member.name] = {"m": res.details["m"], "failure_rate": res.statistic, "pass": res.passed}
            if not res.passed:
                ok = False
                break
        table[str(C)] = rows
        if ok:
            return CalibrationResult(float(C), epsilon, delta, trials, table)
    raise CalibrationFailed(f"no C in {tuple(grid)} passes the sandwich probe")
