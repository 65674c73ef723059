"""Seeded verification probes and the planner calibration run."""
from projinf.verify.calibrate import CalibrationResult, calibrate_constant
from projinf.verify.core import ProbeConfig, ProbeResult, failure_threshold, run_trials, trial_seed
from projinf.verify.instances import (
    CorpusMember,
    HardInstance,
    in_range_vectors,
    kron_instance,
    powerlaw_corpus,
    psd_eig,
)
from projinf.verify.probes import (
    probe_anti_concentration,
    probe_cross_term,
    probe_error_rate,
    probe_factorized_barrier,
    probe_factorized_deviation,
    probe_factorized_leakage,
    probe_influence_bound,
    probe_leakage_bound,
    probe_leakage_exact,
    probe_leakage_rate,
    probe_lower_bound,
    probe_sandwich,
    probe_unregularized_dichotomy,
)

__all__ = [
    "CalibrationResult", "CorpusMember", "HardInstance", "ProbeConfig", "ProbeResult",
    "calibrate_constant", "failure_threshold", "in_range_vectors", "kron_instance",
    "powerlaw_corpus", "probe_anti_concentration", "probe_cross_term", "probe_error_rate",
    "probe_factorized_barrier", "probe_factorized_deviation", "probe_factorized_leakage",
    "probe_influence_bound", "probe_leakage_bound", "probe_leakage_exact", "probe_leakage_rate",
    "probe_lower_bound", "probe_sandwich", "probe_unregularized_dichotomy", "psd_eig",
    "run_trials", "trial_seed",
]
