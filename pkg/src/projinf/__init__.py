"""Sketched influence scores: planning, error analysis and verification probes."""
from projinf.influence import influence_gram, normalized_error, tau_exact, tau_sketched
from projinf.leakage import decompose, leakage_report, leakage_term
from projinf.linalg import CompactEigen, KroneckerPair, RankPolicy, compact_eig
from projinf.planner import effective_dim, plan_factorized, plan_sketch_size
from projinf.sketch import SketchSpec, apply, build_sketch, gaussian, rademacher, sparse_jl

__all__ = [
    "CompactEigen", "KroneckerPair", "RankPolicy", "SketchSpec", "apply", "build_sketch",
    "compact_eig", "decompose", "effective_dim", "gaussian", "influence_gram", "leakage_report",
    "leakage_term", "normalized_error", "plan_factorized", "plan_sketch_size", "rademacher",
    "sparse_jl", "tau_exact", "tau_sketched",
]
