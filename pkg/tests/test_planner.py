from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projinf.errors import LambdaTooLarge, NonPositiveLambda, OutOfRangeParam
from projinf.linalg import DEFAULT_POLICY, CompactEigen, compact_eig
from projinf.planner import (
    default_constant,
    effective_dim,
    kernel_span_dim,
    leakage_bounds,
    plan_factorized,
    plan_factorized_leakage,
    plan_leakage_sketch_size,
    plan_sketch_size,
)
from projinf.verify.instances import HardInstance


def test_effective_dim_examples():
    assert effective_dim(compact_eig(np.eye(4)), 1.0) == pytest.approx(2.0, abs=1e-12)
    # eigenvalue-sum oracle: 3/4 + 1/2
    assert effective_dim(compact_eig(np.diag([3.0, 1.0, 0.0])), 1.0) == pytest.approx(1.25, abs=1e-12)
    inst = HardInstance(8, 16, 64, 1.0, 1e-3)
    assert effective_dim(inst.eig, 1.0) == pytest.approx(4 + 1e-3 * 8 / (1 + 1e-3), abs=1e-12)
    assert inst.d_lambda_closed_form() == pytest.approx(effective_dim(inst.eig, 1.0), abs=1e-12)
    with pytest.raises(NonPositiveLambda):
        effective_dim(compact_eig(np.eye(2)), 0.0)


@settings(max_examples=40, deadline=None)
@given(w=st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20), lam=st.floats(1e-6, 1e6))
def test_effective_dim_bounded_and_monotone(w, lam):
    w = np.sort(np.array(w))[::-1]
    a, b = effective_dim(w, lam), effective_dim(w, 2 * lam)
    assert 0 <= b <= a <= len(w) + 1e-12


def _eig_with_dim(target, d=64):
    # spectrum (1, ..., 1, x) tuned so that d_lambda at lambda=1 equals target exactly
    n = int(target // 0.5)
    rest = target - 0.5 * n
    w = np.array([1.0] * n + ([rest / (1 - rest)] if rest > 0 else []))
    return CompactEigen(U=np.eye(d, len(w)), lambdas=w, policy=DEFAULT_POLICY)


def test_formula_example():
    eig = _eig_with_dim(2.0, d=10000)
    rep = plan_sketch_size(eig, 1.0, 0.1, 0.05, C=16)
    assert rep.d_lambda == pytest.approx(2.0)
    # ceil(16 (2 + ln 20) / 0.01) = ceil(7993.17...) = 7994
    assert 16 * (2 + math.log(20)) / 0.01 == pytest.approx(7993.17, abs=0.01)
    assert rep.m_recommended == 7994 and not rep.capped


def test_cap():
    eig = _eig_with_dim(2.0, d=64)
    rep = plan_sketch_size(eig, 1.0, 0.1, 0.05, C=16)
    assert rep.capped and rep.m_recommended == 64 and rep.m_required == 7994


def test_unregularized_plan():
    eig = compact_eig(np.diag([3.0, 2.0, 1.0, 0.0]))
    rep = plan_sketch_size(eig, 0.0, 0.1, 0.1, C=16)
    assert rep.m_recommended == 3 and rep.note


def test_plan_ranges():
    eig = compact_eig(np.eye(3))
    for eps, delta in ((0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.0)):
        with pytest.raises(OutOfRangeParam):
            plan_sketch_size(eig, 1.0, eps, delta, C=1)
    with pytest.raises(OutOfRangeParam):
        plan_sketch_size(eig, 1.0, 0.1, 0.1, C=0)


def test_plan_monotone_in_C():
    eig = _eig_with_dim(3.0, d=100000)
    sizes = [plan_sketch_size(eig, 1.0, 0.2, 0.1, C=C).m_recommended for C in (1, 2, 4, 8)]
    assert sizes == sorted(sizes)


def test_default_constant_from_calibration():
    C = default_constant()
    assert 1 <= C <= 64
    assert plan_sketch_size(compact_eig(np.eye(3)), 1.0, 0.5, 0.5).calibration_C == C


def test_factorized_symmetric():
    I2 = compact_eig(np.eye(2))
    plan = plan_factorized(I2, I2, 1.0, 0.5, 0.1, C=1)
    assert plan.lambda_A == plan.lambda_E == 1.0
    assert plan.d_A_eff == plan.d_E_eff == pytest.approx(1.0)
    assert plan.m_A_required == plan.m_E_required == math.ceil((1 + math.log(10)) / 0.25)


def test_factorized_rescaled_levels():
    A, E = compact_eig(np.diag([4.0, 1.0])), compact_eig(np.diag([9.0, 1.0]))
    plan = plan_factorized(A, E, 6.0, 0.3, 0.1, C=1)
    assert plan.lambda_E == pytest.approx(2 / 3) and plan.lambda_A == pytest.approx(3 / 2)
    assert plan.d_A_eff == pytest.approx(6 / 7 + 3 / 5, abs=1e-12)
    assert plan.d_E_eff == pytest.approx(9 / 10.5 + 1 / 2.5, abs=1e-12)
    assert plan.m == plan.m_A * plan.m_E
    with pytest.raises(LambdaTooLarge):
        plan_factorized(A, E, 37.0, 0.3, 0.1, C=1)


def test_leakage_bounds_examples():
    eig = compact_eig(np.diag([3.0, 1.0, 0.0]))
    assert leakage_bounds(eig, 1.0, 0.1, 1.0, 0.0) == (0.0, 0.0)
    unreg, reg = leakage_bounds(eig, 1.0, 0.1, 1.0, 1.0)
    assert unreg == pytest.approx(0.1) and reg == pytest.approx(0.7)
    assert leakage_bounds(compact_eig(np.zeros((2, 2))), 1.0, 0.1, 1.0, 1.0)[0] == math.inf


def test_leakage_bounds_ordering_on_hard_instance():
    inst = HardInstance(8, 16, 32, 1.0, 1e-3)
    unreg, reg = leakage_bounds(inst.eig, 1.0, 0.1, 1.0, 1.0)
    assert unreg > reg


def test_leakage_regimes():
    one = plan_leakage_sketch_size(5, 1, 1, 0.1, 0.05, C=1)
    assert one.regime == "union"
    # ln(1e6 / 0.05) = 16.8 < 50 + ln 20 = 53.0, so the union bound is still smaller
    mid = plan_leakage_sketch_size(5, 10**6, 50, 0.1, 0.05, C=1)
    assert mid.regime == "union"
    assert mid.complexity == pytest.approx(5 + math.log(2e7))
    # ln(1e30 / 0.05) = 72.1 > 53.0
    big = plan_leakage_sketch_size(5, 10**30, 50, 0.1, 0.05, C=1)
    assert big.regime == "subspace"
    assert big.complexity == pytest.approx(5 + 50 + math.log(20))
    hundred = plan_leakage_sketch_size(5, 100, 100, 0.1, 0.05, C=1)
    assert hundred.regime == "union"
    assert hundred.complexity == pytest.approx(5 + math.log(2000))
    assert hundred.m == math.ceil((5 + math.log(2000)) / 0.01)
    with pytest.raises(OutOfRangeParam):
        plan_leakage_sketch_size(5, 3, 4, 0.1, 0.05, C=1)


def test_kernel_span_and_factorized_leakage_plan():
    eig = compact_eig(np.diag([1.0, 1.0, 0.0, 0.0]))
    Y = np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 2.0, 0.0], [1.0, 1.0, 0.0, 0.0]])
    assert kernel_span_dim(eig, Y) == 1
    pa, pe = plan_factorized_leakage(eig, eig, Y, Y, 0.3, 0.1, C=1)
    assert pa.complexity == pytest.approx(2 + min(math.log(2 / 0.1), 1 + math.log(10)))
