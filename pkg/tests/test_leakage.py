from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projinf.errors import DimMismatch, Unsupported
from projinf.influence import tau_exact
from projinf.leakage import (
    decompose,
    decompose_factorized,
    factorized_leakage,
    leakage_report,
    leakage_term,
    total_error_split,
)
from projinf.linalg import KroneckerPair, compact_eig, kron_eig
from projinf.sketch import build_sketch, explicit_sketch, factor_specs, gaussian
from projinf.verify.instances import in_range_vectors, psd_eig

from conftest import random_psd


def test_decompose_examples():
    eig = compact_eig(np.diag([1.0, 0.0]))
    par, perp = decompose(eig, [3.0, 4.0])
    np.testing.assert_allclose(par, [3, 0])
    np.testing.assert_allclose(perp, [0, 4])
    eig = psd_eig(10, 4, 1)
    g = in_range_vectors(eig, 1, 2)[0]
    assert np.linalg.norm(decompose(eig, g)[1]) <= 1e-12 * np.linalg.norm(g)
    with pytest.raises(DimMismatch):
        decompose(eig, np.ones(3))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pythagoras(seed):
    rng = np.random.default_rng(seed)
    eig = compact_eig(random_psd(rng, 20, 7))
    v = rng.standard_normal(20)
    par, perp = decompose(eig, v)
    assert abs(par @ par + perp @ perp - v @ v) <= 1e-10 * (v @ v)
    assert abs(par @ perp) <= 1e-10 * (v @ v)


def test_factor_decomposition(rng):
    A, E = random_psd(rng, 4, 2), random_psd(rng, 3, 1)
    pair = KroneckerPair(A, E)
    a_in, e_in = A @ rng.standard_normal(4), E @ rng.standard_normal(3)
    dec = decompose_factorized(pair.eig_A, pair.eig_E, a_in, e_in)
    assert np.linalg.norm(dec.g_perp) <= 1e-10 * np.linalg.norm(np.kron(a_in, e_in))
    # a'_par = 0: two surviving terms merge into a'_perp kron e'
    a_ker = np.linalg.svd(A)[2][-1]
    e = rng.standard_normal(3)
    dec = decompose_factorized(pair.eig_A, pair.eig_E, a_ker, e)
    np.testing.assert_allclose(dec.g_perp, np.kron(dec.a_perp, e), atol=1e-12)
    # random factors against the dense decomposition of the Kronecker product
    a, e = rng.standard_normal(4), rng.standard_normal(3)
    dec = decompose_factorized(pair.eig_A, pair.eig_E, a, e)
    _, dense_perp = decompose(kron_eig(pair), np.kron(a, e))
    np.testing.assert_allclose(dec.g_perp, dense_perp, atol=1e-10)
    np.testing.assert_allclose(dec.g_par + dec.g_perp, np.kron(a, e), atol=1e-12)


def test_leakage_trivial(rng):
    eig = psd_eig(12, 4, 3)
    g = in_range_vectors(eig, 1, 4)[0]
    sk = build_sketch(gaussian(6, 12, 5))
    assert leakage_term(sk, eig, 1.0, g, np.zeros(12)) == 0.0
    _, perp = decompose(eig, rng.standard_normal(12))
    assert leakage_term(explicit_sketch(np.eye(12)), eig, 1.0, g, perp) == pytest.approx(0, abs=1e-12)
    assert tau_exact(eig, 1.0, g, perp) == pytest.approx(0, abs=1e-12)
    assert abs(leakage_term(sk, eig, 1.0, g, perp)) > 1e-6


def test_split_on_pure_components(rng):
    eig = psd_eig(12, 4, 3)
    g = in_range_vectors(eig, 2, 4)
    sk = build_sketch(gaussian(6, 12, 5))
    in_range, leak, total = total_error_split(sk, eig, 0.5, g[0], g[1])
    assert leak <= 1e-12 and total == pytest.approx(in_range)
    _, perp = decompose(eig, rng.standard_normal(12))
    in_range, leak, total = total_error_split(sk, eig, 0.5, g[0], perp)
    assert in_range <= 1e-12 and total == pytest.approx(leak, rel=1e-10)


def test_split_triangle_many_seeds():
    eig = psd_eig(16, 5, 8)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = in_range_vectors(eig, 1, seed)[0]
        sk = build_sketch(gaussian(8, 16, seed))
        in_range, leak, total = total_error_split(sk, eig, 0.3, g, rng.standard_normal(16))
        assert total <= in_range + leak + 1e-12 * max(1.0, in_range + leak)


def test_report_fields(rng):
    eig = compact_eig(np.diag([3.0, 1.0, 0.0]))
    sk = build_sketch(gaussian(2, 3, 1))
    rep = leakage_report(sk, eig, 1.0, 0.1, [1.0, 1.0, 0.0], [0.0, 1.0, 2.0])
    assert rep.norm_g_perp == pytest.approx(2.0) and rep.norm_g_par == pytest.approx(1.0)
    assert rep.tau_exact_perp == pytest.approx(0, abs=1e-15)
    d = rep.to_dict()
    assert d["lambda"] == 1.0 and d["m"] == 2 and d["seed"] == 1
    assert d["bound_reg"] == pytest.approx(0.1 * np.sqrt(2) * 2 * 7)


def test_factorized_leakage(rng):
    A, E = random_psd(rng, 4, 2), random_psd(rng, 3, 2)
    pair = KroneckerPair(A, E)
    g = kron_eig(pair).project(rng.standard_normal(12))
    sk = build_sketch(factor_specs("gaussian", "gaussian", 3, 2, 4, 3, seed=4))
    a, e = rng.standard_normal(4), rng.standard_normal(3)
    dec = decompose_factorized(pair.eig_A, pair.eig_E, a, e)
    val = factorized_leakage(sk, pair, 0.5, g, (a, e))
    P = sk.dense()
    S = P @ np.kron(A, E) @ P.T
    ref = (P @ g) @ np.linalg.solve(S + 0.5 * np.eye(6), P @ dec.g_perp)
    assert val == pytest.approx(ref, rel=1e-8, abs=1e-12)
    with pytest.raises(Unsupported):
        factorized_leakage(sk, pair, 0.5, g, np.kron(a, e))
