import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from sqclock.observables import moments
from sqclock.states import (AtomState, SectorState, StateError, binomial_sector_state,
                            fock_mixture_state, gaussian_product_state, make_number_distribution,
                            prepared_clock_state, twin_fock_state)

from dense import TwoMode


def test_delta_distribution_is_point_mass():
    ns, ps = make_number_distribution("delta", 100, 0).weights()
    assert list(ns) == [100] and list(ps) == [1.0]


def test_gaussian_with_zero_variance_collapses_to_delta():
    ns, ps = make_number_distribution("gaussian", 99.6, 0).weights()
    assert list(ns) == [100] and ps[0] == 1.0


def test_large_gaussian_moments_match_direct_sum():
    ns, ps = make_number_distribution("gaussian", 1e5, 1e5).weights()
    # direct summation over the same truncated window
    grid = np.arange(math.ceil(1e5 - 6 * math.sqrt(1e5)), math.floor(1e5 + 6 * math.sqrt(1e5)) + 1)
    ref = np.exp(-(grid - 1e5) ** 2 / 2e5)
    ref /= ref.sum()
    np.testing.assert_array_equal(ns, grid)
    np.testing.assert_allclose(ps, ref, rtol=1e-12, atol=1e-300)
    mean = np.dot(ns, ps)
    var = np.dot((ns - mean) ** 2, ps)
    assert abs(mean - 1e5) <= 1
    assert abs(var / 1e5 - 1) <= 0.02


def test_small_gaussian_is_symmetric():
    ns, ps = make_number_distribution("gaussian", 4, 1).weights()
    p = dict(zip(ns.tolist(), ps))
    assert abs(p[3] - p[5]) <= 1e-12
    assert ns.min() >= 0


@pytest.mark.parametrize("args", [("gaussian", -1, 1), ("gaussian", 10, -1), ("delta", -3, 0)])
def test_negative_inputs_rejected(args):
    with pytest.raises(StateError):
        make_number_distribution(*args)


def test_custom_weights_normalized():
    ns, ps = make_number_distribution("custom", 0, custom_weights=(0, 0, 0, 1.0, 0, 3.0)).weights()
    assert dict(zip(ns.tolist(), ps.tolist())) == {3: 0.25, 5: 0.75}


@pytest.mark.parametrize("n, expected", [
    (0, [1.0]),
    (1, [1 / math.sqrt(2)] * 2),
    (2, [0.5, 1 / math.sqrt(2), 0.5]),
])
def test_binomial_small_sectors(n, expected):
    np.testing.assert_allclose(binomial_sector_state(n).amplitudes(), expected, atol=1e-15)


def test_binomial_two_matches_rotated_fock_state():
    dm = TwoMode(2)
    v = np.zeros(9, complex)
    v[dm.index(2, 0)] = 1
    out = dm.rotation(-math.pi / 2) @ v
    ref = np.array([out[dm.index(k, 2 - k)] for k in range(3)])
    np.testing.assert_allclose(np.abs(ref), binomial_sector_state(2).amplitudes(), atol=1e-12)


@pytest.mark.parametrize("n", [50, 1001, 100000])
def test_binomial_probabilities_match_scipy(n):
    s = binomial_sector_state(n)
    k = s.occupations
    np.testing.assert_allclose(np.abs(s.amps) ** 2, binom.pmf(k, n, 0.5), rtol=1e-9, atol=1e-300)
    assert abs(s.norm2 - 1) <= 1e-12
    assert np.all(s.amplitudes()[:s.lo] == 0)


def test_prepared_delta_two_is_single_sector():
    st_ = prepared_clock_state(make_number_distribution("delta", 2))
    assert st_.totals.tolist() == [2] and st_.weights.tolist() == [1.0]
    np.testing.assert_allclose(st_.sectors[0].amplitudes(), [0.5, 1 / math.sqrt(2), 0.5], atol=1e-15)


@pytest.mark.parametrize("sigma2, na_var", [(100, 50), (0, 25)])
def test_prepared_mode_a_variance(sigma2, na_var):
    m = moments(prepared_clock_state(make_number_distribution("gaussian", 100, sigma2)))
    assert m.na_var == pytest.approx(na_var, rel=0.01)


def test_prepared_state_normalization_large():
    s = prepared_clock_state(make_number_distribution("gaussian", 1e4, 1e4))
    assert abs(s.weights.sum() - 1) <= 1e-12
    assert max(abs(sec.norm2 - 1) for sec in s.sectors) <= 1e-12


def test_twin_fock_from_zero_widths():
    s = gaussian_product_state(20, 0, 0)
    assert s.totals.tolist() == [20]
    assert s.populations() == {(10, 10): 1.0}


@pytest.mark.parametrize("kappa, target, tol", [(1.0, 100, 0.02), (0.5, 25, 0.05)])
def test_gaussian_product_mode_variance(kappa, target, tol):
    s = gaussian_product_state(200, kappa * 10, 10)
    assert moments(s).na_var == pytest.approx(target, rel=tol)


@pytest.mark.parametrize("mean_total, sa, sb", [(12, 1.5, 2.0), (30, 3.0, 0.7), (40, 0.4, 4.0)])
def test_gaussian_product_populations_match_grid(mean_total, sa, sb):
    n = np.arange(0, mean_total + 60)
    a = np.exp(-(n - mean_total / 2) ** 2 / (4 * sa * sa))
    b = np.exp(-(n - mean_total / 2) ** 2 / (4 * sb * sb))
    p = np.outer(a ** 2, b ** 2)
    p /= p.sum()
    got = gaussian_product_state(mean_total, sa, sb).populations()
    for (i, j), v in got.items():
        assert v == pytest.approx(p[i, j], abs=1e-12)
    assert sum(got.values()) == pytest.approx(1, abs=1e-12)


def test_sector_split_preserves_number_conserving_observables():
    # a pure product state and its sector mixture agree on operators commuting with N
    mean_total, sa, sb = 8, 1.0, 0.8
    state = gaussian_product_state(mean_total, sa, sb)
    dm = TwoMode(state.max_total)
    n = np.arange(dm.d)
    a = np.exp(-(n - mean_total / 2) ** 2 / (4 * sa * sa))
    b = np.exp(-(n - mean_total / 2) ** 2 / (4 * sb * sb))
    v = np.kron(a, b).astype(complex)
    v /= np.linalg.norm(v)
    mix = dm.density(state)
    for op in (dm.jx, dm.jz, dm.jx @ dm.jx, dm.jz @ dm.jx + dm.jx @ dm.jz, dm.na @ dm.na):
        assert dm.expect(mix, op).real == pytest.approx((v.conj() @ op @ v).real, abs=1e-10)


def test_fock_mixture_examples():
    s = fock_mixture_state(3, [1.0])
    assert s.populations() == {(3, 0): 1.0}
    assert twin_fock_state(2).populations() == {(2, 2): 1.0}
    s = fock_mixture_state(1, [0.5, 0.5])
    assert s.weights.tolist() == [0.5, 0.5]
    assert s.n_mean - 1 == pytest.approx(0.5)


def test_atom_state_invariants_enforced():
    sec = SectorState(2, 0, np.array([1.0, 0, 0]))
    with pytest.raises(StateError):
        AtomState(np.array([0.9]), (sec,))
    with pytest.raises(StateError):
        AtomState(np.array([0.5, 0.5]), (sec, sec))
    with pytest.raises(StateError):
        fock_mixture_state(2, [0.5, 0.6])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda x: sum(x) > 1e-3),
       st.integers(0, 30))
def test_fock_mixture_is_normalized(raw, n_a):
    p = np.array(raw) / sum(raw)
    s = fock_mixture_state(n_a, p)
    assert abs(s.total_norm() - 1) <= 1e-12
    assert s.n_mean == pytest.approx(n_a + np.dot(np.arange(p.size), p), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.lists(st.complex_numbers(max_magnitude=10), min_size=1, max_size=10))
def test_sector_normalize_and_window(total, lo, amps):
    amps = np.array(amps[: max(1, total + 1)], dtype=complex)
    lo = min(lo, total + 1 - amps.size)
    if np.sum(np.abs(amps) ** 2) < 1e-20:
        return
    s = SectorState(total, lo, amps).normalized()
    full = s.amplitudes()
    assert full.size == total + 1
    assert abs(np.sum(np.abs(full) ** 2) - 1) <= 1e-12
    assert np.all(full[: s.support_lo] == 0) and np.all(full[s.support_hi + 1:] == 0)
