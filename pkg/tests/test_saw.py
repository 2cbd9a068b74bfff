import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from fracanderson import io
from fracanderson.errors import BudgetExceeded, GammaSupercritical, SubcriticalS
from fracanderson.laplacian import FracLaplacianParams, kernel_table
from fracanderson.saw import (
    SawKernel,
    SawSeries,
    brute_force_counts,
    counts_to_csv,
    decay_bound_check,
    ell_tilde_estimate,
    k0_constant,
    kernel_upper_constant,
    key_inequality_check,
    key_inequality_truncated,
    radius_lower_bound,
    saw_counts,
    saw_counts_all,
    saw_kernel_from_laplacian,
    susceptibility_partial,
    two_point,
)
from fracanderson.lattice import BoxGeometry


@pytest.fixture(scope="module")
def d_half():
    # D = |(-Delta)^{1/2}|^{0.9} in d = 1, truncated at radius 400
    return saw_kernel_from_laplacian(kernel_table(FracLaplacianParams(1, 0.5), 400), 0.9)


def _nn_kernel(d):
    v = np.zeros((3,) * d)
    for j in range(d):
        for sgn in (0, 2):
            idx = [1] * d
            idx[j] = sgn
            v[tuple(idx)] = 1.0
    return SawKernel.from_array(v, "nearest neighbour")


def _random_kernel(seed, d, R):
    rng = np.random.default_rng(seed)
    return SawKernel.from_array(rng.random((2 * R + 1,) * d), f"random {seed}")


def test_kernel_validation():
    with pytest.raises(ValueError):
        SawKernel.from_array(np.ones((2, 2)))
    with pytest.raises(ValueError):
        SawKernel(np.array([1.0, 1.0, 1.0]), 2.0, 1)
    with pytest.raises(ValueError):
        SawKernel(np.array([-1.0, 0.0, 1.0]), 2.0, 1)
    k = SawKernel.from_array([0.5, 3.0, 0.25])
    assert k.row_sum == 0.75 and k.weight(-1) == 0.5 and k.weight(5) == 0.0
    assert k.scaled(2.0).row_sum == 1.5
    assert radius_lower_bound(k) == pytest.approx(1 / 0.75)


def test_nearest_neighbour_counts_2d():
    # numbers of n-step self-avoiding walks on the square lattice: 4, 12, 36, 100, 284
    c = saw_counts_all(_nn_kernel(2), 5, 5)
    assert c.sum(axis=1).tolist() == [1, 4, 12, 36, 100, 284]


def test_nearest_neighbour_counts_1d():
    c = saw_counts(_nn_kernel(1), 3, 4, 5)
    assert c.counts == [0, 0, 0, 1, 0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.data())
def test_matches_brute_force(seed, d, data):
    W = 2 if d == 1 else 1
    k = _random_kernel(seed, d, 2)
    x = tuple(data.draw(st.integers(-W, W)) for _ in range(d))
    fast = saw_counts(k, x, 4, W).counts
    np.testing.assert_allclose(fast, brute_force_counts(k, x, 4, W), rtol=1e-12, atol=1e-15)


def test_brute_force_on_laplacian_kernel(d_half):
    for x in (0, 1, 4, -6):
        fast = saw_counts(d_half, x, 4, 6).counts
        np.testing.assert_allclose(fast, brute_force_counts(d_half, x, 4, 6), rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_geometric_domination(seed):
    k = _random_kernel(seed, 1, 3)
    c = saw_counts_all(k, 5, 6)
    for n in range(6):
        assert c[n].sum() <= k.row_sum**n * (1 + 1e-12)


def test_budget():
    with pytest.raises(BudgetExceeded):
        saw_counts_all(_random_kernel(1, 1, 3), 6, 6, budget=10)


def test_subcritical_s():
    t = kernel_table(FracLaplacianParams(1, 0.5), 20)
    with pytest.raises(SubcriticalS):
        saw_kernel_from_laplacian(t, 0.5)


def _true_row_sum(alpha, s, terms=2_000_000):
    x = np.arange(1, terms, dtype=float)
    mag = np.exp(gammaln(2 * alpha + 1) + gammaln(x - alpha) - gammaln(x + alpha + 1)) * math.sin(math.pi * alpha) / math.pi
    q = s * (1 + 2 * alpha)
    c = (math.sin(math.pi * alpha) * math.exp(gammaln(2 * alpha + 1)) / math.pi) ** s
    return 2 * (np.sum(mag**s) + c * terms ** (1 - q) / (q - 1))


def test_row_sum_is_certified(d_half):
    true = _true_row_sum(0.5, 0.9)
    assert true <= d_half.row_sum <= true + 1e-2
    assert d_half.row_sum_estimate == pytest.approx(true, rel=1e-6)
    # frozen golden (radius 400)
    assert d_half.row_sum == pytest.approx(1.5710522665775415, rel=1e-10)


def test_upper_constant(d_half):
    # sup |x|^{1.8} |K|^{0.9} is attained at |x| = 1: (4 / (3 pi))^{0.9}
    assert kernel_upper_constant(d_half, 0.8) == pytest.approx((4 / (3 * math.pi)) ** 0.9, rel=1e-10)


def test_series_bounds_bracket(d_half):
    g = 0.3 / d_half.row_sum
    ser = SawSeries(d_half, g, 4, 6)
    # lower bounds from longer walks in a smaller window never exceed the certified upper bound
    longer = saw_counts_all(d_half, 6, 3)
    box = BoxGeometry(3, 1)
    gp = g ** np.arange(7)
    for x in range(-3, 4):
        lo = float(gp @ longer[:, box.index((x,))])
        assert ser.lower((x,)) <= ser.upper((x,))
        assert lo <= ser.upper((x,))
    assert ser.susceptibility_lower() <= ser.susceptibility_upper() <= 1 / (1 - 0.3)


def test_two_point(d_half):
    g = 0.1 / d_half.row_sum
    tp = two_point(d_half, g, 3, 4, 6)
    assert tp.value == pytest.approx(0.0038154516025332317, rel=1e-10)
    assert tp.upper == pytest.approx(0.003822247630356681, rel=1e-10)
    assert tp.tail_estimate <= tp.geometric_tail
    assert two_point(d_half, g, 0, 4, 6).value == 1.0


def test_supercritical_gamma_carries_partial(d_half):
    with pytest.raises(GammaSupercritical) as exc:
        two_point(d_half, 1.0 / d_half.row_sum, 2, 2, 4)
    assert exc.value.partial.value > 0 and math.isinf(exc.value.partial.tail_estimate)
    with pytest.raises(GammaSupercritical):
        susceptibility_partial(d_half, 2.0 / d_half.row_sum, 2, 4)


def test_decay_bound(d_half):
    rep = decay_bound_check(d_half, 0.1 / d_half.row_sum, 0.8)
    assert rep.passes and rep.max_ratio < 1
    assert rep.ell_tilde == 1
    assert rep.k0 == pytest.approx(k0_constant(1, rep.chi_upper, 0.1 / d_half.row_sum, 0.8, rep.C, 1))
    assert rep.k0 == pytest.approx(1.1812745295957137, rel=1e-8)


def test_ell_tilde_zero_gamma(d_half):
    assert ell_tilde_estimate(d_half, 0.0, 0.8) == 1


@pytest.mark.parametrize("x,ell", [((3,), 1), ((5,), 2), ((-4,), 1.5), ((6,), 3)])
def test_key_inequality_truncated(d_half, x, ell):
    r = key_inequality_truncated(d_half, 0.3 / d_half.row_sum, x, ell, 4, 6)
    assert r.holds and r.lhs > 0


def test_key_inequality_truncated_random_2d():
    k = _random_kernel(7, 2, 1)
    r = key_inequality_truncated(k, 0.5 / k.row_sum, (1, 1), 0.5, 3, 2)
    assert r.holds


def test_key_inequality_infinite_volume_sides(d_half):
    ser = SawSeries(d_half, 0.1 / d_half.row_sum, 4, 6)
    r = key_inequality_check(ser, (3,), 1)
    assert r.lhs_upper > 0 and r.rhs_lower > 0


def test_counts_csv(tmp_path, d_half):
    wc = saw_counts(d_half, 2, 3, 4)
    counts_to_csv(tmp_path / "c.csv", d_half, wc)
    meta, cols, rows = io.read_csv(tmp_path / "c.csv")
    assert cols == ["n", "x1", "c_n"] and [r[2] for r in rows] == wc.counts
