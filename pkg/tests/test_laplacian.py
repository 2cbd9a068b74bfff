import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import closed_form_1d
from fracanderson.errors import FitUnstable, InvalidAlpha, QuadratureDivergence, RadiusTooSmall
from fracanderson.laplacian import (
    FracLaplacianParams,
    KernelTable,
    QuadratureSpec,
    bochner_integral,
    continuum_constant,
    cross_validate,
    decay_constant_estimate,
    frac_laplacian_entry,
    kernel_entries,
    kernel_table,
    limit_probe,
    row_sum_residual,
    tail_correction,
)


def test_params_validation():
    with pytest.raises(InvalidAlpha, match=r"alpha must lie in \(0,1\]"):
        FracLaplacianParams(1, 1.5)
    with pytest.raises(InvalidAlpha):
        FracLaplacianParams(2, 0.0)
    with pytest.raises(ValueError):
        FracLaplacianParams(0, 0.5)
    assert FracLaplacianParams(2, 0.25).decay_exponent == 2.5


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(method="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(resolution=4)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_alpha_one_is_the_stencil(d):
    t = kernel_table(FracLaplacianParams(d, 1.0), 2)
    c = (2,) * d
    assert t.values[c] == 2.0 * d
    assert t.value((1,) + (0,) * (d - 1)) == -1.0
    assert t.value((1, 1) + (0,) * (d - 2)) == 0.0 if d > 1 else True
    assert np.sum(t.values) == 0.0
    assert t.tail_bound == 0.0


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.95])
def test_matches_closed_form_1d(alpha):
    x = np.array([0, 1, 2, 5, 17, 60, 250])
    vals, errs = kernel_entries(FracLaplacianParams(1, alpha), x[:, None])
    ref = np.array([closed_form_1d(alpha, v) for v in x])
    np.testing.assert_allclose(vals, ref, rtol=1e-11)
    assert np.all(errs <= 1e-10 * np.abs(vals))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.02, 0.98), st.integers(0, 400))
def test_closed_form_property(alpha, x):
    v = frac_laplacian_entry(FracLaplacianParams(1, alpha), x)
    assert v == pytest.approx(closed_form_1d(alpha, x), rel=1e-10)
    # off-diagonal entries are negative, the centre positive
    assert (v > 0) == (x == 0)


def _entry_2d_oracle(alpha, x):
    def f(k2, k1):
        sym = (4 - 2 * math.cos(k1) - 2 * math.cos(k2)) ** alpha
        return sym * math.cos(k1 * x[0]) * math.cos(k2 * x[1])

    val, _ = integrate.dblquad(f, 0, math.pi, 0, math.pi, epsabs=1e-13, epsrel=1e-12)
    return val / math.pi**2


@pytest.mark.parametrize("x", [(0, 0), (1, 0), (1, 1), (3, 2)])
def test_matches_direct_2d_integral(x):
    v = frac_laplacian_entry(FracLaplacianParams(2, 0.5), x)
    assert v == pytest.approx(_entry_2d_oracle(0.5, x), rel=1e-8, abs=1e-12)


def test_cross_validate_routes():
    rng = np.random.default_rng(3)
    offs = rng.integers(0, 20, size=(12, 2))
    cc = cross_validate(FracLaplacianParams(2, 0.4), offs)
    assert cc.rel_diff.max() < 1e-8


def test_fourier_route_3d_entry():
    p = FracLaplacianParams(3, 0.5)
    b = frac_laplacian_entry(p, (1, 2, 0))
    f = frac_laplacian_entry(p, (1, 2, 0), QuadratureSpec("fourier_grid"))
    assert f == pytest.approx(b, rel=1e-7)


def test_bochner_divergence_is_reported():
    # a tolerance below rounding cannot be met
    with pytest.raises(QuadratureDivergence):
        kernel_entries(FracLaplacianParams(1, 0.5), [[3]], QuadratureSpec(tol=1e-30))


def test_bochner_integral_returns_errors():
    vals, errs = bochner_integral(np.array([[0], [4]]), -0.5, 1.0)
    assert vals.shape == errs.shape == (2,)
    assert np.all(errs >= 0)


def test_table_symmetry_and_tail(table_1d_half):
    t = table_1d_half
    np.testing.assert_array_equal(t.values, t.values[::-1])
    # tail bound dominates the exact tail 2 sum_{x > R} |K(x)|
    exact = 2 * sum(abs(closed_form_1d(0.5, x)) for x in range(201, 200_000))
    assert t.tail_bound >= exact
    assert t.tail_bound < 2 * exact


@pytest.mark.parametrize("d,alpha,R", [(1, 0.3, 200), (1, 0.5, 200), (1, 0.7, 200), (2, 0.5, 60)])
def test_row_sum_vanishes(d, alpha, R):
    t = kernel_table(FracLaplacianParams(d, alpha), R)
    assert abs(row_sum_residual(t)) < 1e-4


def test_row_sum_radius_too_small():
    t = kernel_table(FracLaplacianParams(1, 0.2), 10)
    with pytest.raises(RadiusTooSmall):
        row_sum_residual(t, tol=1e-9)


def test_tail_correction_constant(table_1d_half):
    # the fitted amplitude is the continuum constant 1/pi for alpha = 1/2
    assert tail_correction(table_1d_half).constant == pytest.approx(1 / math.pi, rel=1e-6)


def test_continuum_constant_values():
    assert continuum_constant(0.5, 1) == pytest.approx(1 / math.pi, rel=1e-15)
    # d = 3, alpha = 1/2: 4^{1/2} Gamma(2) / (pi^{3/2} 2 sqrt(pi)) = 1 / pi^2
    assert continuum_constant(0.5, 3) == pytest.approx(1 / math.pi**2, rel=1e-14)
    assert continuum_constant(1.0, 2) == 0.0


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_decay_fit(alpha):
    fit = decay_constant_estimate(FracLaplacianParams(1, alpha))
    assert fit.exponent == pytest.approx(-(1 + 2 * alpha), rel=0.02)
    assert fit.constant == pytest.approx(continuum_constant(alpha, 1), rel=1e-6)
    assert fit.lower <= fit.constant * 1.01 and fit.upper >= fit.constant * 0.99


def test_decay_fit_alpha_one_is_unstable():
    with pytest.raises(FitUnstable):
        decay_constant_estimate(FracLaplacianParams(1, 1.0))


@pytest.mark.parametrize("d", [1, 2])
def test_alpha_limits(d):
    for k in range(4):
        x = (k,) + (0,) * (d - 1)
        near_one, = limit_probe(x, d, [0.999])
        near_zero, = limit_probe(x, d, [0.001])
        stencil = [2 * d, 1, 0, 0][k]
        assert near_one == pytest.approx(stencil, abs=0.05)
        assert near_zero == pytest.approx(1.0 if k == 0 else 0.0, abs=0.05)


def test_limit_probe_validation():
    with pytest.raises(InvalidAlpha):
        limit_probe(0, 1, [1.0])
    with pytest.raises(ValueError):
        limit_probe(0, 1, [0.5, 0.2])


def test_csv_roundtrip(tmp_path):
    t = kernel_table(FracLaplacianParams(2, 0.3), 4)
    t.to_csv(tmp_path / "k.csv")
    back = KernelTable.from_csv(tmp_path / "k.csv")
    np.testing.assert_array_equal(back.values, t.values)
    assert back.params == t.params and back.radius == 4
    t.to_json(tmp_path / "k.json")
    assert (tmp_path / "k.json").read_text().count("tail_bound") == 1


def test_fourier_route_far_entry_2d():
    # frozen from a 30-digit mpmath evaluation of the Bochner integral
    ref = -8.4991561077182782e-7
    v = frac_laplacian_entry(FracLaplacianParams(2, 0.5), (57, 5), QuadratureSpec("fourier_grid"))
    assert v == pytest.approx(ref, rel=1e-9)
