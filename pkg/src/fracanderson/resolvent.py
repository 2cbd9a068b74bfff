r"""Resolvent ``((-Delta)^alpha + m^2)^{-1}`` and inverse ``(-Delta)^{-alpha}`` on Z^d.

Massive case (``m > 0``): Fourier coefficients of ``1/(f(k)^alpha + m^2)``
by the periodic trapezoid rule with Richardson extrapolation.  Expanding
``1/(f^alpha + m^2)`` in powers of ``f^alpha / m^2`` shows the singular
terms are ``f^{j alpha}``, ``j >= 1``, so the trapezoid error runs in
powers ``N^{-(d + 2 j alpha + 2 i)}``.  When the grid cannot resolve the
mass scale ``m^{1/alpha}`` the rule is punctured at ``k = 0`` and the
massless exponents are used instead; the neglected ``O(m^2)`` change is
folded into the error estimate.

Massless case: the subordination integral

.. math::
    (-\Delta)^{-\alpha}(0, x) = \frac{1}{\Gamma(\alpha)} \int_0^\infty
        t^{\alpha-1} H_x(t)\,dt, \qquad \alpha < d/2,

evaluated with the same Bessel engine as the Laplacian; the punctured
Fourier rule is kept as a cross-check.

Riesz constant
--------------
``riesz_constant`` returns ``Gamma(d/2 - alpha)/Gamma(alpha) 2^{d/2 - 2 alpha}``
as usually stated.  With the unitary Fourier convention, the Riesz kernel
amplitude that actually multiplies ``|x - y|^{-(d - 2 alpha)}`` is this
constant divided by ``(2 pi)^{d/2}`` (``riesz_kernel_constant``); the
numerical tail fit of the lattice inverse confirms the latter.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, signal
from scipy.special import gamma as gamma_fn
from scipy.special import ive, jv

from . import fourier
from .errors import AlphaTooLarge, FitUnstable, InvalidMass, QuadratureDivergence, RadiusTooSmall
from .laplacian import (
    FracLaplacianParams,
    QuadratureSpec,
    bochner_integral,
    decay_constant_estimate,
    kernel_entries,
)
from .lattice import as_offset, canonical_offsets, expand_canonical

__all__ = [
    "ResolventParams",
    "SymbolGrid",
    "resolvent_exponents",
    "resolvent_cube",
    "resolvent_entry",
    "inverse_entries",
    "inverse_entry",
    "inverse_entry_fourier",
    "riesz_constant",
    "riesz_kernel_constant",
    "neumann_partial",
    "TailReport",
    "resolvent_tail_check",
    "inverse_tail_fit",
    "riesz_identity_residual",
]

_BASE_GRID = {1: 2**14, 2: 512, 3: 64}


@dataclass(frozen=True)
class ResolventParams:
    lap: FracLaplacianParams
    mass: float

    def __post_init__(self):
        m = float(self.mass)
        if not m >= 0 or not math.isfinite(m):
            raise InvalidMass("mass must be a finite nonnegative number")
        object.__setattr__(self, "mass", m)

    @property
    def d(self):
        return self.lap.d

    @property
    def alpha(self):
        return self.lap.alpha


class SymbolGrid:
    """``f(k) = sum_j 2 (1 - cos k_j)`` on the ``n^d`` FFT grid."""

    def __init__(self, n, d):
        if n < 1 or d < 1:
            raise ValueError("grid size and dimension must be positive")
        self.n, self.d = int(n), int(d)
        self.values = fourier.lattice_symbol_f(self.n, self.d)

    def __repr__(self):
        return f"SymbolGrid(n={self.n}, d={self.d})"


def resolvent_exponents(alpha, d, count, mass_resolved=True, min_gap=0.1):
    """Trapezoid error exponents for the resolvent symbol.

    Massive: the distinct values ``d + 2 j alpha + 2 i`` (``j >= 1``,
    ``j alpha`` not an integer).  Unresolved mass / massless:
    ``d - 2 alpha + 2 i``.
    """
    if not mass_resolved:
        return [d - 2 * alpha + 2 * i for i in range(count)]
    cand = []
    for j in range(1, 40):
        if abs(j * alpha - round(j * alpha)) < 1e-12:
            continue
        for i in range(count + 1):
            cand.append(d + 2 * j * alpha + 2 * i)
    out = []
    for e in sorted(cand):
        if not out or e - out[-1] >= min_gap:
            out.append(e)
        if len(out) == count:
            break
    return out


def _grid_plan(d, radius, quad):
    n0 = quad.fourier_grid or _BASE_GRID.get(d, 32)
    while n0 < 4 * radius + 2:
        n0 *= 2
    levels = quad.levels or (3 if d <= 2 else 4)
    return n0, levels


def resolvent_cube(rp, radius, quad=None):
    """Resolvent on ``[-radius, radius]^d`` (centred array) and its error estimate."""
    if rp.mass <= 0:
        raise InvalidMass("resolvent needs mass > 0; use inverse_entry for m = 0")
    quad = quad or QuadratureSpec("fourier_grid")
    d, a, m2 = rp.d, rp.alpha, rp.mass**2
    n0, levels = _grid_plan(d, radius, quad)
    kappa = rp.mass ** (1.0 / a)  # |k| where f^alpha = m^2
    resolved = kappa * n0 / (2 * math.pi) >= 4.0
    finest = n0 * 2 ** (levels - 1)
    if not resolved and kappa * finest / (2 * math.pi) > 0.05:
        raise QuadratureDivergence(
            f"mass scale {kappa:.3g} is neither resolved nor negligible on grids {n0}..{finest}"
        )
    if resolved:

        def symbol(f):
            return 1.0 / (f**a + m2)

    else:

        def symbol(f):
            fa = f**a
            return np.where(f > 0, 1.0 / (fa + m2), np.nan)

    exps = resolvent_exponents(a, d, max(levels - 1, 1), resolved)
    if not exps:
        # integer alpha: smooth symbol, the trapezoid rule converges geometrically
        coarse = fourier.trapezoid_coefficients(symbol, n0, d, radius)
        vals = fourier.trapezoid_coefficients(symbol, 2 * n0, d, radius)
        return vals, np.abs(vals - coarse)
    vals, err = fourier.fourier_coefficients(symbol, d, radius, n0, levels, exps)
    if not resolved:
        # first-order mass correction m^2 * sum f^{-2 alpha} h^d, ignored above
        f = fourier.lattice_symbol_f(finest, d)
        with np.errstate(divide="ignore"):
            s2 = np.where(f > 0, f ** (-2 * a), 0.0)
        err = err + m2 * float(s2.sum()) / finest**d
    return vals, err


def resolvent_entry(rp, x, quad=None, return_error=False):
    """``((-Delta)^alpha + m^2)^{-1}(0, x)`` for ``m > 0``."""
    x = as_offset(x, rp.d)
    radius = max(max(abs(v) for v in x), 1)
    vals, err = resolvent_cube(rp, radius, quad)
    idx = tuple(v + radius for v in x)
    if return_error:
        return float(vals[idx]), float(err[idx])
    return float(vals[idx])


# --------------------------------------------------------------------------
# massless inverse


def _check_inverse(lap):
    if not lap.alpha < lap.d / 2.0:
        raise AlphaTooLarge(f"inverse needs alpha < d/2 = {lap.d / 2}")


def inverse_entries(lap, offsets, quad=None):
    """Vectorised ``(-Delta)^{-alpha}(0, x)``; returns ``(values, errors)``."""
    _check_inverse(lap)
    quad = quad or QuadratureSpec()
    offsets = np.atleast_2d(np.asarray(offsets, dtype=int))
    j, err = bochner_integral(offsets, lap.alpha, 0.0, quad.resolution, quad.split_point, quad.tail_terms)
    g = gamma_fn(lap.alpha)
    return j / g, err / g


def inverse_entry(lap, x, quad=None):
    """``(-Delta)^{-alpha}(0, x)`` for ``alpha < d/2``."""
    x = as_offset(x, lap.d)
    vals, _ = inverse_entries(lap, [x], quad)
    return float(vals[0])


def inverse_entry_fourier(lap, x, quad=None, return_error=False):
    """Punctured-trapezoid evaluation of the inverse (cross-check route)."""
    _check_inverse(lap)
    quad = quad or QuadratureSpec("fourier_grid")
    x = as_offset(x, lap.d)
    radius = max(max(abs(v) for v in x), 1)
    n0, levels = _grid_plan(lap.d, radius, quad)
    a = lap.alpha
    exps = resolvent_exponents(a, lap.d, max(levels - 1, 1), mass_resolved=False)
    vals, err = fourier.fourier_coefficients(lambda f: f ** (-a), lap.d, radius, n0, levels, exps)
    idx = tuple(v + radius for v in x)
    if return_error:
        return float(vals[idx]), float(err[idx])
    return float(vals[idx])


def riesz_constant(alpha, d):
    """``Gamma(d/2 - alpha) / Gamma(alpha) * 2^{d/2 - 2 alpha}``.

    Examples
    --------
    >>> riesz_constant(0.5, 2)
    1.0
    """
    if not 0 < alpha < d / 2.0:
        raise AlphaTooLarge(f"need 0 < alpha < d/2 = {d / 2}")
    return float(gamma_fn(d / 2.0 - alpha) / gamma_fn(alpha) * 2.0 ** (d / 2.0 - 2 * alpha))


def riesz_kernel_constant(alpha, d):
    """Amplitude of ``(-Delta)^{-alpha}(0,x) ~ A |x|^{-(d-2 alpha)}``.

    Equals ``riesz_constant(alpha, d) / (2 pi)^{d/2}``
    ``= Gamma(d/2 - alpha) / (4^alpha pi^{d/2} Gamma(alpha))``.
    """
    return riesz_constant(alpha, d) / (2.0 * math.pi) ** (d / 2.0)


# --------------------------------------------------------------------------
# Neumann series


def neumann_partial(rp, x, N, window=None, cap=500, kernel=None):
    r"""Partial sum ``m_a^{-2} sum_{n<=N} (P / m_a^2)^n (0, x)``.

    ``P(u, v) = |(-Delta)^alpha(u, v)|`` off the diagonal and
    ``m_a^2 = m^2 + (-Delta)^alpha(0,0)``.  Every term is nonnegative.  The
    walk is confined to the cube ``[-W, W]^d`` (``W = window``), which gives
    a lower bound; the truncation error is estimated against ``W/2`` and
    :class:`RadiusTooSmall` is raised when it exceeds 1% of the value.

    Parameters
    ----------
    kernel : ndarray, optional
        Precomputed centred kernel array of radius ``>= 2W`` (saves time when
        called repeatedly).
    """
    if rp.mass <= 0:
        raise InvalidMass("Neumann series needs mass > 0")
    N = int(N)
    if N < 0 or N > cap:
        raise ValueError(f"N must lie in [0, {cap}]")
    x = as_offset(x, rp.d)
    d = rp.d
    if window is None:
        window = max(4 * max(abs(v) for v in x), 32 if d == 1 else 12)
    W = int(window)
    if max(abs(v) for v in x) > W // 2:
        raise RadiusTooSmall(f"window {W} too small for x={x}")
    if kernel is None:
        canon = canonical_offsets(2 * W, d)
        vals, _ = kernel_entries(rp.lap, canon)
        kernel = expand_canonical(vals, 2 * W, d)
    kr = (kernel.shape[0] - 1) // 2
    if kr < 2 * W:
        raise RadiusTooSmall("kernel radius must be at least twice the window")
    sl = tuple(slice(kr - 2 * W, kr + 2 * W + 1) for _ in range(d))
    P = np.abs(kernel[sl]).copy()
    centre = (2 * W,) * d
    ma2 = rp.mass**2 + float(kernel[(kr,) * d])
    P[centre] = 0.0
    P /= ma2

    def run(w):
        v = np.zeros((2 * w + 1,) * d)
        v[(w,) * d] = 1.0 / ma2
        inner = tuple(slice(2 * W - 2 * w, 2 * W + 2 * w + 1) for _ in range(d))
        Pw = P[inner]
        idx = tuple(c + w for c in x)
        total = v[idx]
        for _ in range(N):
            v = signal.fftconvolve(v, Pw, mode="same")
            np.maximum(v, 0.0, out=v)  # FFT rounding; entries are nonnegative
            total += v[idx]
        return float(total)

    full = run(W)
    if N >= 1 and max(abs(v) for v in x) <= W // 4:
        half = run(W // 2)
        if full - half > 0.01 * full:
            raise RadiusTooSmall(f"window truncation changes the sum by {(full - half) / full:.2%}")
    return full


# --------------------------------------------------------------------------
# tail fits


class TailReport(NamedTuple):
    """Asymptotic constant fit on a window of radii along a coordinate axis."""

    constant_est: float
    reference: float
    relative_error: float
    exponent: float


def _axis_offsets(d, r):
    offs = np.zeros((len(r), d), dtype=int)
    offs[:, 0] = r
    return offs


def _fit_with_corrections(r, y, p, corrections):
    r = np.asarray(r, dtype=float)
    scaled = y * r**p
    cols = [np.ones_like(r)] + [r ** (-c) for c in corrections]
    a = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(a, scaled, rcond=None)
    return float(coef[0])


def _free_slope(r, y):
    if np.any(np.asarray(y) <= 0):
        raise FitUnstable("nonpositive values in fit window")
    slope, _ = np.polyfit(np.log(r), np.log(y), 1)
    return float(slope)


def resolvent_tail_check(rp, fit_window, quad=None, reference=None):
    """Fit ``lim |x|^{d+2a} G_m(0,x)`` and compare with ``c_{a,d} / m^4``.

    ``c_{a,d}`` is taken from :func:`decay_constant_estimate` unless
    ``reference`` is given.  The fit includes the subleading powers
    ``|x|^{-2 alpha}``, ``|x|^{-2}`` predicted by the expansion of the symbol.
    """
    lo, hi = int(fit_window[0]), int(fit_window[1])
    r = np.unique(np.round(np.geomspace(lo, hi, 24)).astype(int))
    if r.size < 8:
        raise FitUnstable("need at least 8 radii in the fit window")
    vals, _ = resolvent_cube(rp, hi, quad)
    centre = (hi,) * rp.d
    y = np.array([vals[(hi + ri,) + centre[1:]] for ri in r])
    p = rp.lap.decay_exponent
    a = rp.alpha
    corr = sorted({2 * a, 2.0} if abs(a - 1) > 1e-12 else {2.0})
    const = _fit_with_corrections(r, y, p, corr)
    if reference is None:
        reference = decay_constant_estimate(rp.lap, (max(lo, 8), max(hi, 64))).constant
    target = reference / rp.mass**4
    return TailReport(const, target, abs(const / target - 1.0), _free_slope(r, y))


class InverseTailFit(NamedTuple):
    constant_est: float
    exponent: float
    ratio_to_riesz: float
    ratio_to_kernel_constant: float


def inverse_tail_fit(lap, fit_window=(30, 150), quad=None):
    """Fit ``|x|^{d-2a} (-Delta)^{-a}(0,x)`` on the axis and compare with the Riesz constants."""
    lo, hi = int(fit_window[0]), int(fit_window[1])
    r = np.unique(np.round(np.geomspace(lo, hi, 16)).astype(int))
    vals, _ = inverse_entries(lap, _axis_offsets(lap.d, r), quad)
    p = lap.d - 2 * lap.alpha
    const = _fit_with_corrections(r, vals, p, [2.0])
    rc = riesz_constant(lap.alpha, lap.d)
    return InverseTailFit(const, _free_slope(r, vals), const / rc, const / riesz_kernel_constant(lap.alpha, lap.d))


# --------------------------------------------------------------------------
# Riesz identity for a Gaussian


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def riesz_identity_residual(alpha, d, gaussian_width=1.0, x=None, epsrel=1e-12):
    r"""Relative mismatch of the two sides of the Riesz-potential identity.

    For ``phi(y) = exp(-|y|^2 / (2 w^2))`` compares

    * Fourier side: ``(2 pi)^{-d/2} int |k|^{-2 alpha} phi_hat(k) e^{i k.x} dk``
      (unitary transform, ``phi_hat(k) = w^d exp(-w^2 |k|^2 / 2)``),
    * potential side: ``A int |x - y|^{-(d - 2 alpha)} phi(y) dy`` with
      ``A = riesz_kernel_constant(alpha, d)``.

    Both are reduced to radial integrals with an algebraic end-point weight.
    """
    if not 0 < alpha < d / 2.0:
        raise AlphaTooLarge(f"need 0 < alpha < d/2 = {d / 2}")
    w = float(gaussian_width)
    if not w > 0:
        raise ValueError("gaussian_width must be positive")
    x = np.zeros(d) if x is None else np.asarray(as_offset(x, d) if np.ndim(x) else (x,), dtype=float)
    if x.size != d:
        raise ValueError(f"x must have {d} coordinates")
    rx = float(np.linalg.norm(x))
    nu = d / 2.0 - 1.0
    area = _sphere_area(d)

    def sphere_cos(k):
        # int over the unit sphere of exp(i k x . omega)
        if rx == 0.0 or k == 0.0:
            return area
        z = k * rx
        return area * math.gamma(d / 2.0) * (2.0 / z) ** nu * jv(nu, z)

    def sphere_gauss(r):
        # exp((|x|^2 + r^2) / (2 w^2)) removed; int exp(-|x + r omega|^2/(2w^2)) d omega
        if rx == 0.0 or r == 0.0:
            return area * math.exp(-(rx * rx + r * r) / (2 * w * w))
        z = r * rx / (w * w)
        return area * math.gamma(d / 2.0) * (2.0 / z) ** nu * ive(nu, z) * math.exp(-((rx - r) ** 2) / (2 * w * w))

    kmax = 40.0 / w
    lhs, lerr = integrate.quad(
        lambda k: w**d * math.exp(-0.5 * (w * k) ** 2) * sphere_cos(k),
        0.0, kmax, weight="alg", wvar=(d - 1 - 2 * alpha, 0.0), epsabs=0.0, epsrel=epsrel, limit=400,
    )
    lhs /= (2.0 * math.pi) ** (d / 2.0)
    rmax = rx + 40.0 * w
    rhs, rerr = integrate.quad(
        sphere_gauss, 0.0, rmax, weight="alg", wvar=(2 * alpha - 1, 0.0), epsabs=0.0, epsrel=epsrel, limit=400,
    )
    rhs *= riesz_kernel_constant(alpha, d)
    if not (math.isfinite(lhs) and math.isfinite(rhs)) or rhs == 0:
        raise QuadratureDivergence("radial integrals did not converge")
    return abs(lhs - rhs) / abs(rhs)
