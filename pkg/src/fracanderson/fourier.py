"""Fourier coefficients of lattice symbols by periodic trapezoid + Richardson.

A symbol ``S(k)`` on the torus ``[-pi, pi]^d`` is sampled on an ``N^d`` grid;
one inverse FFT gives the trapezoid approximation of

    (2 pi)^-d  int S(k) exp(i k.x) dk

for every ``x`` at once.  When ``S`` has an algebraic singularity at
``k = 0`` the error expands in powers ``N^-p_j`` with exponents known from
the singularity's homogeneity degree, so a few grid doublings followed by
Richardson elimination remove the leading terms.  Singular grid points are
dropped (punctured rule).
"""

import numpy as np

__all__ = ["lattice_symbol_f", "trapezoid_coefficients", "richardson", "fourier_coefficients"]


def lattice_symbol_f(n, d):
    """``f(k) = sum_j 2 (1 - cos k_j)`` on the ``n^d`` FFT grid ``k = 2 pi m / n``."""
    one = 2.0 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    f = one
    for _ in range(d - 1):
        f = np.add.outer(f, one)
    return f


def trapezoid_coefficients(symbol, n, d, radius):
    """Trapezoid coefficients ``c(x)`` for ``|x|_inf <= radius``.

    ``symbol`` maps the array ``f(k)`` to ``S(k)``; non-finite samples are
    set to zero.  Returns a centred real array of side ``2 radius + 1``.
    """
    if 2 * radius + 1 > n:
        raise ValueError(f"grid {n} too small for radius {radius}")
    with np.errstate(divide="ignore", invalid="ignore"):
        s = symbol(lattice_symbol_f(n, d))
    s = np.where(np.isfinite(s), s, 0.0)
    # The symbol is even in every k_j, so the transform is real and even in
    # every x_j; the half spectrum of rfftn covers x_d >= 0.
    c = np.fft.rfftn(s).real / float(n) ** d
    offsets = np.arange(-radius, radius + 1)
    axes = [offsets % n] * (d - 1) + [np.abs(offsets)]
    return c[np.ix_(*axes)]


def richardson(values, exponents):
    """Extrapolate ``values[i] = I + sum_j c_j 2^(-i p_j)`` to ``I``.

    ``values`` are ordered from coarse to fine (grid doubling).  With ``L``
    levels the first ``L - 1`` exponents are eliminated.  Returns
    ``(estimate, error)`` where ``error`` compares against the extrapolant
    built from the finest ``L - 1`` levels.
    """
    values = [np.asarray(v, dtype=float) for v in values]
    levels = len(values)
    if levels == 1:
        return values[0], np.full_like(values[0], np.inf)

    def solve(vals, exps):
        m = len(vals)
        h = 2.0 ** -np.arange(m)
        a = np.ones((m, m))
        for j, p in enumerate(exps[: m - 1]):
            a[:, j + 1] = h**p
        w = np.linalg.solve(a.T, np.eye(m)[0])
        return sum(wi * v for wi, v in zip(w, vals))

    best = solve(values, list(exponents))
    coarse = solve(values[1:], list(exponents))
    return best, np.abs(best - coarse)


def fourier_coefficients(symbol, d, radius, n0, levels, exponents):
    """Richardson-extrapolated Fourier coefficients on ``[-radius, radius]^d``.

    Returns ``(values, error)`` with ``error`` the per-entry extrapolation
    delta.
    """
    vals = [trapezoid_coefficients(symbol, n0 * 2**i, d, radius) for i in range(levels)]
    return richardson(vals, exponents)
