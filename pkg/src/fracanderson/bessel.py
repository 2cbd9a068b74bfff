r"""Exponentially scaled modified Bessel functions of integer order.

Everything here works with

.. math::
    B_p(t) = e^{-2t} I_p(2t),

the one-dimensional heat kernel of the lattice Laplacian,
:math:`e^{t\Delta}(0, p) = B_p(t)`.  Unscaled :math:`I_p` overflows for
``t`` of a few hundred and is never formed.

Values are produced by Miller's backward recurrence

.. math::
    B_{p-1}(t) = B_{p+1}(t) + \frac{p}{t} B_p(t),

normalised with :math:`B_0 + 2\sum_{p\ge1} B_p = 1`.
"""

import math

import numpy as np

__all__ = [
    "scaled_bessel_i",
    "scaled_bessel_orders",
    "heat_kernel",
    "asymptotic_coefficients",
    "heat_kernel_series",
]

_RESCALE_AT = 1e250
_RESCALE_BY = 1e-250


def _start_order(pmax, t):
    # Ratio B_start / B_pmax <= exp(-(start^2 - pmax^2) / (4 t)) < e^-40.
    return pmax + 20 + int(math.ceil(math.sqrt(160.0 * t)))


def scaled_bessel_orders(pmax, t):
    """Scaled Bessel values for all orders ``0..pmax`` at several times.

    Parameters
    ----------
    pmax : int
        Largest order returned.
    t : float or array_like
        Nonnegative times.

    Returns
    -------
    ndarray, shape (len(t), pmax + 1)
        ``out[i, p] = exp(-2 t_i) I_p(2 t_i)``.
    """
    pmax = int(pmax)
    if pmax < 0:
        raise ValueError("pmax must be nonnegative")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("t must be finite and nonnegative")
    out = np.zeros((t.size, pmax + 1))
    out[t == 0, 0] = 1.0
    idx = np.flatnonzero(t > 0)
    if idx.size == 0:
        return out
    # Largest t first, so the set of active nodes is always a prefix.
    idx = idx[np.argsort(-t[idx], kind="stable")]
    tt = t[idx]
    starts = np.array([_start_order(pmax, x) for x in tt])
    n = tt.size

    hi = np.zeros(n)
    cur = np.zeros(n)
    total = np.zeros(n)
    res = np.zeros((n, pmax + 1))
    res_count = np.zeros((n, pmax + 1), dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    active = 0
    for p in range(int(starts[0]), 0, -1):
        while active < n and starts[active] >= p:
            cur[active] = 1e-300 if starts[active] == p else 0.0
            active += 1
        a = slice(0, active)
        if p <= pmax:
            res[a, p] = cur[a]
            res_count[a, p] = count[a]
        total[a] += 2.0 * cur[a]
        nxt = hi[a] + (p / tt[a]) * cur[a]
        hi[a] = cur[a]
        cur[a] = nxt
        big = np.flatnonzero(np.abs(cur[a]) > _RESCALE_AT)
        if big.size:
            cur[big] *= _RESCALE_BY
            hi[big] *= _RESCALE_BY
            total[big] *= _RESCALE_BY
            count[big] += 1
    res[:, 0] = cur
    res_count[:, 0] = count
    total += cur
    lag = count[:, None] - res_count
    factor = np.where(lag == 0, 1.0, np.where(lag == 1, _RESCALE_BY, 0.0))
    out[idx] = res * factor / total[:, None]
    return out


def scaled_bessel_i(p, t):
    """``exp(-2t) I_p(2t)`` for integer order ``p`` and ``t >= 0``.

    Scalar inputs give a float; ``t`` may also be an array.
    """
    p = abs(int(p))
    arr = scaled_bessel_orders(p, t)[:, p]
    if np.ndim(t) == 0:
        return float(arr[0])
    return arr.reshape(np.shape(t))


def heat_kernel(x, t, d=None):
    """Heat kernel ``exp(t Delta)(0, x)`` of the lattice Laplacian on Z^d."""
    x = np.atleast_1d(np.asarray(x, dtype=int))
    if d is not None and x.size != d:
        raise ValueError(f"offset {tuple(x)} does not have dimension {d}")
    if t <= 0:
        raise ValueError("t must be positive")
    ax = np.abs(x)
    row = scaled_bessel_orders(int(ax.max()), t)[0]
    return float(np.prod(row[ax]))


def asymptotic_coefficients(nu, terms):
    r"""Large-``t`` expansion of ``B_nu(t)`` in powers of ``1/t``.

    ``B_nu(t) ~ (4 pi t)^{-1/2} * sum_k c_k t^{-k}`` with
    ``c_k = (-1)^k a_k(nu) / 2^k`` and ``a_k`` the Hankel coefficients
    ``prod_{j<=k} (4 nu^2 - (2j - 1)^2) / (k! 8^k)``.
    """
    mu = 4.0 * nu * nu
    c = np.empty(terms)
    a = 1.0
    c[0] = 1.0
    for k in range(1, terms):
        a *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        c[k] = (-1) ** k * a / 2.0**k
    return c


def heat_kernel_series(nu, degree):
    """Taylor coefficients of ``I_nu(2t)`` in ``t`` up to ``degree``.

    ``I_nu(2t) = sum_q t^(2q + nu) / (q! (q + nu)!)``.
    """
    nu = abs(int(nu))
    c = np.zeros(degree + 1)
    q = 0
    while 2 * q + nu <= degree:
        c[2 * q + nu] = 1.0 / (math.factorial(q) * math.factorial(q + nu))
        q += 1
    return c
