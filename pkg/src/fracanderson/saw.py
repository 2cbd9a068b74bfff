r"""Self-avoiding walks with a long-range step kernel ``D``.

``c_n(x)`` is the total weight of ``n``-step self-avoiding walks from ``0``
to ``x`` (weight = product of ``D`` over steps), ``C_gamma(x) = sum_n
c_n(x) gamma^n`` the two-point function and ``chi_gamma = sum_x
C_gamma(x)`` the susceptibility.

Exact enumeration is confined to a window ``[-W, W]^d``.  Dropping walks
only removes nonnegative terms, so confined partial sums are lower bounds.
Certified upper bounds come from dominating self-avoiding walks by all
walks:

.. math::
    C_\gamma(x) \le \sum_{n \ge 0} \gamma^n D_R^{*n}(x)
        - \sum_{n \le n_e} \gamma^n \bigl[(D_W^n)(0,x) - c^W_n(x)\bigr]
        + \gamma\, \sup_{|y|_\infty > R} D(y)\; \chi_w^2 .

Here ``D_R`` is the kernel truncated to its table radius ``R`` (the first
sum is evaluated on a periodic FFT grid, which can only add nonnegative
aliases), ``D_W`` is the kernel restricted to the window, and the last term
bounds every walk that uses at least one step longer than ``R``, with
``chi_w = 1 / (1 - gamma * row_sum)``.  The correction term subtracts the
window walks that are not self-avoiding, which are included in the all-walk
sum but not in ``C_gamma``.

The step kernel for the fractional Anderson model is
``D(0, x) = |(-Delta)^alpha(0, x)|^s``; its decay exponent is
``s (d + 2 alpha) = d + a`` with ``a = 2 alpha_s``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import io
from .errors import BudgetExceeded, GammaSupercritical, SearchExhausted, SubcriticalS
from .lattice import (
    BoxGeometry,
    as_offset,
    centred_coordinates,
    lattice_tail_bound,
    lattice_tail_estimate,
)

__all__ = [
    "SawKernel",
    "WalkCounts",
    "TwoPointValue",
    "saw_kernel_from_laplacian",
    "saw_counts",
    "saw_counts_all",
    "brute_force_counts",
    "SawSeries",
    "two_point",
    "radius_lower_bound",
    "susceptibility_partial",
    "kernel_upper_constant",
    "ell_tilde_estimate",
    "k0_constant",
    "decay_bound_check",
    "key_inequality_check",
    "key_inequality_truncated",
]

ELL_GRID = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)
DEFAULT_BUDGET = 50_000_000


@dataclass(frozen=True)
class SawKernel:
    """Translation-invariant step weights ``D(0, x)`` on ``[-R, R]^d``.

    ``row_sum`` is a certified upper bound on ``sum_{z != 0} D(0, z)``
    (table sum plus ``tail_bound``); ``row_sum_estimate`` uses the fitted
    tail instead.  ``decay_exponent`` is ``d + a`` if known.
    """

    values: np.ndarray = field(repr=False)
    row_sum: float
    truncation_radius: int
    provenance: str = ""
    tail_bound: float = 0.0
    row_sum_estimate: Optional[float] = None
    decay_exponent: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("step weights must be finite and nonnegative")
        if v[(self.truncation_radius,) * v.ndim] != 0:
            raise ValueError("weight at the origin must be zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not (self.row_sum > 0 and math.isfinite(self.row_sum)):
            raise ValueError("row sum must be positive and finite")
        if self.row_sum_estimate is None:
            object.__setattr__(self, "row_sum_estimate", float(self.row_sum))

    @property
    def d(self):
        return self.values.ndim

    @classmethod
    def from_array(cls, values, provenance="array"):
        """Finite-range kernel from a centred array (weight at the centre is cleared)."""
        v = np.array(values, dtype=float)
        if len(set(v.shape)) != 1 or v.shape[0] % 2 == 0:
            raise ValueError("kernel array must be a centred cube of odd side")
        R = (v.shape[0] - 1) // 2
        v[(R,) * v.ndim] = 0.0
        return cls(v, float(v.sum()), R, provenance)

    def weight(self, x):
        x = as_offset(x, self.d)
        R = self.truncation_radius
        if any(abs(c) > R for c in x):
            return 0.0
        return float(self.values[tuple(c + R for c in x)])

    def scaled(self, factor):
        """Kernel multiplied by ``factor > 0``."""
        return SawKernel(
            self.values * factor,
            self.row_sum * factor,
            self.truncation_radius,
            f"{factor:g} * ({self.provenance})",
            self.tail_bound * factor,
            self.row_sum_estimate * factor,
            self.decay_exponent,
        )

    def far_weight_bound(self):
        """Bound on ``D(y)`` for ``|y|_inf`` beyond the table (0 for finite range)."""
        if self.tail_bound == 0.0 or self.decay_exponent is None:
            return 0.0
        C = kernel_upper_constant(self, self.decay_exponent - self.d, outer_only=True)
        return C * (self.truncation_radius + 1.0) ** (-self.decay_exponent)


def saw_kernel_from_laplacian(table, s):
    """``D(0, x) = |(-Delta)^alpha(0, x)|^s`` for ``x != 0``.

    Raises :class:`SubcriticalS` unless ``s (d + 2 alpha) > d``.
    """
    p = table.params
    s = float(s)
    if not 0 < s <= 1:
        raise SubcriticalS("s must lie in (0, 1]")
    if s * p.decay_exponent <= p.d:
        raise SubcriticalS(f"s(d+2alpha) = {s * p.decay_exponent:g} must exceed d = {p.d}")
    vals = np.abs(np.array(table.values)) ** s
    R = table.radius
    vals[(R,) * p.d] = 0.0
    inner = float(vals.sum())
    prov = f"|(-Delta)^alpha|^s, d={p.d}, alpha={p.alpha:g}, s={s:g}"
    if p.alpha == 1.0:
        return SawKernel(vals, inner, R, prov, 0.0, inner, None)
    q = s * p.decay_exponent
    coords = centred_coordinates(R, p.d)
    r = np.sqrt(np.sum(coords.astype(float) ** 2, axis=-1))
    shell = np.max(np.abs(coords), axis=-1) >= max(1, R // 2)
    y = vals[shell] * r[shell] ** q
    upper = float(y.max())
    tail = upper * lattice_tail_bound(q, R, p.d)
    a = np.stack([np.ones(y.size), r[shell] ** -2.0], axis=1)
    (c0, b0), *_ = np.linalg.lstsq(a, y, rcond=None)
    est = c0 * lattice_tail_estimate(q, R, p.d) + b0 * lattice_tail_estimate(q + 2, R, p.d)
    return SawKernel(vals, inner + tail, R, prov, float(tail), inner + float(est), q)


def radius_lower_bound(kernel):
    """``1 / row_sum``, a lower bound on the susceptibility's radius of convergence."""
    return 1.0 / kernel.row_sum


def kernel_upper_constant(kernel, a, outer_only=False):
    """``sup_{x != 0} |x|^{d+a} D(0, x)`` over the table (or its outer half)."""
    R, d = kernel.truncation_radius, kernel.d
    coords = centred_coordinates(R, d)
    r = np.sqrt(np.sum(coords.astype(float) ** 2, axis=-1))
    mask = r > 0
    if outer_only:
        mask &= np.max(np.abs(coords), axis=-1) >= max(1, R // 2)
    return float(np.max(kernel.values[mask] * r[mask] ** (d + a)))


# --------------------------------------------------------------------------
# enumeration


def _window_matrix(kernel, box):
    sites = box.sites
    diff = sites[None, :, :] - sites[:, None, :]
    R = kernel.truncation_radius
    inside = np.all(np.abs(diff) <= R, axis=-1)
    idx = tuple(np.moveaxis(np.clip(diff, -R, R) + R, -1, 0))
    return np.where(inside, kernel.values[idx], 0.0)


def saw_counts_all(kernel, n_max, window_radius, budget=DEFAULT_BUDGET):
    """Confined SAW weights for every endpoint of the window.

    Returns an array ``c[n, i]`` for ``n = 0..n_max`` and site index ``i`` of
    ``BoxGeometry(window_radius, d)``.

    The depth-first search visits paths up to length ``n_max - 2`` one by
    one and adds the last two steps with matrix-vector products.  Children
    are visited in order of descending weight.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    box = BoxGeometry(int(window_radius), kernel.d)
    Dw = _window_matrix(kernel, box)
    V = box.n_sites
    origin = box.index((0,) * kernel.d)
    counts = np.zeros((n_max + 1, V))
    counts[0, origin] = 1.0
    if n_max == 0:
        return counts
    order = [np.argsort(-Dw[i], kind="stable") for i in range(V)]
    order = [o[Dw[i, o] > 0] for i, o in enumerate(order)]
    free = np.ones(V, dtype=bool)
    free[origin] = False
    nodes = [0]

    def finish(last, weight, depth):
        # depth = current path length; add paths of length depth+1 (and depth+2)
        u = Dw[last] * free
        counts[depth + 1] += weight * u
        if depth + 2 <= n_max:
            # second step from each b: D(b, y) with y free and y != b (D(b,b) = 0)
            v = (u @ Dw) * free
            counts[depth + 2] += weight * v

    def dfs(last, weight, depth):
        nodes[0] += 1
        if nodes[0] > budget:
            raise BudgetExceeded(f"enumeration exceeded {budget} nodes")
        if depth + 2 >= n_max:
            finish(last, weight, depth)
            return
        counts[depth + 1] += weight * Dw[last] * free
        for b in order[last]:
            if free[b]:
                free[b] = False
                dfs(b, weight * Dw[last, b], depth + 1)
                free[b] = True

    dfs(origin, 1.0, 0)
    return counts


class WalkCounts(NamedTuple):
    target: tuple
    counts: list
    window_radius: int


def saw_counts(kernel, x, n_max, window_radius, budget=DEFAULT_BUDGET):
    """``c_n(x)`` for ``n = 0..n_max`` with walks confined to the window."""
    x = as_offset(x, kernel.d)
    if max(abs(v) for v in x) > window_radius:
        raise ValueError(f"target {x} outside the window of radius {window_radius}")
    allc = saw_counts_all(kernel, n_max, window_radius, budget)
    i = BoxGeometry(int(window_radius), kernel.d).index(x)
    return WalkCounts(x, [float(v) for v in allc[:, i]], int(window_radius))


def brute_force_counts(kernel, x, n_max, window_radius):
    """Reference enumeration: all site sequences, filtered for self-avoidance.

    Exponential cost; intended for tests on tiny windows.
    """
    import itertools

    x = as_offset(x, kernel.d)
    box = BoxGeometry(int(window_radius), kernel.d)
    sites = [tuple(s) for s in box.sites.tolist()]
    origin = (0,) * kernel.d
    out = [1.0 if x == origin else 0.0]
    for n in range(1, n_max + 1):
        total = 0.0
        for mid in itertools.product(sites, repeat=n - 1):
            path = (origin,) + mid + (x,)
            if len(set(path)) != len(path):
                continue
            w = 1.0
            for a, b in zip(path[:-1], path[1:]):
                w *= kernel.weight(tuple(bb - aa for aa, bb in zip(a, b)))
            total += w
        out.append(total)
    return out


# --------------------------------------------------------------------------
# generating functions with certified bounds


class TwoPointValue(NamedTuple):
    """Partial sum ``value`` of a generating function and a certified ``tail_estimate``.

    ``value + tail_estimate`` bounds the full series from above;
    ``geometric_tail`` is ``(gamma*row_sum)^(n_max+1) / (1 - gamma*row_sum)``.
    """

    gamma: float
    value: float
    n_max: int
    tail_estimate: float
    geometric_tail: float = 0.0

    @property
    def upper(self):
        return self.value + self.tail_estimate


class SawSeries:
    """Lower/upper bounds on ``C_gamma`` for one kernel and ``gamma``.

    Parameters
    ----------
    kernel : SawKernel
    gamma : float
        Requires ``gamma * kernel.row_sum < 1`` for the upper bounds.
    n_exact : int
        Walk length enumerated exactly in the window.
    window_radius : int
        Enumeration window.
    grid : int, optional
        Periodic FFT grid per axis (default: smallest power of two at least
        ``4R + 1``, ``R`` the kernel radius).
    """

    def __init__(self, kernel, gamma, n_exact=4, window_radius=6, grid=None, budget=DEFAULT_BUDGET):
        self.kernel = kernel
        self.gamma = float(gamma)
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.n_exact = int(n_exact)
        self.window = BoxGeometry(int(window_radius), kernel.d)
        self.rho = self.gamma * kernel.row_sum
        self.counts = saw_counts_all(kernel, self.n_exact, window_radius, budget)
        g = self.gamma ** np.arange(self.n_exact + 1)
        self.lower_window = g @ self.counts
        if self.rho >= 1.0:
            self.certified = False
            return
        self.certified = True
        self.chi_walk = 1.0 / (1.0 - self.rho)
        # window walks that are not self-avoiding, weighted by gamma^n
        Dw = _window_matrix(kernel, self.window)
        e = np.zeros(self.window.n_sites)
        e[self.window.index((0,) * kernel.d)] = 1.0
        excess = np.zeros(self.window.n_sites)
        for n in range(1, self.n_exact + 1):
            e = e @ Dw
            excess += g[n] * (e - self.counts[n])
        self.excess = np.maximum(excess, 0.0)
        R, d = kernel.truncation_radius, kernel.d
        M = grid or int(2 ** math.ceil(math.log2(4 * R + 1)))
        if M < 2 * R + 1:
            raise ValueError("FFT grid too small for the kernel radius")
        self.M = M
        per = np.zeros((M,) * d)
        idx = np.ix_(*([np.arange(-R, R + 1) % M] * d))
        per[idx] = kernel.values
        dh = np.fft.fftn(per)
        walk = np.fft.ifftn(1.0 / (1.0 - self.gamma * dh))
        self.walk = np.maximum(walk.real, 0.0) + 1e-15 * self.chi_walk
        self.far = self.gamma * kernel.far_weight_bound() * self.chi_walk**2

    def lower(self, x):
        x = as_offset(x, self.kernel.d)
        if any(abs(v) > self.window.side for v in x):
            return 0.0
        return float(self.lower_window[self.window.index(x)])

    def upper(self, x):
        x = as_offset(x, self.kernel.d)
        if all(v == 0 for v in x):
            return 1.0
        if not self.certified:
            return math.inf
        if any(abs(v) >= self.M // 2 for v in x):
            raise ValueError(f"{x} beyond the FFT grid of size {self.M}")
        u = float(self.walk[tuple(v % self.M for v in x)]) + self.far
        if all(abs(v) <= self.window.side for v in x):
            u -= float(self.excess[self.window.index(x)])
        return max(u, self.lower(x))

    def susceptibility_upper(self):
        if not self.certified:
            return math.inf
        return self.chi_walk - float(self.excess.sum())

    def susceptibility_lower(self):
        return float(self.lower_window.sum())


def _geometric_tail(rho, n_max):
    if rho >= 1:
        return math.inf
    return rho ** (n_max + 1) / (1.0 - rho)


def two_point(kernel, gamma, x, n_max, window_radius, series=None):
    """Partial two-point function ``sum_{n <= n_max} c_n(x) gamma^n`` with certified tail.

    Raises :class:`GammaSupercritical` (carrying the partial value) when
    ``gamma * row_sum >= 1``.
    """
    x = as_offset(x, kernel.d)
    gamma = float(gamma)
    if all(v == 0 for v in x):
        return TwoPointValue(gamma, 1.0, int(n_max), 0.0, 0.0)
    ser = series or SawSeries(kernel, gamma, n_max, window_radius)
    value = ser.lower(x)
    rho = gamma * kernel.row_sum
    if rho >= 1:
        partial = TwoPointValue(gamma, value, int(n_max), math.inf, math.inf)
        raise GammaSupercritical(f"gamma*row_sum = {rho:.4g} >= 1; tail not certifiable", partial)
    return TwoPointValue(gamma, value, int(n_max), max(ser.upper(x) - value, 0.0), _geometric_tail(rho, n_max))


def susceptibility_partial(kernel, gamma, n_max, window_radius, series=None):
    """``sum_n gamma^n sum_x c_n(x)`` over the window, with certified tail."""
    gamma = float(gamma)
    ser = series or SawSeries(kernel, gamma, n_max, window_radius)
    value = ser.susceptibility_lower()
    rho = gamma * kernel.row_sum
    if rho >= 1:
        partial = TwoPointValue(gamma, value, int(n_max), math.inf, math.inf)
        raise GammaSupercritical(f"gamma*row_sum = {rho:.4g} >= 1; tail not certifiable", partial)
    return TwoPointValue(gamma, value, int(n_max), max(ser.susceptibility_upper() - value, 0.0), _geometric_tail(rho, n_max))


# --------------------------------------------------------------------------
# Decay constants


def _lattice_norms(radius, d):
    c = centred_coordinates(int(math.ceil(radius)), d).reshape(-1, d)
    r = np.sqrt(np.sum(c.astype(float) ** 2, axis=1))
    return c, r


def _c_function(kernel, series, radii):
    """Upper bounds on ``c(r) = sum_{|u| <= r <= |v|} C(u) gamma D(u, v)`` for each ``r``."""
    d = kernel.d
    rmax = max(radii)
    cu, ru = _lattice_norms(rmax, d)
    U = np.array([series.upper(tuple(u)) for u in cu])
    R = kernel.truncation_radius
    out = []
    for r in radii:
        sel = ru <= r + 1e-12
        total = 0.0
        # v with |v| < r lie inside the cube of radius ceil(r)
        vin = ru < r - 1e-12
        for u, Uu in zip(cu[sel], U[sel]):
            diff = cu[vin] - u
            ok = np.all(np.abs(diff) <= R, axis=1)
            near = kernel.values[tuple((diff[ok] + R).T)].sum()
            total += Uu * (kernel.row_sum - near)
        out.append(series.gamma * total)
    return np.array(out)


def _candidate_radii(lo, hi, d):
    """The r-values at which sup_{r in [lo, hi]} c(r) is attained (lattice norms plus lo)."""
    _, r = _lattice_norms(hi, d)
    vals = np.unique(r[(r >= lo) & (r <= hi)])
    return np.unique(np.concatenate([[lo], vals]))


def ell_tilde_estimate(kernel, gamma, a, C=None, search_cap=32, check_radius=None, series=None,
                       n_exact=4, window_radius=6, grid=ELL_GRID):
    r"""Smallest ``l`` on ``grid`` with ``c(x) <= 2^{-(d+a)} / 2`` for all ``l <= |x| <= check_radius``.

    ``c(x)`` is bounded from above with certified two-point values; the
    supremum over ``|x|`` is taken exactly by evaluating ``c`` at every
    lattice norm in range (``c`` is piecewise constant in ``|x|``).
    ``C`` is accepted for symmetry with :func:`k0_constant` and unused.
    """
    d = kernel.d
    if series is None:
        series = SawSeries(kernel, gamma, n_exact, window_radius)
    if not series.certified:
        raise GammaSupercritical("gamma*row_sum >= 1; c(x) cannot be bounded")
    threshold = 0.5 * 2.0 ** (-(d + a))
    check_radius = check_radius or 4 * search_cap
    cands = [g for g in grid if g <= search_cap]
    if series.gamma == 0:
        return cands[0]
    rs = _candidate_radii(min(cands) / 3.0, check_radius / 3.0, d)
    cvals = _c_function(kernel, series, rs)
    for ell in cands:
        sel = rs >= ell / 3.0 - 1e-12
        if np.all(cvals[sel] <= threshold):
            return ell
    raise SearchExhausted(f"no radius up to {search_cap} satisfies the c(x) condition")


def k0_constant(ell_tilde, chi, gamma, a, C, d):
    """``K0 = l^{d+a} chi + 2 chi^2 gamma C``."""
    return ell_tilde ** (d + a) * chi + 2.0 * chi * chi * gamma * C


class DecayReport(NamedTuple):
    passes: bool
    max_ratio: float
    argmax: tuple
    k0: float
    ell_tilde: int
    chi_upper: float
    C: float
    a: float


def decay_bound_check(kernel, gamma, a, window=(2, 40), C=None, n_exact=4, window_radius=6, tol=1e-9):
    r"""Check ``C_gamma(x) |x|^{d+a} / K0 <= 1 + tol`` for ``window[0] <= |x| <= window[1]``.

    Uses certified upper bounds on ``C_gamma`` and ``chi``; ``C`` defaults
    to ``sup |x|^{d+a} D(0, x)`` over the kernel table.
    """
    d = kernel.d
    C = kernel_upper_constant(kernel, a) if C is None else float(C)
    series = SawSeries(kernel, gamma, n_exact, window_radius)
    if not series.certified:
        raise GammaSupercritical("gamma*row_sum >= 1")
    chi = series.susceptibility_upper()
    ell = ell_tilde_estimate(kernel, gamma, a, C, series=series)
    k0 = k0_constant(ell, chi, series.gamma, a, C, d)
    lo, hi = window
    c, r = _lattice_norms(hi, d)
    sel = (r >= lo) & (r <= hi)
    ratios = np.array([series.upper(tuple(x)) for x in c[sel]]) * r[sel] ** (d + a) / k0
    i = int(np.argmax(ratios))
    mr = float(ratios[i])
    return DecayReport(mr <= 1 + tol, mr, tuple(int(v) for v in c[sel][i]), k0, ell, chi, C, a)


class KeyInequality(NamedTuple):
    x: tuple
    ell: float
    lhs_upper: float
    rhs_lower: float
    certified: bool


def key_inequality_check(series, x, ell, v_radius=None):
    r"""Both sides of ``C(x) <= sum_{|u| <= l < |v|} C(u) gamma D(u,v) C(x-v)``.

    The left side is bounded from above and the right side from below, so
    ``certified`` means the inequality is verified rigorously.  On the right
    ``C(u)`` uses the window partial sums, and ``C(x - v)`` outside the
    window falls back to its one-step term ``gamma D(x - v)``.  ``v`` runs
    over ``|v|_inf <= v_radius`` (default: half the kernel radius).
    """
    k = series.kernel
    d = k.d
    x = as_offset(x, d)
    W, R = series.window.side, k.truncation_radius
    vr = int(v_radius or max(R // 2, W))
    wsites = series.window.sites
    rw = np.sqrt(np.sum(wsites.astype(float) ** 2, axis=1))
    us = wsites[rw <= ell]
    Lu = np.array([series.lower(tuple(u)) for u in us])
    vs = centred_coordinates(vr, d).reshape(-1, d)
    vs = vs[np.sqrt(np.sum(vs.astype(float) ** 2, axis=1)) > ell]
    y = np.asarray(x)[None, :] - vs
    Ly = np.zeros(len(vs))
    inwin = np.all(np.abs(y) <= W, axis=1)
    Ly[inwin] = series.lower_window[[series.window.index(tuple(t)) for t in y[inwin]]]
    intab = ~inwin & np.all(np.abs(y) <= R, axis=1)
    Ly[intab] = series.gamma * k.values[tuple((y[intab] + R).T)]
    rhs = 0.0
    for u, lu in zip(us, Lu):
        diff = vs - u
        ok = np.all(np.abs(diff) <= R, axis=1)
        rhs += lu * float(k.values[tuple((diff[ok] + R).T)] @ Ly[ok])
    rhs *= series.gamma
    lhs = series.upper(x)
    return KeyInequality(x, float(ell), lhs, rhs, lhs <= rhs)


class TruncatedKeyInequality(NamedTuple):
    x: tuple
    ell: float
    lhs: float
    rhs: float
    holds: bool


def key_inequality_truncated(kernel, gamma, x, ell, n_max, window_radius, rtol=1e-12):
    r"""Exact finite instance of the key inequality.

    Every self-avoiding walk ``0 -> x`` of length ``n <= n_max`` inside the
    window ``W`` splits uniquely at its last visit to ``{|w| <= l}``: a walk
    ``0 -> u`` inside ``W``, one step ``u -> v`` with ``|v| > l`` (``v`` in
    ``W``), and a walk ``v -> x`` which, translated to start at the origin,
    lies in the window ``2W``.  Hence

    ``sum_{n<=N} g^n c^W_n(x) <= g sum_{u,v} D(u,v) sum_{n1+n2<=N-1}
    g^{n1} c^W_{n1}(u) g^{n2} c^{2W}_{n2}(x - v)``

    holds exactly; both sides are computed by enumeration.
    """
    d = kernel.d
    x = as_offset(x, d)
    W = int(window_radius)
    N = int(n_max)
    g = float(gamma)
    box, box2 = BoxGeometry(W, d), BoxGeometry(2 * W, d)
    cW = saw_counts_all(kernel, N, W)
    c2 = saw_counts_all(kernel, max(N - 1, 0), 2 * W)
    gp = g ** np.arange(N + 1)
    lhs = float(gp @ cW[:, box.index(x)])
    sites = box.sites
    r = np.sqrt(np.sum(sites.astype(float) ** 2, axis=1))
    ui, vi = np.flatnonzero(r <= ell), np.flatnonzero(r > ell)
    Duv = _window_matrix(kernel, box)[np.ix_(ui, vi)]
    A = cW[:N, ui]  # n1 = 0..N-1
    B = np.zeros((N, vi.size))
    for j, v in enumerate(sites[vi]):
        B[:, j] = c2[:N, box2.index(tuple(np.asarray(x) - v))]
    S = A @ Duv @ B.T
    n1, n2 = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    mask = n1 + n2 <= N - 1
    rhs = float(g * np.sum((S * gp[n1] * gp[n2])[mask]))
    return TruncatedKeyInequality(x, float(ell), lhs, rhs, lhs <= rhs * (1 + rtol))


def counts_to_csv(path, kernel, walk_counts):
    d = kernel.d
    cols = ["n"] + [f"x{j + 1}" for j in range(d)] + ["c_n"]
    rows = [[n, *walk_counts.target, c] for n, c in enumerate(walk_counts.counts)]
    return io.write_csv(path, {"d": d, "window": walk_counts.window_radius, "kernel": kernel.provenance.replace(" ", "")}, cols, rows)
