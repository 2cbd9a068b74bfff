r"""The fractional Anderson model ``H = (-Delta)^alpha + lambda V_omega``.

This module covers

* disorder distributions and their regularity constants,
* the localization thresholds ``lambda_0 < lambda_AM < lambda_AG``,
* finite-volume Hamiltonians, Green's functions and Monte Carlo estimates
  of the fractional moments ``E|G_z(x, y)|^s``,
* checks of the a-priori bound and of the self-avoiding-walk bound, and
* eigenvector and wave-packet diagnostics.

Random potentials are reproducible: sample ``i`` is drawn from the stream
``PCG64(SeedSequence(master_seed, spawn_key=(i,)))`` and site ``j`` takes
the ``j``-th draw of that stream.  Work is split into chunks of fixed size,
so results do not depend on the number of worker threads.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
from scipy import integrate, stats

from . import io
from .errors import BetaTooLarge, EigFailed, EmptyGrid, InvalidS, RadiusTooSmall, SearchExhausted, SolveFailed
from .laplacian import FracLaplacianParams, decay_constant_estimate
from .lattice import as_offset, lattice_tail_bound
from .saw import SawSeries, decay_bound_check, radius_lower_bound, saw_kernel_from_laplacian

__all__ = [
    "DisorderSpec",
    "ModelParams",
    "McEstimate",
    "ThresholdReport",
    "derived_params",
    "kernel_power_sum",
    "threshold_am",
    "threshold_ag",
    "threshold_lambda0",
    "threshold_schenker",
    "threshold_report",
    "optimize_s",
    "g_function",
    "sample_rng",
    "sample_disorder",
    "build_hamiltonian",
    "greens_entry",
    "greens_samples",
    "fractional_moment_mc",
    "mc_decay_slope",
    "decoupling_integral",
    "apriori_check",
    "saw_bound_check",
    "eigen_decay_analysis",
    "moment_trajectory",
    "dynamical_moment",
    "default_threads",
]

THREADS_ENV = "FRACANDERSON_THREADS"
DEFAULT_Z = complex(0.5, 0.1)
# solves per work unit; fixed so the partition never depends on the thread count
_CHUNK_ENTRIES = 4_000_000


def default_threads():
    """Worker count from ``$FRACANDERSON_THREADS`` (default 1)."""
    try:
        n = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        return 1
    return max(n, 1)


# --------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DisorderSpec:
    """Single-site distribution ``P_0``.

    Use :meth:`uniform` or :meth:`custom`.  Both families have bounded
    densities, hence ``tau = 1`` and ``m_tau = M_1 <= 2 sup p``; for the
    uniform law on ``[-w, w]`` this is ``1 / w``.
    """

    family: str
    support: tuple
    density_bound: Optional[float]
    tau: float
    m_tau: float
    grid: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    density: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.support)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("support must be a compact interval")
        if not (0 < self.tau <= 1):
            raise ValueError("tau must lie in (0, 1]")
        if not self.m_tau > 0:
            raise ValueError("m_tau must be positive")

    @classmethod
    def uniform(cls, width=1.0):
        """Uniform distribution on ``[-width, width]``."""
        w = float(width)
        if not w > 0:
            raise ValueError("width must be positive")
        return cls("uniform_symmetric", (-w, w), 1.0 / (2.0 * w), 1.0, 1.0 / w)

    @classmethod
    def custom(cls, grid, density):
        """Tabulated density, linearly interpolated and renormalized."""
        x = np.asarray(grid, dtype=float)
        p = np.asarray(density, dtype=float)
        if x.ndim != 1 or x.shape != p.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("grid must be increasing and match the density")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("density must be finite and nonnegative")
        mass = float(np.trapezoid(p, x))
        if not mass > 0:
            raise ValueError("density has zero mass")
        p = p / mass
        bound = float(p.max())
        x.setflags(write=False)
        p.setflags(write=False)
        return cls("custom_density", (float(x[0]), float(x[-1])), bound, 1.0, 2.0 * bound, x, p)

    @property
    def width(self):
        return 0.5 * (self.support[1] - self.support[0])

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        lo, hi = self.support
        if self.family == "uniform_symmetric":
            return np.where((v >= lo) & (v <= hi), self.density_bound, 0.0)
        return np.interp(v, self.grid, self.density, left=0.0, right=0.0)

    def _inverse_cdf_table(self):
        # refine the linear interpolant so the tabulated CDF is accurate
        fine = np.linspace(self.grid[0], self.grid[-1], 64 * (self.grid.size - 1) + 1)
        pf = self.pdf(fine)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pf[1:] + pf[:-1]) * np.diff(fine))])
        return cdf / cdf[-1], fine

    def sample(self, rng, size):
        u = rng.random(size)
        lo, hi = self.support
        if self.family == "uniform_symmetric":
            return lo + (hi - lo) * u
        cdf, fine = self._inverse_cdf_table()
        return np.interp(u, cdf, fine)

    def as_dict(self):
        return {
            "family": self.family,
            "support": list(self.support),
            "density_bound": self.density_bound,
            "tau": self.tau,
            "m_tau": self.m_tau,
        }


# --------------------------------------------------------------------------
# parameters and thresholds


def _check_s(s, tau, d, alpha):
    lo = d / (d + 2.0 * alpha)
    if not lo < s < tau:
        raise InvalidS(f"s = {s:g} must lie in (d/(d+2alpha), tau) = ({lo:.6g}, {tau:g})")


@dataclass(frozen=True)
class ModelParams:
    """``H = (-Delta)^alpha + lam V_omega`` at energy ``z``, fractional exponent ``s``."""

    lap: FracLaplacianParams
    disorder: DisorderSpec
    lam: float
    s: float
    z: complex = DEFAULT_Z

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lambda must be positive")
        z = complex(self.z)
        if z.imag == 0:
            raise ValueError("Im z must be nonzero")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "s", float(self.s))
        _check_s(self.s, self.disorder.tau, self.lap.d, self.lap.alpha)

    @property
    def d(self):
        return self.lap.d

    @property
    def alpha_s(self):
        return 0.5 * (self.s * self.lap.decay_exponent - self.d)

    def replace(self, **kw):
        vals = {"lap": self.lap, "disorder": self.disorder, "lam": self.lam, "s": self.s, "z": self.z}
        vals.update(kw)
        return ModelParams(**vals)


def derived_params(s, tau, m_tau, lam, d, alpha):
    """``theta_s``, ``alpha_s`` and ``gamma = theta_s / lam^s``.

    Examples
    --------
    >>> p = derived_params(0.5, 1.0, 1.0, 1.0, 1, 0.5)
    >>> p["theta_s"]
    2.0
    """
    s, tau = float(s), float(tau)
    if not (0 < s < tau <= 1):
        raise InvalidS("need 0 < s < tau <= 1")
    if s * (d + 2.0 * alpha) <= d:
        raise InvalidS(f"s(d+2alpha) = {s * (d + 2 * alpha):g} must exceed d = {d}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    theta = tau / (tau - s) * m_tau ** (s / tau)
    return {
        "theta_s": theta,
        "alpha_s": 0.5 * (s * (d + 2.0 * alpha) - d),
        "gamma": theta / lam**s,
    }


def _tail_constant(saw):
    # sup |x|^q D(x) over the outer table shell, recovered from the certified tail
    if saw.tail_bound == 0.0:
        return 0.0
    return saw.tail_bound / lattice_tail_bound(saw.decay_exponent, saw.truncation_radius, saw.d)


def kernel_power_sum(table, s, beta=0.0, rel_tol=0.25):
    """Certified upper bound on ``sum_x |K(0, x)|^s (1 + |x|)^beta`` over ``Z^d``.

    The table part is summed exactly; beyond it ``|K|^s <= C |x|^{-q}`` with
    ``C`` the supremum over the outer shell, and ``(1 + |x|)^beta <=
    (1 + 1/R)^beta |x|^beta``.  Raises :class:`RadiusTooSmall` when that tail
    exceeds ``rel_tol`` of the total.
    """
    saw = saw_kernel_from_laplacian(table, s)
    R, d = table.radius, table.d
    w = (1.0 + table.norms()) ** beta
    inner = float(np.sum(np.abs(table.values) ** s * w))
    if saw.tail_bound == 0.0:
        return inner, 0.0
    q = saw.decay_exponent
    if q - beta <= d:
        return math.inf, math.inf
    tail = _tail_constant(saw) * (1.0 + 1.0 / R) ** beta * lattice_tail_bound(q - beta, R, d)
    total = inner + tail
    if tail > rel_tol * total:
        raise RadiusTooSmall(f"table radius {R} leaves a tail of {tail / total:.3g} of the lattice sum")
    return total, tail


def threshold_am(s, disorder, kernel):
    r"""``lambda_AM = M_tau^{1/tau} (2 tau/(tau-s) sum_x |K(0,x)|^s)^{1/s}``.

    The sum runs over all of ``Z^d`` including ``x = 0``.  Returns ``inf``
    when ``s (d + 2 alpha) <= d`` (the sum diverges).
    """
    d, alpha = kernel.d, kernel.params.alpha
    s = float(s)
    if not 0 < s < disorder.tau:
        raise InvalidS("need 0 < s < tau")
    if s * (d + 2 * alpha) <= d:
        return math.inf
    total, _ = kernel_power_sum(kernel, s)
    tau = disorder.tau
    return disorder.m_tau ** (1.0 / tau) * (2.0 * tau / (tau - s) * total) ** (1.0 / s)


def threshold_ag(s, beta, disorder, kernel):
    r"""``lambda_AG = M_1 (2/(1-s) sum_x |K(0,x)|^s (1+|x|)^beta)^{1/s}``, ``0 <= beta < 2 alpha_s``."""
    d, alpha = kernel.d, kernel.params.alpha
    s, beta = float(s), float(beta)
    if disorder.density_bound is None or disorder.tau != 1.0:
        raise ValueError("the weighted threshold lambda_AG needs a bounded density")
    _check_s(s, 1.0, d, alpha)
    two_alpha_s = s * (d + 2 * alpha) - d
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta >= two_alpha_s and alpha < 1.0:
        raise BetaTooLarge(f"beta = {beta:g} must be below 2 alpha_s = {two_alpha_s:g}")
    total, _ = kernel_power_sum(kernel, s, beta)
    return disorder.m_tau * (2.0 / (1.0 - s) * total) ** (1.0 / s)


def threshold_lambda0(s, disorder, saw_kernel):
    """``lambda_0 = (theta_s / R)^{1/s}`` with ``R = 1 / row_sum``, a lower bound on ``R_chi``.

    Examples
    --------
    >>> from fracanderson.saw import SawKernel
    >>> k = SawKernel.from_array([1.0, 0.0, 1.0])
    >>> round(threshold_lambda0(0.5, DisorderSpec.uniform(), k), 12)
    16.0
    """
    s = float(s)
    if not 0 < s < disorder.tau:
        raise InvalidS("need 0 < s < tau")
    tau = disorder.tau
    theta = tau / (tau - s) * disorder.m_tau ** (s / tau)
    return (theta / radius_lower_bound(saw_kernel)) ** (1.0 / s)


threshold_schenker = threshold_lambda0  # interface name


class ThresholdReport(NamedTuple):
    s: float
    beta: float
    lambda0: float
    lambda_am: float
    lambda_ag: float
    theta_s: float
    alpha_s: float
    lam: float
    gamma: float
    radius_bound_used: float

    @property
    def chain_holds(self):
        return self.lambda0 < self.lambda_am < self.lambda_ag


def threshold_report(s, beta, disorder, kernel, lam=None):
    """All thresholds at ``(s, beta)``; ``gamma`` is evaluated at ``lam`` (default ``3 lambda_0``)."""
    saw = saw_kernel_from_laplacian(kernel, s)
    l0 = threshold_lambda0(s, disorder, saw)
    lam = 3.0 * l0 if lam is None else float(lam)
    dp = derived_params(s, disorder.tau, disorder.m_tau, lam, kernel.d, kernel.params.alpha)
    return ThresholdReport(
        float(s),
        float(beta),
        l0,
        threshold_am(s, disorder, kernel),
        threshold_ag(s, beta, disorder, kernel),
        dp["theta_s"],
        dp["alpha_s"],
        lam,
        dp["gamma"],
        radius_lower_bound(saw),
    )


def g_function(s, lam, alpha, C):
    r"""Dominating function for ``d = 1``:
    ``g = C^s / ((1-s) lam^s) * [1 + 2 / ((1 + 2 alpha) s - 1)]``."""
    q = (1.0 + 2.0 * alpha) * s
    if q <= 1:
        return math.inf
    return C**s / ((1.0 - s) * lam**s) * (1.0 + 2.0 / (q - 1.0))


class SOptimum(NamedTuple):
    s_star: float
    lambda0_star: float
    s_grid: tuple
    lambda0: tuple
    g_constant: Optional[float]
    g_at_2lambda0: Optional[tuple]


def optimize_s(disorder, kernel, s_grid, g_constant=None):
    """Grid minimiser of ``lambda_0(s)``.

    For ``d = 1`` and ``alpha < 1`` the dominating function ``g(s, 2 lambda_0(s))``
    is also evaluated.  Its constant defaults to the larger of
    ``sup |x|^{1+2alpha} |K(0,x)|`` over the table and the fitted asymptotic
    constant, so that ``|K(0,x)| <= C |x|^{-(1+2alpha)}`` holds.
    """
    grid = sorted(float(s) for s in s_grid)
    if not grid:
        raise EmptyGrid("s grid is empty")
    d, alpha = kernel.d, kernel.params.alpha
    for s in grid:
        _check_s(s, disorder.tau, d, alpha)
    l0 = [threshold_lambda0(s, disorder, saw_kernel_from_laplacian(kernel, s)) for s in grid]
    i = int(np.argmin(l0))
    gvals = None
    if d == 1 and alpha < 1.0:
        if g_constant is None:
            r = kernel.norms()
            mask = r > 0
            sup = float(np.max(np.abs(kernel.values[mask]) * r[mask] ** kernel.params.decay_exponent))
            fitted = decay_constant_estimate(kernel.params).constant
            g_constant = max(sup, abs(fitted))
        gvals = tuple(g_function(s, 2.0 * lam, alpha, g_constant) for s, lam in zip(grid, l0))
    return SOptimum(grid[i], l0[i], tuple(grid), tuple(l0), g_constant, gvals)


# --------------------------------------------------------------------------
# finite volume


def sample_rng(master_seed, sample_index):
    """Independent generator for one disorder sample."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(sample_index),))
    return np.random.Generator(np.random.PCG64(ss))


def sample_disorder(disorder, box, rng):
    """i.i.d. potential on the sites of ``box`` (C order)."""
    return disorder.sample(rng, box.n_sites)


def _hopping(kernel, box):
    sites = box.sites
    R = kernel.radius
    if 2 * box.side > R:
        raise RadiusTooSmall(f"kernel radius {R} is shorter than the box diameter {2 * box.side}")
    diff = sites[None, :, :] - sites[:, None, :]
    return np.array(kernel.values[tuple(np.moveaxis(diff + R, -1, 0))])


def build_hamiltonian(params, box, omega, kernel):
    """Dense ``H^Lambda = (-Delta)^alpha|_Lambda + lam diag(omega)``.

    Parameters
    ----------
    params : ModelParams or float
        Only ``lam`` is used; a bare number is accepted as ``lam``.
    kernel : KernelTable
        Must cover the box diameter ``2L``.
    """
    lam = params.lam if isinstance(params, ModelParams) else float(params)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (box.n_sites,):
        raise ValueError("omega must have one entry per box site")
    H = _hopping(kernel, box)
    H[np.diag_indices_from(H)] += lam * omega
    return H


def _site_index(box, x):
    if isinstance(x, (int, np.integer)) and box is None:
        return int(x)
    return box.index(x)


def greens_entry(H, z, x, y, box=None, rtol=1e-10):
    """``(H - z)^{-1}(x, y)``; ``x``/``y`` are site tuples (with ``box``) or indices."""
    z = complex(z)
    if z.imag == 0:
        raise ValueError("Im z must be nonzero")
    H = np.asarray(H)
    n = H.shape[0]
    i, j = _site_index(box, x), _site_index(box, y)
    A = H - z * np.eye(n)
    b = np.zeros(n, dtype=complex)
    b[j] = 1.0
    try:
        u = scipy.linalg.solve(A, b, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailed(str(exc)) from exc
    res = np.linalg.norm(A @ u - b) / (np.linalg.norm(A, 1) * np.linalg.norm(u))
    if not res < rtol:
        raise SolveFailed(f"relative residual {res:.3g} exceeds {rtol:g}")
    return complex(u[i])


def _chunks(n_samples, n_sites, n_rhs):
    size = max(1, min(256, _CHUNK_ENTRIES // (n_sites * (n_sites + n_rhs))))
    return [(a, min(a + size, n_samples)) for a in range(0, n_samples, size)]


def greens_samples(params, box, pairs, n_samples, master_seed, kernel, threads=None, z=None, rtol=1e-10):
    """``G_z(x, y)`` for every pair and sample.

    Returns ``(values, ok)``: a complex array ``(n_samples, n_pairs)`` and a
    mask of samples whose solve passed the residual check.  Sample ``i``
    always uses the potential from :func:`sample_rng` ``(master_seed, i)``.
    """
    z = params.z if z is None else complex(z)
    if z.imag == 0:
        raise ValueError("Im z must be nonzero")
    pairs = [(as_offset(a, box.d), as_offset(b, box.d)) for a, b in pairs]
    cols = sorted({b for _, b in pairs})
    col_of = {b: k for k, b in enumerate(cols)}
    rows = np.array([box.index(a) for a, _ in pairs])
    pcol = np.array([col_of[b] for _, b in pairs])
    n = box.n_sites
    H0 = _hopping(kernel, box) - z * np.eye(n)
    B = np.zeros((n, len(cols)), dtype=complex)
    B[[box.index(b) for b in cols], np.arange(len(cols))] = 1.0
    norm0 = np.linalg.norm(H0, 1)

    def work(span):
        a, b = span
        omegas = np.stack([sample_disorder(params.disorder, box, sample_rng(master_seed, i)) for i in range(a, b)])
        A = np.broadcast_to(H0, (b - a, n, n)).copy()
        idx = np.arange(n)
        A[:, idx, idx] += params.lam * omegas
        try:
            U = np.linalg.solve(A, np.broadcast_to(B, (b - a, n, len(cols))))
            ok = np.ones(b - a, dtype=bool)
        except np.linalg.LinAlgError:
            U = np.zeros((b - a, n, len(cols)), dtype=complex)
            ok = np.zeros(b - a, dtype=bool)
            for k in range(b - a):
                try:
                    U[k] = np.linalg.solve(A[k], B)
                    ok[k] = True
                except np.linalg.LinAlgError:
                    pass
        res = np.linalg.norm(A @ U - B, axis=(1, 2)) / ((norm0 + params.lam * np.abs(omegas).max(axis=1)) * np.linalg.norm(U, axis=(1, 2)))
        ok &= res < rtol
        return U[:, rows, pcol], ok

    spans = _chunks(int(n_samples), n, len(cols))
    threads = threads or default_threads()
    if threads == 1:
        parts = [work(sp) for sp in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, spans))
    vals = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    return vals, ok


class McEstimate(NamedTuple):
    """Monte Carlo estimate of ``E|G_z(x0, x)|^s``.

    ``mean``/``stderr`` are the plain sample statistics; ``median_of_means``
    uses 16 consecutive blocks.  ``discarded`` counts failed solves.
    """

    pair: tuple
    mean: float
    stderr: float
    n_samples: int
    master_seed: int
    median_of_means: float = math.nan
    s: float = math.nan
    z: complex = DEFAULT_Z
    discarded: int = 0

    @property
    def distance(self):
        a, b = self.pair
        return math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))


def _moment_estimates(G, ok, pairs, s, z, master_seed, blocks=16):
    a = np.abs(G[ok]) ** s
    n = a.shape[0]
    if n < 2:
        raise SolveFailed("fewer than two successful samples")
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / math.sqrt(n)
    nb = min(blocks, n)
    mom = np.median([blk.mean(axis=0) for blk in np.array_split(a, nb)], axis=0)
    out = []
    for k, (x0, x) in enumerate(pairs):
        out.append(McEstimate((tuple(x0), tuple(x)), float(mean[k]), float(se[k]), int(n), int(master_seed),
                              float(mom[k]), float(s), complex(z), int(ok.size - n)))
    return out


def fractional_moment_mc(params, box, pairs, n_samples, master_seed, kernel, threads=None, s_values=None):
    """Estimate ``E|G_z(x0, x)|^s`` for each pair over i.i.d. potentials.

    Parameters
    ----------
    params : ModelParams
    box : BoxGeometry
    pairs : list of (site, site)
    n_samples : int
        At least 100.
    master_seed : int
    kernel : KernelTable
        Covers the box diameter.
    threads : int, optional
        Worker threads (default from the environment); never changes results.
    s_values : sequence of float, optional
        Extra exponents; the same samples are reused.  Defaults to ``[params.s]``.

    Returns
    -------
    list of McEstimate
        Ordered by pair (and by ``s`` within a pair when several are given).
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    pairs = [(as_offset(a, box.d), as_offset(b, box.d)) for a, b in pairs]
    G, ok = greens_samples(params, box, pairs, n_samples, master_seed, kernel, threads)
    svals = [params.s] if s_values is None else [float(s) for s in s_values]
    per_s = [_moment_estimates(G, ok, pairs, s, params.z, master_seed) for s in svals]
    return [est[k] for k in range(len(pairs)) for est in per_s]


def mc_estimates_to_csv(path, estimates, meta=None):
    """Rows ``x1..xd, y1..yd, mean, stderr, n, seed``."""
    d = len(estimates[0].pair[0])
    cols = [f"x{j + 1}" for j in range(d)] + [f"y{j + 1}" for j in range(d)] + ["mean", "stderr", "n", "seed"]
    rows = [[*e.pair[0], *e.pair[1], e.mean, e.stderr, e.n_samples, e.master_seed] for e in estimates]
    return io.write_csv(path, meta, cols, rows)


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float
    n_points: int


def mc_decay_slope(estimates, window):
    """Least-squares slope of ``log mean`` against ``log |x - x0|`` on ``window``."""
    lo, hi = window
    pts = [(e.distance, e.mean) for e in estimates if lo <= e.distance <= hi and e.mean > 0]
    if len(pts) < 3:
        raise ValueError("need at least three estimates inside the window")
    r, y = np.log(np.array(pts)).T
    fit = stats.linregress(r, y)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.stderr), len(pts))


# --------------------------------------------------------------------------
# bound checks


def decoupling_integral(disorder, s, eta):
    r"""``int |v - eta|^{-s} dP_0(v)`` by adaptive quadrature.

    The integrand is split at ``Re eta``; for real ``eta`` the algebraic
    singularity is handled by the ``alg`` weight.
    """
    eta = complex(eta)
    lo, hi = disorder.support
    a, b = eta.real, abs(eta.imag)
    brk = sorted({lo, hi, min(max(a, lo), hi)})
    if disorder.family == "custom_density":
        brk = sorted(set(brk) | {float(v) for v in disorder.grid})
    total = 0.0
    for u, v in zip(brk[:-1], brk[1:]):
        if b == 0 and (u == a or v == a):
            # |v - a|^{-s} at one endpoint
            wvar = (-s, 0.0) if u == a else (0.0, -s)
            val, _ = integrate.quad(disorder.pdf, u, v, weight="alg", wvar=wvar, epsabs=1e-14, epsrel=1e-12, limit=200)
        else:
            val, _ = integrate.quad(lambda t: disorder.pdf(t) * ((t - a) ** 2 + b * b) ** (-s / 2), u, v,
                                    epsabs=1e-14, epsrel=1e-12, limit=200)
        total += float(val)
    return total


class AprioriRow(NamedTuple):
    s: float
    lam: float
    z: complex
    site: tuple
    mean: float
    stderr: float
    bound: float
    passes: bool


class AprioriReport(NamedTuple):
    passes: bool
    rows: list
    decoupling_max: float
    decoupling_bound: float
    decoupling_passes: bool


def apriori_check(params, box, n_samples, master_seed, kernel, lambdas=None, s_values=None, zs=None,
                  sites=None, threads=None, etas=None):
    r"""Check ``E|G_z(x,x)|^s <= theta_s / lam^s`` (within three standard errors).

    Grids default to ``params.lam``, ``params.s`` and ``params.z``.  The
    decoupling integral is checked deterministically on an ``eta`` grid
    for the largest ``s``.
    """
    lambdas = [params.lam] if lambdas is None else list(lambdas)
    s_values = [params.s] if s_values is None else list(s_values)
    zs = [params.z] if zs is None else [complex(z) for z in zs]
    sites = [(0,) * box.d] if sites is None else [as_offset(x, box.d) for x in sites]
    dis = params.disorder
    rows = []
    for lam in lambdas:
        for z in zs:
            p = params.replace(lam=lam, z=z)
            est = fractional_moment_mc(p, box, [(x, x) for x in sites], n_samples, master_seed, kernel, threads, s_values)
            for e in est:
                bound = derived_params(e.s, dis.tau, dis.m_tau, lam, box.d, params.lap.alpha)["theta_s"] / lam**e.s
                rows.append(AprioriRow(e.s, float(lam), z, e.pair[0], e.mean, e.stderr, bound,
                                       e.mean <= bound + 3 * e.stderr))
    smax = max(s_values)
    if etas is None:
        lo, hi = dis.support
        re = np.linspace(lo - 0.5, hi + 0.5, 41)
        etas = [complex(a, b) for a in re for b in (0.0, 0.01, 0.1, 1.0)]
    theta = dis.tau / (dis.tau - smax) * dis.m_tau ** (smax / dis.tau)
    dmax = max(decoupling_integral(dis, smax, e) for e in etas)
    dpass = dmax <= theta * (1 + 1e-9)
    return AprioriReport(all(r.passes for r in rows) and dpass, rows, dmax, theta, dpass)


class SawBoundRow(NamedTuple):
    pair: tuple
    mean: float
    stderr: float
    saw_bound: float
    decay_form: float
    passes: bool
    margin: float


class SawBoundReport(NamedTuple):
    precondition_met: bool
    passes: bool
    lam: float
    lambda0: float
    gamma: float
    k0: float
    rows: list
    note: str = ""


def saw_bound_check(params, estimates, kernel, n_exact=4, window_radius=6, series=None):
    r"""Compare MC moments with ``gamma C_gamma(x - x0)``.

    ``C_gamma`` is bounded from above with certified two-point values for
    ``D = |K|^s``.  A row passes if ``mean - 3 stderr`` does not exceed that
    bound.  The power-law form ``K0 theta_s lam^{-s} |x - y|^{-(d + 2 alpha_s)}``
    is reported alongside (``nan`` when ``l~`` cannot be certified).

    If ``lam <= lambda_0(s)`` the theorem does not apply; the report then
    has ``precondition_met = False`` and does not pass.
    """
    dis = params.disorder
    saw = saw_kernel_from_laplacian(kernel, params.s)
    l0 = threshold_lambda0(params.s, dis, saw)
    dp = derived_params(params.s, dis.tau, dis.m_tau, params.lam, kernel.d, kernel.params.alpha)
    gamma = dp["gamma"]
    if params.lam <= l0:
        return SawBoundReport(False, False, params.lam, l0, gamma, math.nan, [],
                              f"lambda = {params.lam:.6g} <= lambda_0 = {l0:.6g}: the theorem's precondition is unmet")
    if series is None:
        series = SawSeries(saw, gamma, n_exact, window_radius)
    a = 2.0 * dp["alpha_s"]
    try:
        k0 = decay_bound_check(saw, gamma, a, n_exact=n_exact, window_radius=window_radius).k0
    except SearchExhausted:
        k0 = math.nan
    rows = []
    for e in estimates:
        x0, x = e.pair
        off = tuple(u - v for u, v in zip(x, x0))
        r = math.sqrt(sum(v * v for v in off))
        bound = gamma * series.upper(off)
        form = k0 * gamma * r ** (-(kernel.d + a)) if r > 0 else math.nan
        low = e.mean - 3 * e.stderr
        rows.append(SawBoundRow(e.pair, e.mean, e.stderr, bound, form, low <= bound, bound - low))
    return SawBoundReport(True, all(r.passes for r in rows), params.lam, l0, gamma, k0, rows)


# --------------------------------------------------------------------------
# eigenvectors and dynamics


def _eigh(H):
    try:
        return scipy.linalg.eigh(H, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigFailed(str(exc)) from exc


class EigenDecayReport(NamedTuple):
    centers: np.ndarray
    decay_t: np.ndarray
    threshold: float
    fraction_passing: float
    median_t: float


def eigen_decay_analysis(params, box, omega, kernel, slack=0.3):
    r"""Fit ``log|phi|^2 ~ -t log(1 + |y - c|)`` for every eigenvector.

    ``c`` is the site of maximal ``|phi|^2`` (lowest index among ties, i.e.
    the lexicographically smallest site).  ``threshold = 2 alpha_s - slack``.
    """
    H = build_hamiltonian(params, box, omega, kernel)
    _, V = _eigh(H)
    P = V * V
    centers = np.argmax(P, axis=0)
    sites = box.sites.astype(float)
    dist = np.sqrt(np.sum((sites[:, None, :] - sites[None, centers, :]) ** 2, axis=-1))
    X = np.log1p(dist)
    Y = np.log(np.maximum(P, np.finfo(float).tiny))
    Xc = X - X.mean(axis=0)
    slope = np.sum(Xc * (Y - Y.mean(axis=0)), axis=0) / np.sum(Xc * Xc, axis=0)
    t = -slope
    thr = 2.0 * params.alpha_s - slack
    return EigenDecayReport(box.sites[centers], t, thr, float(np.mean(t >= thr)), float(np.median(t)))


class Trajectory(NamedTuple):
    times: np.ndarray
    moments: np.ndarray
    boundary_mass: np.ndarray


def moment_trajectory(params, box, omega, kernel, beta, t_grid, boundary_width=None):
    r"""``M(t) = sum_{x != 0} |x|^beta |e^{-itH}(0, x)|^2`` on ``t_grid``.

    ``boundary_mass`` is the weight of the wave packet within
    ``boundary_width`` (default ``L/10``) of the box faces.
    """
    beta = float(beta)
    if not 0 < beta < 2 * params.lap.alpha:
        raise BetaTooLarge(f"beta must lie in (0, 2 alpha) = (0, {2 * params.lap.alpha:g})")
    H = build_hamiltonian(params, box, omega, kernel)
    E, V = _eigh(H)
    o = box.index((0,) * box.d)
    sites = box.sites
    w = np.sqrt(np.sum(sites.astype(float) ** 2, axis=1)) ** beta
    bw = boundary_width or max(1, box.side // 10)
    edge = np.max(np.abs(sites), axis=1) > box.side - bw
    t = np.asarray(t_grid, dtype=float)
    psi = V @ (np.exp(-1j * np.outer(E, t)) * V[o][:, None])
    prob = np.abs(psi) ** 2
    return Trajectory(t, w @ prob, edge @ prob)


def dynamical_moment(params, box, omega, kernel, beta, t_grid):
    """``max_t sum_{x != 0} |x|^beta |e^{-itH}(0, x)|^2`` over ``t_grid``."""
    return float(moment_trajectory(params, box, omega, kernel, beta, t_grid).moments.max())
