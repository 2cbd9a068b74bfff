"""Lattice offsets, symmetry orbits, boxes and power-law lattice sums."""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

__all__ = [
    "as_offset",
    "euclidean_norm",
    "canonical_offsets",
    "expand_canonical",
    "centred_coordinates",
    "BoxGeometry",
    "lattice_tail_bound",
    "lattice_tail_estimate",
]


def as_offset(x, d=None):
    """Normalise ``x`` (int or sequence of ints) to a tuple of ints."""
    if np.ndim(x) == 0:
        x = (int(x),)
    out = tuple(int(v) for v in x)
    if len(out) == 0:
        raise ValueError("lattice offsets need at least one coordinate")
    if d is not None and len(out) != d:
        raise ValueError(f"offset {out} does not have dimension {d}")
    return out


def euclidean_norm(x):
    return math.sqrt(sum(v * v for v in as_offset(x)))


def canonical_offsets(radius, d):
    """One representative per hyperoctahedral orbit inside the cube.

    Representatives have ``0 <= x_1 <= ... <= x_d <= radius``.  Returns an
    ``(M, d)`` int array.
    """
    reps = list(itertools.combinations_with_replacement(range(radius + 1), d))
    return np.array(reps, dtype=int).reshape(len(reps), d)


def centred_coordinates(radius, d):
    """Coordinates of the centred cube ``[-radius, radius]^d``, shape ``(2R+1,)*d + (d,)``."""
    axis = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack(grids, axis=-1)


def expand_canonical(values, radius, d):
    """Spread per-orbit ``values`` (ordered as ``canonical_offsets``) over the cube."""
    values = np.asarray(values, dtype=float)
    canon = canonical_offsets(radius, d)
    lookup = np.zeros((radius + 1,) * d)
    lookup[tuple(canon.T)] = values
    coords = np.sort(np.abs(centred_coordinates(radius, d)), axis=-1)
    return lookup[tuple(np.moveaxis(coords, -1, 0))]


@dataclass(frozen=True)
class BoxGeometry:
    """The box ``[-L, L]^d`` with sites enumerated in C order."""

    side: int
    d: int = 1

    def __post_init__(self):
        if self.side < 0 or self.d < 1:
            raise ValueError("box needs side >= 0 and d >= 1")

    @property
    def n_sites(self):
        return (2 * self.side + 1) ** self.d

    @property
    def sites(self):
        return centred_coordinates(self.side, self.d).reshape(-1, self.d)

    def index(self, x):
        x = as_offset(x, self.d)
        if any(abs(v) > self.side for v in x):
            raise ValueError(f"{x} lies outside the box of side {self.side}")
        return int(np.ravel_multi_index(tuple(v + self.side for v in x), (2 * self.side + 1,) * self.d))

    def site(self, i):
        return tuple(int(v) - self.side for v in np.unravel_index(i, (2 * self.side + 1,) * self.d))


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def lattice_tail_bound(p, radius, d):
    """Upper bound on ``sum_{|x|_2 > radius} |x|^-p`` over ``Z^d``, ``p > d``.

    Each lattice point is compared with the integral over its unit cell.
    """
    if p <= d:
        return math.inf
    h = math.sqrt(d) / 2.0
    r = radius
    if r <= h:
        r = h + 1e-12
    return (1.0 + h / r) ** p * _sphere_area(d) * (r - h) ** (d - p) / (p - d)


def _outside_cube_integral(p, d):
    # int_{|y|_inf > 1} |y|^-p dy = 2d/(p-d) * int_{[-1,1]^{d-1}} (1+|u|^2)^{-p/2} du
    if d == 1:
        return 2.0 / (p - 1.0)
    nodes, weights = np.polynomial.legendre.leggauss(64)
    grids = np.meshgrid(*([nodes] * (d - 1)), indexing="ij")
    w = np.ones_like(grids[0])
    for wi in np.meshgrid(*([weights] * (d - 1)), indexing="ij"):
        w = w * wi
    r2 = sum(g * g for g in grids)
    return 2.0 * d / (p - d) * float(np.sum(w * (1.0 + r2) ** (-p / 2.0)))


def lattice_tail_estimate(p, radius, d):
    """Estimate of ``sum_{|x|_inf > radius} |x|^-p`` (outside the table cube).

    Exact (Hurwitz zeta) for ``d = 1``.  Otherwise the integral over the
    region outside ``[-R - 1/2, R + 1/2]^d`` with the second-order midpoint
    correction ``-(1/24) int Laplacian(|y|^-p)``.
    """
    if p <= d:
        return math.inf
    if d == 1:
        return 2.0 * float(zeta(p, radius + 1))
    a = radius + 0.5
    main = a ** (d - p) * _outside_cube_integral(p, d)
    corr = p * (p - d + 2.0) / 24.0 * a ** (d - p - 2.0) * _outside_cube_integral(p + 2.0, d)
    return main - corr
