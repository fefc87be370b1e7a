"""Measurements on configurations and on product Bernoulli measures."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .dynamics import ModelParams
from .fields import ScalarField
from .lattice import LatticeSpec


@dataclass(frozen=True)
class BlockSpec:
    radius: int
    dim: int

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"block radius must be a positive integer, got {self.radius!r}")

    @property
    def cell_count(self) -> int:
        return (2 * self.radius + 1) ** self.dim

    def check_fits(self, lattice: LatticeSpec) -> None:
        if self.radius >= lattice.inv_eps:
            raise ValueError(f"block radius {self.radius} must be < inv_eps = {lattice.inv_eps}")


def default_block_radius(eps: float, dim: int, ell: float = 1.0) -> int:
    """ceil(ell * eps^(-2/d)), the mesoscopic block size."""
    return max(1, math.ceil(ell * eps ** (-2.0 / dim) - 1e-9))


def _box_sum(a: np.ndarray, k: int, axis: int, periodic: bool) -> np.ndarray:
    """Sum over the window [i-k, i+k] along one axis, exact for integer input."""
    pad = [(0, 0)] * a.ndim
    pad[axis] = (k + 1, k)
    padded = np.pad(a, pad, mode="wrap" if periodic else "constant")
    c = np.cumsum(padded, axis=axis)
    n = a.shape[axis]
    hi = np.take(c, np.arange(2 * k + 1, 2 * k + 1 + n), axis=axis)
    lo = np.take(c, np.arange(0, n), axis=axis)
    return hi - lo


def block_sums(occupancy, lattice: LatticeSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Particle count and in-lattice cell count of the radius-k block around every site."""
    occ = np.asarray(occupancy, dtype=np.int64).reshape(lattice.shape)
    ones = np.ones(lattice.shape, dtype=np.int64)
    for axis in range(lattice.dim):
        periodic = axis > 0
        occ = _box_sum(occ, k, axis, periodic)
        ones = _box_sum(ones, k, axis, periodic)
    return occ, ones


def empirical_field(occupancy, lattice: LatticeSpec, block: BlockSpec, stride: int = 1,
                    mode: str = "truncate") -> ScalarField:
    """eps^-1 * (block average of eta - 1/2) on every ``stride``-th site.

    ``mode="truncate"`` keeps every node and averages only over the in-lattice
    part of blocks that stick out of the axis-1 faces. ``mode="restrict"``
    keeps only nodes whose whole block lies inside the lattice.
    """
    block.check_fits(lattice)
    if block.dim != lattice.dim:
        raise ValueError("block and lattice dimensions differ")
    k = block.radius
    counts, cells = block_sums(occupancy, lattice, k)
    # (2c - N) / 2N flips sign exactly under particle-hole exchange
    values = (2 * counts - cells) / (2 * cells) * lattice.inv_eps
    if mode == "restrict":
        keep0 = np.arange(k, lattice.side - k)
    elif mode == "truncate":
        keep0 = np.arange(lattice.side)
    else:
        raise ValueError(f"unknown block mode {mode!r}")
    keep0 = keep0[::stride]
    keep = [keep0] + [np.arange(0, lattice.side, stride)] * (lattice.dim - 1)
    values = values[np.ix_(*keep)]
    axes = tuple(lattice.axis_positions(a)[keep[a]] for a in range(lattice.dim))
    return ScalarField(axes, values, {"eps": lattice.eps, "k": k, "mode": mode})


def current(occupancy, lattice: LatticeSpec, site: int, axis: int, params: ModelParams) -> float:
    """Instantaneous current across the bond (x, x + e_axis); 0 when the bond leaves the lattice."""
    y = lattice.neighbor(site, axis, +1)
    if y is None:
        return 0.0
    occ = np.asarray(occupancy).reshape(-1)
    ex, ey = float(occ[site]), float(occ[y])
    d = params.delta[axis - 1]
    return -(ey - ex) + d * (ey * ex - (ex + ey) / 2)


def conditional_current_mean(rho_bar, block: BlockSpec, delta_i: float):
    """Canonical expectation of the asymmetric current given block density ``rho_bar``.

    Uses the uncentered density in ``[0, 1]``; see ``oracles.block_current_enumeration``.
    """
    n = block.cell_count
    if n < 2:
        raise ValueError("need at least two cells in the block")
    return delta_i * n * rho_bar * (rho_bar - 1) / (n - 1)


def chemical_potential(m, eps: float):
    """eps^-1 * log((1 + 2 eps m) / (1 - 2 eps m))."""
    m = np.asarray(m, dtype=float)
    x = 2 * eps * m
    if np.any(np.abs(x) >= 1):
        raise ValueError("chemical potential needs |2 eps m| < 1")
    out = (np.log1p(x) - np.log1p(-x)) / eps
    return float(out) if out.ndim == 0 else out


def product_relative_entropy(rho1, rho2, eps: float, dim: int | None = None) -> float:
    """eps^d * H(nu_rho1 | nu_rho2) for product Bernoulli measures, natural log.

    Profiles are per-site occupation probabilities (arrays or ScalarFields on
    the same grid). Not the entropy of the true process law, only of its
    product-measure proxy.
    """
    if isinstance(rho1, ScalarField):
        dim = rho1.dim if dim is None else dim
        rho1 = rho1.values
    if isinstance(rho2, ScalarField):
        rho2 = rho2.values
    r1 = np.asarray(rho1, dtype=float)
    r2 = np.asarray(rho2, dtype=float)
    if r1.shape != r2.shape:
        raise ValueError("profiles live on different grids")
    for r in (r1, r2):
        if np.any(r <= 0) or np.any(r >= 1):
            raise ValueError("probabilities must be strictly inside (0, 1)")
    if dim is None:
        dim = r1.ndim
    h = rel_entr(r1, r2) + rel_entr(1 - r1, 1 - r2)
    return float(eps**dim * h.sum())
