"""Cylinder lattice {-n..n} x (torus of side 2n+1)^(d-1).

Axis 1 (index 0 in code) is the open axis carrying the reservoirs; every other
axis is periodic. Sites are stored row-major with axis 1 slowest, so each
axis-1 slice is a contiguous range of linear indices.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class BoundaryClass(enum.Enum):
    INTERIOR = "interior"
    GAMMA_PLUS = "gamma_plus"  # x1 = -inv_eps, creation face
    GAMMA_MINUS = "gamma_minus"  # x1 = +inv_eps, annihilation face


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice geometry. ``torus=True`` also wraps axis 1 (no reservoirs)."""

    inv_eps: int
    dim: int
    torus: bool = False

    def __post_init__(self):
        if int(self.inv_eps) != self.inv_eps or self.inv_eps < 1:
            raise ValueError(f"inv_eps must be a positive integer, got {self.inv_eps!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")

    @property
    def eps(self) -> float:
        return 1.0 / self.inv_eps

    @property
    def side(self) -> int:
        return 2 * self.inv_eps + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def site_count(self) -> int:
        return self.side**self.dim

    @property
    def face_size(self) -> int:
        return self.side ** (self.dim - 1)

    def encode(self, coords) -> int:
        """Linear index of a coordinate tuple with entries in {-inv_eps..inv_eps}."""
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(coords)}")
        if any(abs(c) > self.inv_eps for c in coords):
            raise ValueError(f"coordinates {coords} outside the lattice")
        return int(np.ravel_multi_index(tuple(c + self.inv_eps for c in coords), self.shape))

    def decode(self, index: int) -> tuple[int, ...]:
        self._check_index(index)
        offsets = np.unravel_index(int(index), self.shape)
        return tuple(int(o) - self.inv_eps for o in offsets)

    def _check_index(self, index: int) -> None:
        if not 0 <= int(index) < self.site_count:
            raise IndexError(f"site {index} not in [0, {self.site_count})")

    @cached_property
    def coordinates(self) -> np.ndarray:
        """(site_count, dim) integer array of site coordinates."""
        grids = np.indices(self.shape).reshape(self.dim, -1).T
        return grids - self.inv_eps

    def macro_coordinates(self) -> np.ndarray:
        """(site_count, dim) macroscopic positions of every site.

        Axis 1 uses eps * x1, so the faces sit at u1 = -1 and u1 = +1. The
        periodic axes use 2 * x_j / side, which identifies the microscopic
        torus with the macroscopic torus of length 2.
        """
        c = self.coordinates.astype(float)
        u = np.empty_like(c)
        u[:, 0] = c[:, 0] * (2.0 / self.side if self.torus else self.eps)
        u[:, 1:] = c[:, 1:] * (2.0 / self.side)
        return u

    def axis_positions(self, axis: int) -> np.ndarray:
        """Macroscopic positions along one axis (0-based)."""
        x = np.arange(-self.inv_eps, self.inv_eps + 1, dtype=float)
        return x * self.eps if axis == 0 and not self.torus else x * (2.0 / self.side)

    def neighbor(self, index: int, axis: int, sign: int) -> int | None:
        """Neighbor of a site along ``axis`` (1-based, as in the model) in direction ``sign``.

        Axis 1 has hard walls, so stepping off a face gives ``None``; the other
        axes wrap around.
        """
        if not 1 <= axis <= self.dim:
            raise ValueError(f"axis must be in [1, {self.dim}], got {axis}")
        if sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {sign}")
        coords = list(self.decode(index))
        j = axis - 1
        c = coords[j] + sign
        if j == 0 and not self.torus:
            if abs(c) > self.inv_eps:
                return None
        else:
            c = (c + self.inv_eps) % self.side - self.inv_eps
        coords[j] = c
        return self.encode(coords)

    def classify(self, index: int) -> BoundaryClass:
        x1 = self.decode(index)[0]
        if self.torus:
            return BoundaryClass.INTERIOR
        if x1 == -self.inv_eps:
            return BoundaryClass.GAMMA_PLUS
        if x1 == self.inv_eps:
            return BoundaryClass.GAMMA_MINUS
        return BoundaryClass.INTERIOR

    def face_sites(self, boundary: BoundaryClass) -> np.ndarray:
        """Linear indices of a face, contiguous by construction."""
        if boundary is BoundaryClass.GAMMA_PLUS:
            return np.arange(0, self.face_size)
        if boundary is BoundaryClass.GAMMA_MINUS:
            return np.arange(self.site_count - self.face_size, self.site_count)
        raise ValueError("only the two faces have a site list")

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """(site_count, dim, 2) table: [s, a, 0] is s + e_a, [s, a, 1] is s - e_a, -1 if absent."""
        n, d = self.site_count, self.dim
        table = np.empty((n, d, 2), dtype=np.int64)
        idx = np.arange(n).reshape(self.shape)
        for a in range(d):
            for k, shift in enumerate((-1, 1)):
                # np.roll by -1 brings x + e_a to position x
                rolled = np.roll(idx, shift, axis=a)
                if a == 0 and not self.torus:
                    rolled = rolled.copy()
                    if shift == -1:
                        rolled[-1, ...] = -1
                    else:
                        rolled[0, ...] = -1
                table[:, a, k] = rolled.reshape(-1)
        return table


def build_lattice(inv_eps: int, dim: int, torus: bool = False) -> LatticeSpec:
    return LatticeSpec(inv_eps, dim, torus)
