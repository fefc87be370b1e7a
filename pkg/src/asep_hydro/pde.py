"""Explicit finite-volume/finite-difference solver for viscous Burgers on the cylinder.

    dm/dt = sum_i delta_i d_i(m^2) + sum_ij D_ij d_i d_j m (+ optional source)

on [-1, 1] x torus^(d-1), Dirichlet data on the two axis-1 faces. Axis-1 nodes
sit at u = -1 + i*h with h = 2/(n-1); periodic nodes at (j - (n-1)/2) * 2/n.

Advection uses conservative interface fluxes with a central linear
reconstruction and local Lax-Friedrichs dissipation; diffusion uses the
standard 3-point and 4-corner stencils. Time stepping is SSP-RK2 (Heun).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import ScalarField
from .lattice import LatticeSpec

log = logging.getLogger(__name__)

CFL_SAFETY = 0.8


class NumericalFailure(RuntimeError):
    pass


def periodic_nodes(n: int) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2) * (2.0 / n)


def _values_on(grid_axes, data, shape):
    if data is None:
        return None
    if isinstance(data, ScalarField):
        return np.broadcast_to(data.values, shape).astype(float)
    if callable(data):
        return ScalarField.from_function(grid_axes, data).values
    return np.broadcast_to(np.asarray(data, dtype=float), shape).astype(float).copy()


@dataclass
class PdeProblem:
    """Grid, coefficients and data for one initial-boundary value problem.

    ``b_left``/``b_right`` and ``m0`` accept constants, callables of an
    ``(n, d)`` point array, or arrays on the grid. ``source(t, points)`` adds a
    forcing term (used for manufactured solutions). ``periodic_axis1`` wraps
    axis 1 as well and drops the Dirichlet faces (test mode only).
    """

    n: tuple[int, ...]
    delta: Sequence[float]
    D: np.ndarray | None = None
    b_left: object = 0.0
    b_right: object = 0.0
    m0: object = 0.0
    horizon: float = 1.0
    source: Callable[[float, np.ndarray], np.ndarray] | None = None
    periodic_axis1: bool = False
    boundary_tol: float = 1e-8
    axes: tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        self.n = tuple(int(k) for k in self.n)
        d = len(self.n)
        self.delta = np.asarray(self.delta, dtype=float).reshape(d)
        self.D = np.eye(d) if self.D is None else np.asarray(self.D, dtype=float).reshape(d, d)
        if np.abs(self.D - self.D.T).max() > 1e-12:
            raise ValueError("D must be symmetric")
        if np.linalg.eigvalsh(self.D).min() <= 0:
            raise ValueError("D must be positive definite")
        if min(self.n) < 3:
            raise ValueError("need at least 3 nodes per axis")
        first = periodic_nodes(self.n[0]) if self.periodic_axis1 else np.linspace(-1.0, 1.0, self.n[0])
        self.axes = (first,) + tuple(periodic_nodes(k) for k in self.n[1:])
        self._m0 = _values_on(self.axes, self.m0, self.n)
        if not self.periodic_axis1:
            face_axes = (np.array([-1.0]),) + self.axes[1:]
            self._bl = _values_on(face_axes, self.b_left, (1,) + self.n[1:])[0]
            face_axes = (np.array([1.0]),) + self.axes[1:]
            self._br = _values_on(face_axes, self.b_right, (1,) + self.n[1:])[0]
            gap = max(np.abs(self._m0[0] - self._bl).max(), np.abs(self._m0[-1] - self._br).max())
            if gap > self.boundary_tol:
                raise ValueError(f"m0 differs from b on the faces by {gap:.3g}")

    @classmethod
    def on_lattice(cls, lattice: LatticeSpec, **kwargs) -> "PdeProblem":
        """Grid whose nodes coincide with the lattice sites' macroscopic positions."""
        return cls(n=(lattice.side,) * lattice.dim, **kwargs)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        first = 2.0 / self.n[0] if self.periodic_axis1 else 2.0 / (self.n[0] - 1)
        return (first,) + tuple(2.0 / k for k in self.n[1:])

    def grid(self) -> ScalarField:
        return ScalarField(self.axes, np.zeros(self.n))

    def initial(self) -> np.ndarray:
        m = self._m0.copy()
        self.apply_boundary(m)
        return m

    def apply_boundary(self, m: np.ndarray) -> None:
        if not self.periodic_axis1:
            m[0] = self._bl
            m[-1] = self._br

    def max_dt(self, m: np.ndarray) -> float:
        h = min(self.h)
        limit = h * h / (2.0 * np.trace(self.D))
        speed = 4.0 * np.linalg.norm(self.delta) * np.abs(m).max()
        if speed > 0:
            limit = min(limit, h / speed)
        return CFL_SAFETY * limit

    # -- spatial operator -------------------------------------------------

    def _shift(self, m: np.ndarray, axis: int, s: int) -> np.ndarray:
        """m evaluated at index + s along ``axis`` (one ghost layer on Dirichlet axis 1)."""
        if axis > 0 or self.periodic_axis1:
            return np.roll(m, -s, axis=axis)
        out = np.empty_like(m)
        if s == 1:
            out[:-1] = m[1:]
            out[-1] = 2 * m[-1] - m[-2]
        elif s == -1:
            out[1:] = m[:-1]
            out[0] = 2 * m[0] - m[1]
        elif s == 2:
            out[:-2] = m[2:]
            out[-2] = 2 * m[-1] - m[-2]
            out[-1] = 3 * m[-1] - 2 * m[-2]
        else:
            raise ValueError(s)
        return out

    def advection(self, m: np.ndarray) -> np.ndarray:
        """Discrete sum_i delta_i d_i(m^2) in conservative form."""
        out = np.zeros_like(m)
        for i, d in enumerate(self.delta):
            if d == 0.0:
                continue
            h = self.h[i]
            mp, mm, mpp = self._shift(m, i, 1), self._shift(m, i, -1), self._shift(m, i, 2)
            left = m + 0.25 * (mp - mm)
            right = mp - 0.25 * (mpp - m)
            # flux of the conservation law m_t + d_i F = 0 with F = -delta m^2
            alpha = 2.0 * abs(d) * np.maximum(np.abs(left), np.abs(right))
            flux = -0.5 * d * (left * left + right * right) - 0.5 * alpha * (right - left)
            out -= (flux - self._shift(flux, i, -1)) / h
        return out

    def diffusion(self, m: np.ndarray) -> np.ndarray:
        out = np.zeros_like(m)
        h = self.h
        shifted = {}
        for i in range(self.dim):
            shifted[i, 1] = self._shift(m, i, 1)
            shifted[i, -1] = self._shift(m, i, -1)
            if self.D[i, i] != 0.0:
                out += self.D[i, i] * (shifted[i, 1] - 2 * m + shifted[i, -1]) / (h[i] * h[i])
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if self.D[i, j] == 0.0:
                    continue
                # four-corner stencil for d_i d_j m
                di = shifted[i, 1] - shifted[i, -1]
                dij = self._shift(di, j, 1) - self._shift(di, j, -1)
                out += 2 * self.D[i, j] * dij / (4 * h[i] * h[j])
        return out

    def rhs(self, m: np.ndarray, t: float) -> np.ndarray:
        out = self.advection(m) + self.diffusion(m)
        if self.source is not None:
            pts = ScalarField(self.axes, m).points()
            out += np.asarray(self.source(t, pts), dtype=float).reshape(m.shape)
        if not self.periodic_axis1:
            out[0] = 0.0
            out[-1] = 0.0
        return out


@dataclass
class SolverState:
    m: np.ndarray
    t: float = 0.0
    steps: int = 0
    dt: float = 0.0


def advance(state: SolverState, problem: PdeProblem, dt: float | None = None) -> SolverState:
    """One SSP-RK2 step; ``dt`` defaults to the CFL limit."""
    limit = problem.max_dt(state.m)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise NumericalFailure(f"dt={dt:.3g} violates the CFL limit {limit:.3g}")
    m = state.m
    m1 = m + dt * problem.rhs(m, state.t)
    problem.apply_boundary(m1)
    m2 = 0.5 * m + 0.5 * (m1 + dt * problem.rhs(m1, state.t + dt))
    problem.apply_boundary(m2)
    if not np.all(np.isfinite(m2)):
        raise NumericalFailure(
            f"non-finite values at t={state.t:.4g} (dt={dt:.3g}, CFL limit {limit:.3g})"
        )
    return SolverState(m2, state.t + dt, state.steps + 1, dt)


def solve(problem: PdeProblem, snapshot_times: Sequence[float] = ()) -> list[ScalarField]:
    """Fields at the requested times (or only at the horizon when none are given)."""
    times = [float(t) for t in snapshot_times] or [float(problem.horizon)]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be sorted")
    if times[0] < 0 or times[-1] > problem.horizon + 1e-12:
        raise ValueError("snapshot times must lie in [0, horizon]")
    state = SolverState(problem.initial())
    out = []
    for target in times:
        while target - state.t > 1e-14 * max(1.0, target):
            dt = min(problem.max_dt(state.m), target - state.t)
            state = advance(state, problem, dt)
        state.t = target
        out.append(ScalarField(problem.axes, state.m.copy(), {"t": target, "steps": state.steps}))
    log.debug("solved to t=%g in %d steps", state.t, state.steps)
    return out


def residual(m_a: np.ndarray, m_b: np.ndarray, dt: float, problem: PdeProblem, t: float = 0.0) -> float:
    """Sup-norm over interior nodes of the trapezoidal discrete residual between two time levels."""
    m_a = m_a.values if isinstance(m_a, ScalarField) else np.asarray(m_a, dtype=float)
    m_b = m_b.values if isinstance(m_b, ScalarField) else np.asarray(m_b, dtype=float)
    if m_a.shape != tuple(problem.n) or m_b.shape != tuple(problem.n):
        raise ValueError("fields are not on the problem grid")
    r = (m_b - m_a) / dt - 0.5 * (problem.rhs(m_a, t) + problem.rhs(m_b, t + dt))
    if not problem.periodic_axis1:
        r = r[1:-1]
    return float(np.abs(r).max())


def steady_state(problem: PdeProblem, tol: float = 1e-10, max_time: float = 200.0) -> SolverState:
    """March in time until the per-step residual drops below ``tol``."""
    state = SolverState(problem.initial())
    while state.t < max_time:
        new = advance(state, problem)
        change = np.abs(new.m - state.m).max() / new.dt
        state = new
        if change < tol:
            break
    return state


__all__ = [
    "CFL_SAFETY", "NumericalFailure", "PdeProblem", "SolverState", "advance",
    "periodic_nodes", "residual", "solve", "steady_state",
]
