"""Brute-force reference computations, deliberately independent of the engine.

Nothing here imports the simulator, the observables or the PDE solver, so
they can be used to validate those modules.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def chain_rate_matrix(p_plus: float, p_minus: float, n_sites: int, eps: float,
                      b_left: float = 0.0, b_right: float = 0.0,
                      reversible: bool = False, speedup_exponent: float = 2.0) -> np.ndarray:
    """Full rate matrix of the open exclusion process on a 1D chain of ``n_sites``.

    State index is ``sum(eta[x] << x)`` with x = 0 the creation face. Built
    directly from the bulk exchange rates and the reservoir rates.
    """
    n_states = 1 << n_sites
    Q = np.zeros((n_states, n_states))
    rho_l = 0.5 + eps * b_left
    rho_r = 0.5 + eps * b_right
    d1 = p_plus - p_minus
    speed = eps ** (2 - speedup_exponent)
    for s in range(n_states):
        eta = [(s >> x) & 1 for x in range(n_sites)]
        for x in range(n_sites - 1):
            y = x + 1
            r = p_plus * eta[x] * (1 - eta[y]) + p_minus * eta[y] * (1 - eta[x])
            if r:
                t = s ^ (1 << x) ^ (1 << y)
                Q[s, t] += r
        faces = [(0, rho_l, True), (n_sites - 1, rho_r, False)]
        for x, rho, left in faces:
            if reversible:
                r = speed * (rho * (1 - eta[x]) + (1 - rho) * eta[x])
            elif left:
                r = d1 * rho * (1 - eta[x])
            else:
                r = d1 * (1 - rho) * eta[x]
            if r:
                Q[s, s ^ (1 << x)] += r
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def jump_chain(Q: np.ndarray) -> np.ndarray:
    """Embedded discrete-time chain: P[s, t] = Q[s, t] / q(s)."""
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    out = off.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(out[:, None] > 0, off / out[:, None], 0.0)
    return P


def block_current_enumeration(k: int, dim: int, delta: float = 1.0) -> dict[int, float]:
    """Canonical mean of delta*[eta(x)eta(y) - (eta(x)+eta(y))/2] over all nearest-neighbour pairs.

    Enumerates every configuration of the (2k+1)^dim block; returns a map from
    particle number n to the average over all configurations with n particles
    and all in-block bonds (x, x + e_i) of every axis.
    """
    side = 2 * k + 1
    n_cells = side**dim
    if n_cells > 20:
        raise ValueError(f"{n_cells} cells is too many to enumerate")
    cells = list(itertools.product(range(side), repeat=dim))
    index = {c: i for i, c in enumerate(cells)}
    pairs = []
    for c in cells:
        for axis in range(dim):
            nb = list(c)
            nb[axis] += 1
            if nb[axis] < side:
                pairs.append((index[c], index[tuple(nb)]))
    pairs = np.array(pairs)
    states = np.arange(1 << n_cells, dtype=np.int64)
    eta = ((states[:, None] >> np.arange(n_cells)) & 1).astype(float)
    n = eta.sum(axis=1).astype(int)
    a, b = eta[:, pairs[:, 0]], eta[:, pairs[:, 1]]
    w = delta * (a * b - (a + b) / 2).mean(axis=1)
    return {int(j): float(w[n == j].mean()) for j in range(n_cells + 1)}


def steady_profile_shooting(delta1: float, d11: float, b_left: float, b_right: float,
                            u=None, slope_range: tuple[float, float] = (-4.0, 4.0)):
    """Solve delta1 (m^2)' + d11 m'' = 0 on [-1, 1], m(-1)=b_left, m(1)=b_right, by shooting.

    Returns the positions and the profile (dense, rtol 1e-12).
    """
    if u is None:
        u = np.linspace(-1.0, 1.0, 401)
    u = np.asarray(u, dtype=float)

    def rhs(_, y):
        return [y[1], -2.0 * delta1 * y[0] * y[1] / d11]

    def end_value(slope):
        sol = solve_ivp(rhs, (-1.0, 1.0), [b_left, slope], rtol=1e-12, atol=1e-14)
        if sol.status != 0:
            return np.nan
        return sol.y[0, -1] - b_right

    grid = np.linspace(*slope_range, 81)
    vals = np.array([end_value(s) for s in grid])
    bracket = None
    for i in range(len(grid) - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] <= 0:
            bracket = grid[i], grid[i + 1]
            break
    if bracket is None:
        raise RuntimeError("no slope bracket found for the shooting problem")
    slope = brentq(end_value, *bracket, xtol=1e-15, rtol=1e-15)
    sol = solve_ivp(rhs, (-1.0, 1.0), [b_left, slope], t_eval=u, rtol=1e-12, atol=1e-14)
    return u, sol.y[0]
