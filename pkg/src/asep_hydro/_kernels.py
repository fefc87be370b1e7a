"""Compiled inner loops for the exclusion dynamics.

Event numbering, with N sites, d axes and F sites per face:

* ``s * d + a`` for the bond between site ``s`` and ``s + e_a`` (rate 0 when
  the bond leaves the lattice through an axis-1 wall),
* ``N * d + j`` for the flip at boundary slot ``j``; slots ``0..F-1`` are the
  x1 = -inv_eps face, slots ``F..2F-1`` the x1 = +inv_eps face.

Rates live in the leaves of a complete binary sum tree (``tree[P + e]``) and
every internal node is recomputed as ``left + right``, so an incremental update
and a full rebuild give bit-identical totals.
"""
import numpy as np
from numba import njit

STOP_TIME = 0
STOP_BUFFER = 1
STOP_ABSORBED = 2
STOP_COUNT = 3


def tree_capacity(n_events):
    p = 1
    while p < n_events:
        p *= 2
    return p


@njit(cache=True, inline="always")
def _bond_rate(occ, s, t, pp, pm, a):
    if t < 0:
        return 0.0
    if occ[s] == 1 and occ[t] == 0:
        return pp[a]
    if occ[s] == 0 and occ[t] == 1:
        return pm[a]
    return 0.0


@njit(cache=True)
def _flip_site(j, n_sites, face):
    if j < face:
        return j
    return n_sites - 2 * face + j


@njit(cache=True)
def event_rate(e, occ, nbr, pp, pm, create, annihilate, face):
    n_sites, d = nbr.shape[0], nbr.shape[1]
    if e < n_sites * d:
        s = e // d
        a = e - s * d
        return _bond_rate(occ, s, nbr[s, a, 0], pp, pm, a)
    j = e - n_sites * d
    s = _flip_site(j, n_sites, face)
    if occ[s] == 0:
        return create[j]
    return annihilate[j]


@njit(cache=True)
def all_rates(occ, nbr, pp, pm, create, annihilate, face):
    n_sites, d = nbr.shape[0], nbr.shape[1]
    n_events = n_sites * d + 2 * face
    out = np.empty(n_events)
    for e in range(n_events):
        out[e] = event_rate(e, occ, nbr, pp, pm, create, annihilate, face)
    return out


@njit(cache=True)
def build_tree(tree, rates):
    cap = tree.shape[0] // 2
    tree[:] = 0.0
    for e in range(rates.shape[0]):
        tree[cap + e] = rates[e]
    for i in range(cap - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True, inline="always")
def _set_leaf(tree, cap, e, r):
    i = cap + e
    if tree[i] == r:
        return
    tree[i] = r
    i //= 2
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i //= 2


@njit(cache=True)
def _refresh_site(s, occ, nbr, pp, pm, create, annihilate, face, tree, cap):
    n_sites, d = nbr.shape[0], nbr.shape[1]
    for a in range(d):
        _set_leaf(tree, cap, s * d + a, _bond_rate(occ, s, nbr[s, a, 0], pp, pm, a))
        r = nbr[s, a, 1]
        if r >= 0:
            _set_leaf(tree, cap, r * d + a, _bond_rate(occ, r, s, pp, pm, a))
    j = -1
    if s < face:
        j = s
    elif s >= n_sites - face:
        j = s - n_sites + 2 * face
    if j >= 0:
        rate = create[j] if occ[s] == 0 else annihilate[j]
        _set_leaf(tree, cap, n_sites * d + j, rate)


@njit(cache=True)
def _select(tree, cap, u):
    i = 1
    while i < cap:
        left = tree[2 * i]
        right = tree[2 * i + 1]
        if (u < left and left > 0.0) or right <= 0.0:
            i = 2 * i
        else:
            u -= left
            i = 2 * i + 1
    return i - cap


@njit(cache=True, nogil=True)
def advance(
    occ, tree, nbr, pp, pm, create, annihilate, face,
    t, t_stop, exps, unif, pos, max_events,
    log_event, log_time, log_delta,
):
    """Run events until ``t_stop``, buffer exhaustion or ``max_events``.

    Returns ``(t, pos, n_events, d_particles, status)``. A waiting time that
    would overshoot ``t_stop`` is consumed and discarded; by memorylessness the
    clock is then simply set to ``t_stop``.
    """
    n_sites, d = nbr.shape[0], nbr.shape[1]
    cap = tree.shape[0] // 2
    n_log = log_event.shape[0]
    n_events = 0
    d_particles = 0
    while True:
        if n_events >= max_events:
            return t, pos, n_events, d_particles, STOP_COUNT
        total = tree[1]
        if total <= 0.0:
            return t, pos, n_events, d_particles, STOP_ABSORBED
        if pos >= exps.shape[0]:
            return t, pos, n_events, d_particles, STOP_BUFFER
        dt = exps[pos] / total
        if t + dt > t_stop:
            pos += 1
            return t_stop, pos, n_events, d_particles, STOP_TIME
        t += dt
        e = _select(tree, cap, unif[pos] * total)
        pos += 1
        delta = 0
        if e < n_sites * d:
            s = e // d
            a = e - s * d
            r = nbr[s, a, 0]
            tmp = occ[s]
            occ[s] = occ[r]
            occ[r] = tmp
            _refresh_site(s, occ, nbr, pp, pm, create, annihilate, face, tree, cap)
            _refresh_site(r, occ, nbr, pp, pm, create, annihilate, face, tree, cap)
        else:
            s = _flip_site(e - n_sites * d, n_sites, face)
            occ[s] = 1 - occ[s]
            delta = 1 if occ[s] == 1 else -1
            _refresh_site(s, occ, nbr, pp, pm, create, annihilate, face, tree, cap)
        if n_events < n_log:
            log_event[n_events] = e
            log_time[n_events] = t
            log_delta[n_events] = delta
        d_particles += delta
        n_events += 1
