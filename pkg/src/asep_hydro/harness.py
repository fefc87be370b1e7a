"""Replica scheduling, ensemble averaging and simulation-versus-PDE comparisons.

Every replica draws its randomness from ``replica_streams(seed, cell, r)``
where ``cell`` is the experiment cell (``inv_eps`` for ladder runs) and ``r``
the replica index, so results do not depend on scheduling. Replicas run on a
thread pool (the event kernel releases the GIL); results are reduced in
replica order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import (Configuration, EventSource, ModelParams,
                       replica_streams, run_until, sample_initial)
from .fields import ScalarField, _jsonable, write_field
from .lattice import LatticeSpec
from .observables import BlockSpec, default_block_radius, empirical_field
from .oracles import steady_profile_shooting
from .pde import PdeProblem, solve

log = logging.getLogger(__name__)

WORKERS_ENV = "ASEP_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return min(os.cpu_count() or 1, 8)


class ReplicaFailure(RuntimeError):
    def __init__(self, seed: int, keys: tuple[int, ...], cause: BaseException):
        super().__init__(f"replica seed={seed} keys={keys} failed: {cause!r}")
        self.seed = seed
        self.keys = keys


def map_replicas(fn: Callable[[int], object], n: int, seed: int, cell: int) -> list:
    """``[fn(0), ..., fn(n-1)]`` evaluated on the worker pool, in replica order."""

    def guarded(r):
        try:
            return fn(r)
        except Exception as exc:  # re-raised with the replica's identity attached
            raise ReplicaFailure(seed, (cell, r), exc) from exc

    workers = min(worker_count(), n)
    if workers <= 1:
        return [guarded(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(n)))


# -- field comparison ---------------------------------------------------------


@dataclass(frozen=True)
class Norms:
    l1: float
    l2: float
    sup: float


def _select_nodes(f: ScalarField, axes, atol=1e-9) -> ScalarField:
    """Sub-grid of ``f`` at the given node positions; raises if some node is absent."""
    index = []
    for have, want in zip(f.axes, axes):
        pos = np.searchsorted(have, want)
        pos = np.clip(pos, 0, len(have) - 1)
        alt = np.clip(pos - 1, 0, len(have) - 1)
        pos = np.where(np.abs(have[alt] - want) < np.abs(have[pos] - want), alt, pos)
        if np.any(np.abs(have[pos] - want) > atol):
            raise ValueError("grids do not share nodes")
        index.append(pos)
    return ScalarField(tuple(np.asarray(a) for a in axes), f.values[np.ix_(*index)], dict(f.meta))


def compare_fields(sim: ScalarField, pde: ScalarField, window=None,
                   interpolate: bool = False) -> Norms:
    """L1, L2 and sup norms of ``sim - pde`` over nodes in the window.

    ``window`` is ``(lo, hi)`` bounds on u1 (inclusive) or ``None`` for the
    whole grid. L1 and L2 are averages over the window nodes, i.e. Riemann
    sums normalised by the window volume. ``pde`` must live on the same grid
    as ``sim``, be a super-grid of it, or ``interpolate`` must be set.
    """
    if sim.dim != pde.dim:
        raise ValueError("fields have different dimensions")
    if not sim.same_grid(pde):
        try:
            pde = _select_nodes(pde, sim.axes)
        except ValueError:
            if not interpolate:
                raise ValueError("fields live on different grids (pass interpolate=True)") from None
            from scipy.interpolate import RegularGridInterpolator

            interp = RegularGridInterpolator(pde.axes, pde.values, bounds_error=False, fill_value=None)
            pde = sim.with_values(interp(sim.points()).reshape(sim.shape))
    diff = sim.values - pde.values
    if window is not None:
        lo, hi = window
        if lo > hi or lo < sim.axes[0].min() - 1e-12 or hi > sim.axes[0].max() + 1e-12:
            raise ValueError(f"window {window} is not inside the domain")
        keep = (sim.axes[0] >= lo - 1e-12) & (sim.axes[0] <= hi + 1e-12)
        diff = diff[keep]
    if diff.size == 0:
        raise ValueError("window contains no grid nodes")
    a = np.abs(diff)
    return Norms(float(a.mean()), float(np.sqrt(np.mean(diff * diff))), float(a.max()))


# -- convergence study --------------------------------------------------------


@dataclass
class ConvergenceRow:
    eps: float
    inv_eps: int
    replicas: int
    time: float
    block_radius: int
    window: tuple[float, float]
    l1: float
    l2: float
    sup: float
    mc_stderr: float
    sup_m: float


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    slope: dict[float, float | None] = field(default_factory=dict)
    monotone: bool = False
    small: bool = False
    smallness: float = 0.25
    failed_replica: str | None = None

    @property
    def passed(self) -> bool:
        return self.monotone and self.small

    def rows_at(self, t: float) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.time == t]

    def to_json(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "slope": {str(t): s for t, s in self.slope.items()},
            "monotone": self.monotone,
            "small": self.small,
            "smallness": self.smallness,
            "passed": self.passed,
            "failed_replica": self.failed_replica,
        }


def interior_window(lattice: LatticeSpec, k: int) -> tuple[float, float]:
    """|u1| <= 1 - k*eps: nodes whose radius-k block lies inside the lattice."""
    edge = 1.0 - k * lattice.eps
    return (-edge, edge)


def resolve_diffusion(cfg: ExperimentConfig) -> np.ndarray:
    D = cfg.diffusion_matrix()
    if D is None:
        from .diffusion import estimate_diffusion

        est, _ = estimate_diffusion(cfg.params().delta, cfg.estimator_inv_eps, cfg.dim,
                                    cfg.estimator_replicas, cfg.estimator_amplitude, cfg.seed)
        log.info("estimated D = %s", est.D.tolist())
        D = est.D
    return D


def ensemble_fields(cfg: ExperimentConfig, params: ModelParams, lattice: LatticeSpec,
                    block: BlockSpec, mode: str = "restrict"):
    """Per-time ensemble mean and per-node standard error of the block field."""
    times = list(cfg.times)

    def one(r):
        init, waits, picks = replica_streams(cfg.seed, lattice.inv_eps, r)
        occ = sample_initial(lattice, cfg.m0, init)
        run = run_until(Configuration(lattice, params, occ), EventSource(waits, picks),
                        times[-1], times[:-1])
        snaps = run.snapshots + [run.final]
        return [empirical_field(s, lattice, block, mode=mode) for s in snaps]

    per_replica = map_replicas(one, cfg.replicas, cfg.seed, lattice.inv_eps)
    out = []
    for j, t in enumerate(times):
        stack = np.stack([fields[j].values for fields in per_replica])
        mean = stack.sum(axis=0) / cfg.replicas
        if cfg.replicas > 1:
            se = stack.std(axis=0, ddof=1) / math.sqrt(cfg.replicas)
        else:
            se = np.full_like(mean, np.nan)
        out.append((per_replica[0][j].with_values(mean, t=t, replicas=cfg.replicas), se))
    return out


def _write_rows_csv(path: Path, rows: Sequence) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = list(asdict(rows[0]).keys()) if rows else []
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(v) for v in asdict(row).values()])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return v


def write_manifest(out: Path, cfg: ExperimentConfig, kind: str, **extra) -> None:
    import numba
    import scipy

    manifest = {
        "kind": kind,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "versions": {"asep_hydro": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                  default=_jsonable) + "\n")


def run_convergence_study(cfg: ExperimentConfig, write: bool = True,
                          D: np.ndarray | None = None) -> ConvergenceReport:
    """Simulate each lattice of the ladder, solve the PDE on the matching grid, compare.

    Rows come out ordered by decreasing eps, one per (eps, snapshot time).
    Norms are taken on the ensemble-mean field over the interior window.
    """
    if cfg.dim <= 2:
        log.warning("d = %d: the hydrodynamic limit is only established for d >= 3", cfg.dim)
    if any(t <= 0 for t in cfg.times):
        raise ValueError("convergence snapshots must be at times > 0")
    params = cfg.params()
    D = resolve_diffusion(cfg) if D is None else np.asarray(D, dtype=float)
    out = Path(cfg.output)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    report = ConvergenceReport([], smallness=cfg.smallness)
    try:
        for inv_eps in sorted(set(cfg.inv_eps)):
            lattice = LatticeSpec(inv_eps, cfg.dim)
            k = default_block_radius(lattice.eps, cfg.dim, cfg.block_ell)
            block = BlockSpec(k, cfg.dim)
            window = interior_window(lattice, k)
            log.info("eps=1/%d: side %d, block radius %d, %d replicas",
                     inv_eps, lattice.side, k, cfg.replicas)
            problem = PdeProblem.on_lattice(lattice, delta=params.delta, D=D, b_left=cfg.b_left,
                                            b_right=cfg.b_right, m0=cfg.m0, horizon=cfg.times[-1])
            pde_fields = solve(problem, cfg.times)
            sims = ensemble_fields(cfg, params, lattice, block)
            for t, (sim, se), pde in zip(cfg.times, sims, pde_fields):
                norms = compare_fields(sim, pde, window)
                keep = (sim.axes[0] >= window[0] - 1e-12) & (sim.axes[0] <= window[1] + 1e-12)
                mc = float(np.sqrt(np.mean(se[keep] ** 2)))
                report.rows.append(ConvergenceRow(
                    lattice.eps, inv_eps, cfg.replicas, t, k, window,
                    norms.l1, norms.l2, norms.sup, mc, float(np.abs(pde.values).max()),
                ))
                if write:
                    tag = f"eps{inv_eps}_t{t:g}"
                    write_field(out / f"sim_{tag}.csv", sim, block_radius=k)
                    write_field(out / f"pde_{tag}.csv", _select_nodes(pde, sim.axes))
    except ReplicaFailure as exc:
        report.failed_replica = str(exc)
        _finish(report, cfg, out, write)
        raise
    _finish(report, cfg, out, write)
    return report


def _finish(report: ConvergenceReport, cfg: ExperimentConfig, out: Path, write: bool) -> None:
    report.rows.sort(key=lambda r: (-r.eps, r.time))
    monotone, small = True, True
    for t in cfg.times:
        rows = report.rows_at(t)
        l1 = [r.l1 for r in rows]
        monotone &= all(b < a for a, b in zip(l1, l1[1:]))
        if rows:
            small &= rows[-1].l1 < cfg.smallness * rows[-1].sup_m
        if len(rows) >= 2:
            slope = np.polyfit(np.log([r.eps for r in rows]), np.log(l1), 1)[0]
            report.slope[t] = float(slope)
        else:
            report.slope[t] = None
    report.monotone = bool(monotone)
    report.small = bool(small) and bool(report.rows)
    if write:
        _write_rows_csv(out / "convergence.csv", report.rows)
        (out / "convergence.json").write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        write_manifest(out, cfg, "converge", workers_env=WORKERS_ENV)


# -- stationarity of the flat profile ---------------------------------------------


@dataclass
class StationarityReport:
    inv_eps: int
    replicas: int
    window: tuple[float, float]
    samples: int
    mean: float = float("nan")
    stderr: float = float("nan")
    z_global: float = float("nan")
    slice_mean: list[float] = field(default_factory=list)
    slice_stderr: list[float] = field(default_factory=list)
    slice_z: list[float] = field(default_factory=list)
    insufficient_data: bool = False
    passed: bool = False

    @property
    def max_slice_z(self) -> float:
        return float(np.max(np.abs(self.slice_z))) if self.slice_z else float("nan")

    def to_json(self) -> dict:
        return {**asdict(self), "max_slice_z": self.max_slice_z}


def run_stationarity_check(cfg: ExperimentConfig, inv_eps: int | None = None,
                           write: bool = True) -> StationarityReport:
    """Time-averaged centred density from the product measure at 1/2 with b = 0.

    Each replica contributes one time average (global and per axis-1 slice);
    z-scores use the spread across independent replicas.
    """
    if not (cfg.b_left.is_zero(cfg.dim) and cfg.b_right.is_zero(cfg.dim)):
        raise ValueError("stationarity check needs b = 0 on both faces")
    if not cfg.m0.is_zero(cfg.dim):
        raise ValueError("stationarity check needs m0 = 0")
    inv_eps = cfg.inv_eps[0] if inv_eps is None else inv_eps
    lattice = LatticeSpec(inv_eps, cfg.dim)
    params = cfg.params()
    t0, t1 = cfg.window
    report = StationarityReport(inv_eps, cfg.replicas, (t0, t1), cfg.samples)
    if t1 <= t0 or cfg.samples < 1:
        report.insufficient_data = True
        log.warning("stationarity window [%g, %g] is empty", t0, t1)
        return report
    times = np.linspace(t0, t1, cfg.samples)
    transverse = tuple(range(1, cfg.dim))

    def one(r):
        init, waits, picks = replica_streams(cfg.seed, inv_eps, r)
        occ = sample_initial(lattice, 0.0, init)
        run = run_until(Configuration(lattice, params, occ), EventSource(waits, picks),
                        times[-1], times[:-1])
        snaps = np.stack(run.snapshots + [run.final]).reshape((len(times),) + lattice.shape)
        slices = snaps.mean(axis=tuple(a + 1 for a in transverse)) if transverse else snaps
        return float(snaps.mean() - 0.5), slices.mean(axis=0) - 0.5

    results = map_replicas(one, cfg.replicas, cfg.seed, inv_eps)
    g = np.array([x[0] for x in results])
    s = np.stack([x[1] for x in results])
    m = cfg.replicas
    report.mean = float(g.sum() / m)
    if m < 2:
        report.insufficient_data = True
        return report
    report.stderr = float(g.std(ddof=1) / math.sqrt(m))
    report.z_global = report.mean / report.stderr
    sm = s.sum(axis=0) / m
    sse = s.std(axis=0, ddof=1) / math.sqrt(m)
    report.slice_mean = sm.tolist()
    report.slice_stderr = sse.tolist()
    report.slice_z = (sm / sse).tolist()
    report.passed = abs(report.z_global) < cfg.z_global and report.max_slice_z < cfg.z_slice
    if write:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stationarity.json").write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        write_manifest(out, cfg, "stationary")
    return report


# -- long-time profile against the one-dimensional steady state ---------------------


@dataclass
class SteadyReport:
    inv_eps: int
    positions: list[float]
    simulated: list[float]
    stderr: list[float]
    oracle: list[float]
    window: tuple[float, float]
    sup_error: float
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return asdict(self)


def run_steady_check(cfg: ExperimentConfig, inv_eps: int | None = None,
                     write: bool = True) -> SteadyReport:
    """Compare the time-, replica- and transverse-averaged profile with the shooting solution.

    Replicas start from ``m0``, run ``burn_in`` macroscopic time, then sample
    ``samples`` snapshots over ``window`` (relative to the end of burn-in).
    Only constant face data is supported, as the comparison is one-dimensional.
    """
    inv_eps = cfg.inv_eps[0] if inv_eps is None else inv_eps
    lattice = LatticeSpec(inv_eps, cfg.dim)
    params = cfg.params()
    probe = np.zeros((1, cfg.dim))
    b_l = float(cfg.b_left(probe)[0])
    b_r = float(cfg.b_right(probe)[0])
    for prof, b in ((cfg.b_left, b_l), (cfg.b_right, b_r)):
        if not (prof(np.random.default_rng(0).uniform(-1, 1, (16, cfg.dim))) == b).all():
            raise ValueError("steady-state check needs constant face data")
    t0, t1 = cfg.window
    if t1 <= t0 or cfg.samples < 2:
        raise ValueError("steady-state check needs a non-empty averaging window")
    times = cfg.burn_in + np.linspace(t0, t1, cfg.samples)
    transverse = tuple(range(1, cfg.dim))

    def one(r):
        init, waits, picks = replica_streams(cfg.seed, inv_eps, r)
        occ = sample_initial(lattice, cfg.m0, init)
        run = run_until(Configuration(lattice, params, occ), EventSource(waits, picks),
                        times[-1], times[:-1])
        snaps = np.stack(run.snapshots + [run.final]).reshape((len(times),) + lattice.shape)
        prof = snaps.mean(axis=tuple(a + 1 for a in transverse)) if transverse else snaps
        return (prof.mean(axis=0) - 0.5) * inv_eps

    per = np.stack(map_replicas(one, cfg.replicas, cfg.seed, inv_eps))
    mean = per.sum(axis=0) / cfg.replicas
    se = per.std(axis=0, ddof=1) / math.sqrt(cfg.replicas) if cfg.replicas > 1 else np.zeros_like(mean)
    u = lattice.axis_positions(0)
    D = resolve_diffusion(cfg)
    _, oracle = steady_profile_shooting(params.delta[0], float(D[0, 0]), b_l, b_r, u=u)
    k = default_block_radius(lattice.eps, cfg.dim, cfg.block_ell)
    lo, hi = interior_window(lattice, k)
    keep = (u >= lo - 1e-12) & (u <= hi + 1e-12)
    err = float(np.abs(mean - oracle)[keep].max())
    report = SteadyReport(inv_eps, u.tolist(), mean.tolist(), se.tolist(), oracle.tolist(),
                          (lo, hi), err, cfg.steady_tol, err < cfg.steady_tol)
    if write:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "steady.json").write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        write_manifest(out, cfg, "steady")
    return report


__all__ = [
    "ConvergenceReport", "ConvergenceRow", "Norms", "ReplicaFailure", "StationarityReport",
    "SteadyReport", "WORKERS_ENV", "compare_fields", "ensemble_fields", "interior_window", "map_replicas",
    "run_convergence_study", "run_stationarity_check", "run_steady_check", "worker_count",
]
