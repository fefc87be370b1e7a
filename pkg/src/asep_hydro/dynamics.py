"""Open-boundary asymmetric simple exclusion on the cylinder lattice.

The process runs on the microscopic clock. Bulk bonds exchange occupations
with rate ``p_plus[i]`` (particle moving along +e_i) or ``p_minus[i]``; boundary
sites are flipped by one of two reservoir generators:

``DRIFT_ALIGNED``
    creation on the x1 = -1/eps face at rate ``delta_1 * (1/2 + eps*b)`` when
    empty, annihilation on the x1 = +1/eps face at rate
    ``delta_1 * (1/2 - eps*b)`` when occupied.
``REVERSIBLE``
    on both faces, creation at rate ``rho`` and annihilation at rate
    ``1 - rho`` with ``rho = 1/2 + eps*b``, all multiplied by
    ``eps ** -(speedup_exponent - 2)``.

Randomness comes from numpy's PCG64. Replica ``r`` of a run seeded with
``master_seed`` uses ``SeedSequence([master_seed, r])``, split into three
independent streams: initial occupancy, waiting times, event selection.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .lattice import LatticeSpec

RNG_BUFFER = 1 << 12


class BoundaryVariant(enum.Enum):
    DRIFT_ALIGNED = "drift_aligned"
    REVERSIBLE = "reversible"


class AbsorbingState(RuntimeError):
    """Raised by ``run_until`` when the total event rate drops to zero."""


Profile = Callable[[np.ndarray], np.ndarray]


def _as_profile(b) -> Profile:
    if callable(b):
        return b
    value = float(b)
    return lambda u: np.full(u.shape[0], value)


@dataclass(frozen=True)
class ModelParams:
    """Jump weights per axis and the reservoir specification.

    ``b_left`` is evaluated on the x1 = -1/eps face, ``b_right`` on the
    x1 = +1/eps face. Either may be a constant or a callable taking an
    ``(n, d)`` array of macroscopic positions.
    """

    p_plus: tuple[float, ...]
    p_minus: tuple[float, ...]
    b_left: float | Profile = 0.0
    b_right: float | Profile = 0.0
    variant: BoundaryVariant = BoundaryVariant.DRIFT_ALIGNED
    speedup_exponent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p_plus", tuple(float(p) for p in self.p_plus))
        object.__setattr__(self, "p_minus", tuple(float(p) for p in self.p_minus))
        if len(self.p_plus) != len(self.p_minus) or not self.p_plus:
            raise ValueError("p_plus and p_minus need one entry per axis")
        for i, (a, b) in enumerate(zip(self.p_plus, self.p_minus), start=1):
            if a < 0 or b < 0:
                raise ValueError(f"negative jump weight on axis {i}")
            if abs(a + b - 2.0) > 1e-12:
                raise ValueError(f"p_plus[{i}] + p_minus[{i}] = {a + b}, must equal 2")
        variant = BoundaryVariant(self.variant)
        object.__setattr__(self, "variant", variant)
        if variant is BoundaryVariant.DRIFT_ALIGNED:
            if self.delta[0] <= 0:
                raise ValueError("drift-aligned reservoirs need delta_1 > 0")
            if self.speedup_exponent not in (None, 0, 0.0):
                raise ValueError("speedup_exponent only applies to the reversible variant")
            object.__setattr__(self, "speedup_exponent", 0.0)
        else:
            exponent = 2.0 if self.speedup_exponent is None else float(self.speedup_exponent)
            if exponent < 0:
                raise ValueError("speedup_exponent must be >= 0")
            object.__setattr__(self, "speedup_exponent", exponent)

    @classmethod
    def from_delta(cls, delta: Sequence[float], **kwargs) -> "ModelParams":
        delta = [float(x) for x in delta]
        return cls(
            p_plus=tuple(1.0 + x / 2 for x in delta),
            p_minus=tuple(1.0 - x / 2 for x in delta),
            **kwargs,
        )

    @property
    def dim(self) -> int:
        return len(self.p_plus)

    @property
    def delta(self) -> tuple[float, ...]:
        return tuple(a - b for a, b in zip(self.p_plus, self.p_minus))

    def boundary_factor(self, eps):
        """Multiplier on reversible reservoir rates, ``eps ** -(exponent - 2)``."""
        if self.variant is BoundaryVariant.DRIFT_ALIGNED:
            return 1
        power = 2 - self.speedup_exponent
        if float(power).is_integer():
            power = int(power)
        return eps**power


def boundary_rates(lattice: LatticeSpec, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Creation and annihilation rates per boundary slot (left face, then right face)."""
    if params.dim != lattice.dim:
        raise ValueError(f"params have {params.dim} axes, lattice has {lattice.dim}")
    eps = lattice.eps
    u = lattice.macro_coordinates()
    f = lattice.face_size
    if lattice.torus:
        return np.zeros(2 * f), np.zeros(2 * f)
    b_left = np.asarray(_as_profile(params.b_left)(u[:f]), dtype=float).reshape(f)
    b_right = np.asarray(_as_profile(params.b_right)(u[-f:]), dtype=float).reshape(f)
    b = np.concatenate([b_left, b_right])
    if np.any(np.abs(b) >= 0.5 / eps):
        raise ValueError(f"sup|b| = {np.abs(b).max():.4g} must stay below 1/(2 eps) = {0.5 / eps:.4g}")
    rho = 0.5 + eps * b
    create = np.zeros(2 * f)
    annihilate = np.zeros(2 * f)
    if params.variant is BoundaryVariant.DRIFT_ALIGNED:
        d1 = params.delta[0]
        create[:f] = d1 * rho[:f]
        annihilate[f:] = d1 * (1.0 - rho[f:])
    else:
        factor = float(params.boundary_factor(eps))
        create[:] = factor * rho
        annihilate[:] = factor * (1.0 - rho)
    return create, annihilate


def detailed_balance_ratio(params: ModelParams, rho, eps=None):
    """Creation over annihilation rate of the reversible reservoir at density ``rho``.

    Works with ``Fraction`` inputs, in which case the result is exact.
    """
    if params.variant is not BoundaryVariant.REVERSIBLE:
        raise ValueError("detailed balance only applies to the reversible reservoir")
    if not 0 < rho < 1:
        raise ValueError("rho must lie strictly between 0 and 1")
    factor = 1 if eps is None else params.boundary_factor(eps)
    return (factor * rho) / (factor * (1 - rho))


def replica_streams(master_seed: int, *keys: int) -> tuple[np.random.Generator, ...]:
    """(initial, waiting-time, selection) generators for one replica.

    ``keys`` identify the replica (and optionally the experiment cell it
    belongs to); the entropy is ``[master_seed, *keys]``.
    """
    seq = np.random.SeedSequence([int(master_seed), *(int(k) for k in keys)])
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(3))


def sample_initial(lattice: LatticeSpec, m0, rng) -> np.ndarray:
    """Product Bernoulli occupancy with P(occupied) = 1/2 + eps * m0(u).

    ``m0`` is a callable on macroscopic positions, a constant, or an array of
    per-site values. ``rng`` is a Generator or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    u = lattice.macro_coordinates()
    if callable(m0):
        values = np.asarray(m0(u), dtype=float).reshape(-1)
    else:
        values = np.broadcast_to(np.asarray(m0, dtype=float).reshape(-1), (lattice.site_count,))
    p = 0.5 + lattice.eps * values
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("initial profile puts occupation probabilities outside (0, 1)")
    return (rng.random(lattice.site_count) < p).astype(np.uint8)


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str  # "exchange" or "flip"
    site: int
    axis: int | None = None  # 1-based, exchanges only
    sign: int | None = None  # direction the particle moved
    delta: int = 0  # change of particle count


@dataclass
class EventCounter:
    exchanges: int = 0
    flips: int = 0
    created: int = 0
    annihilated: int = 0

    @property
    def total(self) -> int:
        return self.exchanges + self.flips


class Configuration:
    """Occupancy plus the event-rate sum tree and the microscopic clock."""

    def __init__(self, lattice: LatticeSpec, params: ModelParams, occupancy, time: float = 0.0):
        self.lattice = lattice
        self.params = params
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8).reshape(-1)
        if occ.shape[0] != lattice.site_count:
            raise ValueError("occupancy length does not match the lattice")
        if np.any(occ > 1):
            raise ValueError("occupancy must be 0/1")
        self.occupancy = occ.copy()
        self.time = float(time)
        self.particle_count = int(self.occupancy.sum())
        self.events = EventCounter()
        self._nbr = lattice.neighbor_table
        self._pp = np.array(params.p_plus)
        self._pm = np.array(params.p_minus)
        self._create, self._annihilate = boundary_rates(lattice, params)
        self.n_events = lattice.site_count * lattice.dim + 2 * lattice.face_size
        self._tree = np.zeros(2 * K.tree_capacity(self.n_events))
        self.rebuild()

    def _kernel_args(self):
        return (self.occupancy, self._nbr, self._pp, self._pm, self._create,
                self._annihilate, self.lattice.face_size)

    def rates(self) -> np.ndarray:
        """Every event rate, recomputed from scratch."""
        return K.all_rates(*self._kernel_args())

    def rebuild(self) -> None:
        K.build_tree(self._tree, self.rates())

    @property
    def total_rate(self) -> float:
        return float(self._tree[1])

    def cache_matches(self) -> bool:
        """True when the incremental tree equals a full rebuild bit for bit."""
        fresh = np.zeros_like(self._tree)
        K.build_tree(fresh, self.rates())
        return bool(np.array_equal(fresh, self._tree))

    def copy(self) -> "Configuration":
        other = Configuration.__new__(Configuration)
        other.__dict__.update(self.__dict__)
        other.occupancy = self.occupancy.copy()
        other._tree = self._tree.copy()
        other.events = EventCounter(**vars(self.events))
        return other

    def describe_event(self, e: int, time: float) -> EventRecord:
        """Describe an event that has just been applied."""
        n, d = self.lattice.site_count, self.lattice.dim
        if e < n * d:
            s, a = divmod(e, d)
            t = int(self._nbr[s, a, 0])
            sign = 1 if self.occupancy[t] == 1 else -1
            return EventRecord(time, "exchange", int(s), a + 1, sign, 0)
        j = e - n * d
        f = self.lattice.face_size
        s = j if j < f else n - 2 * f + j
        delta = 1 if self.occupancy[s] == 1 else -1
        return EventRecord(time, "flip", int(s), None, None, delta)


class EventSource:
    """Buffered waiting times and selection uniforms from two independent streams."""

    def __init__(self, waits: np.random.Generator, picks: np.random.Generator, size: int = RNG_BUFFER):
        self.waits = waits
        self.picks = picks
        self.size = size
        self.exps = np.empty(0)
        self.unif = np.empty(0)
        self.pos = 0

    @classmethod
    def from_seed(cls, master_seed: int, *keys: int, size: int = RNG_BUFFER) -> "EventSource":
        _, waits, picks = replica_streams(master_seed, *keys)
        return cls(waits, picks, size)

    def ensure(self) -> None:
        if self.pos >= self.exps.shape[0]:
            self.exps = self.waits.standard_exponential(self.size)
            self.unif = self.picks.random(self.size)
            self.pos = 0


_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)


def _advance(cfg: Configuration, src: EventSource, t_stop: float, max_events: int,
             log=None) -> tuple[int, int]:
    """Advance until ``t_stop`` or ``max_events``; returns (events, status)."""
    done = 0
    while True:
        src.ensure()
        if log is not None:
            le, lt, ld = log
            le, lt, ld = le[done:], lt[done:], ld[done:]
        else:
            le, lt, ld = _EMPTY_I, _EMPTY_F, _EMPTY_I
        t, pos, n, dp, status = K.advance(
            cfg.occupancy, cfg._tree, cfg._nbr, cfg._pp, cfg._pm, cfg._create,
            cfg._annihilate, cfg.lattice.face_size, cfg.time, t_stop,
            src.exps, src.unif, src.pos, max_events - done, le, lt, ld,
        )
        cfg.time = t
        src.pos = pos
        cfg.particle_count += dp
        done += n
        if status != K.STOP_BUFFER:
            return done, status


def step(cfg: Configuration, src: EventSource) -> EventRecord | None:
    """Perform exactly one event. Returns ``None`` in an absorbing state."""
    log = (np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(1, dtype=np.int64))
    n, status = _advance(cfg, src, np.inf, 1, log)
    if status == K.STOP_ABSORBED:
        return None
    rec = cfg.describe_event(int(log[0][0]), float(log[1][0]))
    _count(cfg.events, rec)
    return rec


def _count(counter: EventCounter, rec: EventRecord) -> None:
    if rec.kind == "exchange":
        counter.exchanges += 1
    else:
        counter.flips += 1
        if rec.delta > 0:
            counter.created += 1
        else:
            counter.annihilated += 1


def run_events(cfg: Configuration, src: EventSource, n_events: int) -> np.ndarray:
    """Run ``n_events`` events and return the logged event ids (for oracle checks)."""
    log = (np.zeros(n_events, dtype=np.int64), np.zeros(n_events), np.zeros(n_events, dtype=np.int64))
    done, status = _advance(cfg, src, np.inf, n_events, log)
    if status == K.STOP_ABSORBED and done < n_events:
        raise AbsorbingState(f"absorbed after {done} events")
    flips = int(np.count_nonzero(log[2][:done]))
    cfg.events.flips += flips
    cfg.events.exchanges += done - flips
    cfg.events.created += int(np.count_nonzero(log[2][:done] > 0))
    cfg.events.annihilated += int(np.count_nonzero(log[2][:done] < 0))
    return log[0][:done]


def micro_time(macro_time: float, eps: float) -> float:
    return macro_time / eps**2


@dataclass
class RunResult:
    snapshots: list[np.ndarray]
    snapshot_times: list[float]  # macroscopic
    events: int
    micro_time: float
    absorbed: bool = False
    particle_counts: list[int] = field(default_factory=list)
    final: np.ndarray | None = None


def run_until(cfg: Configuration, src: EventSource, macro_time: float,
              snapshot_times: Sequence[float] = ()) -> RunResult:
    """Advance to microscopic time ``macro_time / eps**2``, copying occupancy at snapshot times.

    Snapshot times are macroscopic and measured from the current clock's
    origin (the microscopic clock divided by ``eps**-2``).
    """
    if macro_time < 0:
        raise ValueError("macro_time must be >= 0")
    eps = cfg.lattice.eps
    times = sorted(float(s) for s in snapshot_times)
    if any(s < 0 or s > macro_time for s in times):
        raise ValueError("snapshot times must lie in [0, macro_time]")
    snaps, counts = [], []
    total = 0
    absorbed = False
    for target in times + [macro_time]:
        t_stop = micro_time(target, eps)
        if t_stop > cfg.time and not absorbed:
            n, status = _advance(cfg, src, t_stop, np.iinfo(np.int64).max)
            total += n
            if status == K.STOP_ABSORBED:
                absorbed = True
                cfg.time = t_stop  # nothing moves any more
        snaps.append(cfg.occupancy.copy())
        counts.append(cfg.particle_count)
    final = snaps.pop()
    counts.pop()
    return RunResult(snaps, times, total, cfg.time, absorbed, counts, final)


# -- snapshot files -----------------------------------------------------------

_MAGIC = b"ASEPSNAP"
_HEADER = struct.Struct("<8sHIIQd")  # magic, version, dim, inv_eps, seed, micro time


def dump_snapshot(path, lattice: LatticeSpec, occupancy, seed: int, time: float) -> None:
    occ = np.asarray(occupancy, dtype=np.uint8).reshape(-1)
    bits = np.packbits(occ, bitorder="little")
    header = _HEADER.pack(_MAGIC, 1, lattice.dim, lattice.inv_eps, int(seed), float(time))
    Path(path).write_bytes(header + bits.tobytes())


def load_snapshot(path) -> tuple[LatticeSpec, np.ndarray, int, float]:
    raw = Path(path).read_bytes()
    magic, version, dim, inv_eps, seed, time = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a snapshot file")
    lattice = LatticeSpec(inv_eps, dim)
    bits = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    occ = np.unpackbits(bits, count=lattice.site_count, bitorder="little")
    return lattice, occ.astype(np.uint8), seed, time


__all__ = [
    "AbsorbingState", "BoundaryVariant", "Configuration", "EventRecord", "EventSource",
    "ModelParams", "RunResult", "boundary_rates", "detailed_balance_ratio", "dump_snapshot",
    "load_snapshot", "micro_time", "replica_streams", "run_events", "run_until",
    "sample_initial", "step",
]
