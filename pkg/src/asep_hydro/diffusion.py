"""Measure the diffusion matrix from the relaxation of small density waves.

Each probe starts the bulk dynamics on a fully periodic lattice from the
product measure with density ``1/2 + a*cos(k.x)``, ``k = 2*pi*q/side``, and
follows the ensemble mean of the Fourier amplitude

    A(s) = (2/V) * sum_x (eta_s(x) - 1/2) * cos(k.x).

At density 1/2 the linearised transport term vanishes, so the mean amplitude
decays as ``exp(-(kappa . D kappa) s)`` in microscopic time, with
``kappa_i = 2 sin(k_i / 2)`` the lattice wavenumber (the symbol of the nearest
neighbour Laplacian, exact for symmetric exclusion).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (BoundaryVariant, Configuration, EventSource, ModelParams,
                       replica_streams, run_until, sample_initial)
from .lattice import LatticeSpec

log = logging.getLogger(__name__)

MIN_R2 = 0.95


@dataclass(frozen=True)
class ModeProbe:
    q: tuple[int, ...]
    amplitude: float = 0.05
    replicas: int = 100
    n_times: int = 11
    decay_span: float = 2.5  # observe until kappa^2 * s reaches this

    def __post_init__(self):
        if not any(self.q):
            raise ValueError("wavevector must be nonzero")
        if not 0 <= self.amplitude < 0.5:
            raise ValueError("amplitude must lie in [0, 1/2)")


@dataclass
class ModeRate:
    q: tuple[int, ...]
    kappa: np.ndarray
    rate: float
    stderr: float
    r2: float
    n_points: int
    accepted: bool
    times: np.ndarray = field(repr=False)
    mean_amplitude: np.ndarray = field(repr=False)
    amplitude_se: np.ndarray = field(repr=False)


def lattice_wavenumber(q, side: int) -> np.ndarray:
    k = 2 * np.pi * np.asarray(q, dtype=float) / side
    return 2 * np.sin(k / 2)


def _fit_rate(times, amps, window, weights):
    """Weighted least squares of log-amplitude against time; returns (rate, R^2)."""
    t, y, w = times[window], np.log(amps[window]), weights[window]
    slope, intercept = np.polyfit(t, y, 1, w=np.sqrt(w))
    fitted = slope * t + intercept
    ybar = np.average(y, weights=w)
    ss_res = np.sum(w * (y - fitted) ** 2)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return -slope, r2


def relax_mode(params: ModelParams, lattice: LatticeSpec, probe: ModeProbe, seed: int,
               probe_key: int = 0) -> ModeRate:
    """Decay rate (microscopic time) of the probe's mean amplitude with jackknife error."""
    if not lattice.torus:
        raise ValueError("mode relaxation runs on a fully periodic lattice")
    kappa = lattice_wavenumber(probe.q, lattice.side)
    k = 2 * np.pi * np.asarray(probe.q, dtype=float) / lattice.side
    phase = np.cos(lattice.coordinates @ k)
    s_max = probe.decay_span / float(kappa @ kappa)
    times = np.linspace(0.0, s_max, probe.n_times)
    eps = lattice.eps
    macro = times * eps**2
    amps = np.empty((probe.replicas, probe.n_times))
    for r in range(probe.replicas):
        init, waits, picks = replica_streams(seed, probe_key, r)
        occ = sample_initial(lattice, probe.amplitude * phase / eps, init)
        cfg = Configuration(lattice, params, occ)
        res = run_until(cfg, EventSource(waits, picks), macro[-1], macro[:-1])
        snaps = res.snapshots + [res.final]
        for j, snap in enumerate(snaps):
            amps[r, j] = 2.0 / lattice.site_count * ((snap - 0.5) @ phase)
    mean = amps.mean(axis=0)
    se = amps.std(axis=0, ddof=1) / np.sqrt(probe.replicas)
    window = mean > 3 * se
    # the decay is monotone, so keep the leading run of significant points
    if not window[0]:
        window[:] = False
    else:
        stop = np.argmin(window) if not window.all() else len(window)
        window[stop:] = False
    if window.sum() < 3:
        log.warning("probe q=%s: amplitude indistinguishable from noise", probe.q)
        return ModeRate(tuple(probe.q), kappa, float("nan"), float("nan"), 0.0,
                        int(window.sum()), False, times, mean, se)
    # inverse variance of log(mean), taking the t=0 point as equally reliable as t=1
    weights = (mean / np.maximum(se, se[1:].min())) ** 2
    rate, r2 = _fit_rate(times, mean, window, weights)
    # delete-one jackknife over replicas
    n = probe.replicas
    total = amps.sum(axis=0)
    jack = np.empty(n)
    for r in range(n):
        m = (total - amps[r]) / (n - 1)
        jack[r] = _fit_rate(times, np.maximum(m, 1e-300), window, weights)[0]
    stderr = float(np.sqrt((n - 1) / n * np.sum((jack - jack.mean()) ** 2)))
    accepted = r2 >= MIN_R2
    if not accepted:
        log.warning("probe q=%s: log-amplitude fit R^2=%.3f below %.2f", probe.q, r2, MIN_R2)
    return ModeRate(tuple(probe.q), kappa, float(rate), stderr, float(r2), int(window.sum()),
                    accepted, times, mean, se)


@dataclass
class DiffusionEstimate:
    D: np.ndarray
    stderr: np.ndarray
    eigenvalues: np.ndarray
    asymmetry: float = 0.0
    residual: float = 0.0
    r2: list[float] = field(default_factory=list)

    @property
    def positive_definite(self) -> bool:
        return bool(self.eigenvalues.min() > 0)

    @classmethod
    def from_matrix(cls, D, stderr=None) -> "DiffusionEstimate":
        """Symmetrise a raw matrix, recording half the largest |D - D^T|."""
        D = np.asarray(D, dtype=float)
        sym = 0.5 * (D + D.T)
        asym = float(0.5 * np.abs(D - D.T).max())
        se = np.zeros_like(sym) if stderr is None else np.asarray(stderr, dtype=float)
        return cls(sym, se, np.linalg.eigvalsh(sym), asymmetry=asym)

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("D", "stderr", "eigenvalues"):
            out[key] = np.asarray(out[key]).tolist()
        out["positive_definite"] = self.positive_definite
        return out


def assemble_D(wavevectors, rates, stderrs=None) -> DiffusionEstimate:
    """Least-squares symmetric D from rates = kappa . D kappa."""
    K = np.atleast_2d(np.asarray(wavevectors, dtype=float))
    y = np.asarray(rates, dtype=float)
    n_probe, d = K.shape
    pairs = [(i, i) for i in range(d)] + list(itertools.combinations(range(d), 2))
    A = np.array([[K[p, i] * K[p, j] * (1 if i == j else 2) for i, j in pairs]
                  for p in range(n_probe)])
    if n_probe < len(pairs) or np.linalg.matrix_rank(A) < len(pairs):
        raise ValueError(
            f"probe set determines only {np.linalg.matrix_rank(A)} of {len(pairs)} entries of D"
        )
    se = np.ones(n_probe) if stderrs is None else np.asarray(stderrs, dtype=float)
    w = 1.0 / np.where(se > 0, se, 1.0)
    sol, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    cov = np.linalg.pinv((A * w[:, None]).T @ (A * w[:, None]))
    D = np.zeros((d, d))
    S = np.zeros((d, d))
    for (i, j), v, var in zip(pairs, sol, np.diag(cov)):
        D[i, j] = D[j, i] = v
        S[i, j] = S[j, i] = np.sqrt(var) if stderrs is not None else 0.0
    resid = float(np.abs(A @ sol - y).max())
    return DiffusionEstimate(D, S, np.linalg.eigvalsh(D), residual=resid)


def default_probes(dim: int, amplitude: float = 0.05, replicas: int = 100) -> list[ModeProbe]:
    """Smallest axis-aligned wavevectors plus e_i + e_j and e_i - e_j for every pair."""
    probes = []
    for i in range(dim):
        q = [0] * dim
        q[i] = 1
        probes.append(ModeProbe(tuple(q), amplitude, replicas))
    for i, j in itertools.combinations(range(dim), 2):
        for sign in (1, -1):
            q = [0] * dim
            q[i], q[j] = 1, sign
            probes.append(ModeProbe(tuple(q), amplitude, replicas))
    return probes


def estimate_diffusion(delta, inv_eps: int = 6, dim: int = 3, replicas: int = 100,
                       amplitude: float = 0.05, seed: int = 0):
    """Run the default probe set and assemble D. Returns (estimate, per-probe rates)."""
    lattice = LatticeSpec(inv_eps, dim, torus=True)
    params = ModelParams.from_delta(delta, variant=BoundaryVariant.REVERSIBLE)
    results = []
    for key, probe in enumerate(default_probes(dim, amplitude, replicas)):
        results.append(relax_mode(params, lattice, probe, seed, key))
        log.info("probe q=%s rate=%.4f +- %.4f", probe.q, results[-1].rate, results[-1].stderr)
    est = assemble_D([r.kappa for r in results], [r.rate for r in results],
                     [r.stderr for r in results])
    est.r2 = [r.r2 for r in results]
    return est, results
