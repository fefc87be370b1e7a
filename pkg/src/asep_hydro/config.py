"""Experiment configuration: flat sectioned ``key = value`` files.

Every key maps to one model quantity::

    [model]
    p_plus = 1.2, 1.0, 1.0      # jump weight along +e_i
    p_minus = 0.8, 1.0, 1.0     # jump weight along -e_i (p_plus + p_minus = 2)
    # or: delta = 0.4, 0, 0     # p_plus - p_minus
    variant = drift_aligned     # or: reversible
    speedup_exponent = 3        # reversible reservoirs only
    b = 0.2                     # reservoir profile on both faces
    b_left = ...                # optional per-face override (x1 = -1)
    b_right = ...               # optional per-face override (x1 = +1)

    [lattice]
    dim = 3
    inv_eps = 6, 9, 12          # the eps ladder, as 1/eps
    block_ell = 1.0             # block radius k = ceil(ell * eps^(-2/d))

    [initial]
    m0 = 0.2 + 0.3*sin(pi*(u1+1))*cos(pi*u2)

    [pde]
    D = identity                # identity | file:<path> | estimator

    [run]
    times = 0.25                # macroscopic snapshot times
    replicas = 100
    seed = 12345
    output = out

Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import BoundaryVariant, ModelParams
from .profiles import Profile, ProfileError


class ConfigError(ValueError):
    pass


_KEYS = {
    "model": {"p_plus", "p_minus", "delta", "variant", "speedup_exponent", "b", "b_left", "b_right"},
    "lattice": {"dim", "inv_eps", "block_ell"},
    "initial": {"m0"},
    "pde": {"d", "n_axis1"},
    "run": {"times", "replicas", "seed", "output", "window", "samples", "burn_in", "stride"},
    "check": {"smallness", "z_global", "z_slice", "steady_tol"},
    "estimator": {"inv_eps", "replicas", "amplitude"},
}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    out = []
    for x in text.replace(",", " ").split():
        v = float(x)
        if not v.is_integer():
            raise ValueError(f"{x!r} is not an integer")
        out.append(int(v))
    return out


@dataclass
class ExperimentConfig:
    dim: int = 3
    inv_eps: list[int] = field(default_factory=lambda: [6])
    block_ell: float = 1.0
    p_plus: tuple[float, ...] = (1.2, 1.0, 1.0)
    p_minus: tuple[float, ...] = (0.8, 1.0, 1.0)
    variant: BoundaryVariant = BoundaryVariant.DRIFT_ALIGNED
    speedup_exponent: float | None = None
    b_left: Profile = field(default_factory=lambda: Profile("0"))
    b_right: Profile = field(default_factory=lambda: Profile("0"))
    m0: Profile = field(default_factory=lambda: Profile("0"))
    D_source: str = "identity"
    times: list[float] = field(default_factory=lambda: [0.25])
    replicas: int = 10
    seed: int = 0
    output: Path = Path("out")
    window: tuple[float, float] = (0.0, 1.0)
    samples: int = 21
    burn_in: float = 1.0
    stride: int = 1
    smallness: float = 0.25
    z_global: float = 3.0
    z_slice: float = 4.0
    steady_tol: float = 0.1
    estimator_inv_eps: int = 3
    estimator_replicas: int = 2000
    estimator_amplitude: float = 0.05
    source_path: Path | None = None

    def as_dict(self) -> dict:
        """Plain-JSON view (profiles as their expression text)."""
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if isinstance(v, Profile):
                v = v.text
            elif isinstance(v, BoundaryVariant):
                v = v.value
            elif isinstance(v, Path):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[name] = v
        out.pop("source_path")
        return out

    def params(self) -> ModelParams:
        return ModelParams(self.p_plus, self.p_minus, self.b_left, self.b_right,
                           self.variant, self.speedup_exponent)

    def diffusion_matrix(self) -> np.ndarray | None:
        """The D to hand to the PDE solver, or ``None`` when it must be estimated."""
        src = self.D_source
        if src == "identity":
            return np.eye(self.dim)
        if src == "estimator":
            return None
        if src.startswith("file:"):
            path = Path(src[5:])
            if not path.is_absolute() and self.source_path is not None:
                path = self.source_path.parent / path
            data = json.loads(path.read_text())
            D = np.asarray(data["D"] if isinstance(data, dict) else data, dtype=float)
            if D.shape != (self.dim, self.dim):
                raise ConfigError(f"[pde] D file {path} holds a {D.shape} matrix, need {self.dim}x{self.dim}")
            return D
        raise ConfigError(f"[pde] D: unknown source {src!r}")

    def check_boundary_match(self, n: int = 17, tol: float = 1e-9) -> None:
        """m0 restricted to the faces must equal b."""
        axes = [np.linspace(-1, 1, n)] * (self.dim - 1)
        face = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1) \
            if self.dim > 1 else np.zeros((1, 0))
        for u1, prof, name in ((-1.0, self.b_left, "b_left"), (1.0, self.b_right, "b_right")):
            pts = np.concatenate([np.full((face.shape[0], 1), u1), face], axis=1)
            gap = np.abs(self.m0(pts) - prof(pts)).max()
            if gap > tol:
                raise ConfigError(f"m0 differs from {name} on the face u1={u1:+g} by {gap:.3g}")


def _set(cfg: ExperimentConfig, section: str, key: str, raw: str) -> None:
    if section == "model":
        if key in ("p_plus", "p_minus"):
            setattr(cfg, key, tuple(_floats(raw)))
        elif key == "delta":
            d = _floats(raw)
            cfg.p_plus = tuple(1 + x / 2 for x in d)
            cfg.p_minus = tuple(1 - x / 2 for x in d)
        elif key == "variant":
            cfg.variant = BoundaryVariant(raw.strip())
        elif key == "speedup_exponent":
            cfg.speedup_exponent = float(raw)
        elif key == "b":
            cfg.b_left = cfg.b_right = Profile(raw)
        else:
            setattr(cfg, key, Profile(raw))
    elif section == "lattice":
        if key == "dim":
            cfg.dim = _ints(raw)[0]
        elif key == "inv_eps":
            cfg.inv_eps = _ints(raw)
        else:
            cfg.block_ell = float(raw)
    elif section == "initial":
        cfg.m0 = Profile(raw)
    elif section == "pde":
        if key == "d":
            cfg.D_source = raw.strip()
    elif section == "run":
        if key == "times":
            cfg.times = _floats(raw)
        elif key in ("replicas", "seed", "samples", "stride"):
            setattr(cfg, key, _ints(raw)[0])
        elif key == "output":
            cfg.output = Path(raw.strip())
        elif key == "window":
            w = _floats(raw)
            if len(w) != 2:
                raise ValueError("window needs two times")
            cfg.window = (w[0], w[1])
        else:
            cfg.burn_in = float(raw)
    elif section == "check":
        setattr(cfg, key, float(raw))
    elif section == "estimator":
        if key == "amplitude":
            cfg.estimator_amplitude = float(raw)
        else:
            setattr(cfg, f"estimator_{key}", _ints(raw)[0])


def parse_config(text: str, source: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig(source_path=source)
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            try:
                _set(cfg, section, key, raw)
            except (ValueError, ProfileError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=path)


def validate(cfg: ExperimentConfig) -> None:
    from .observables import default_block_radius

    if cfg.dim < 1:
        raise ConfigError("[lattice] dim must be >= 1")
    if len(cfg.p_plus) != cfg.dim or len(cfg.p_minus) != cfg.dim:
        raise ConfigError(f"[model] jump weights need {cfg.dim} entries")
    try:
        cfg.params()
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    for prof, name in ((cfg.m0, "m0"), (cfg.b_left, "b_left"), (cfg.b_right, "b_right")):
        if prof.max_axis > cfg.dim:
            raise ConfigError(f"{name} uses u{prof.max_axis} but dim = {cfg.dim}")
    if not cfg.inv_eps or min(cfg.inv_eps) < 1:
        raise ConfigError("[lattice] inv_eps must be positive integers")
    for n in cfg.inv_eps:
        k = default_block_radius(1.0 / n, cfg.dim, cfg.block_ell)
        if k >= n:
            raise ConfigError(f"[lattice] block radius {k} does not fit inv_eps = {n}")
    if cfg.replicas < 1:
        raise ConfigError("[run] replicas must be >= 1")
    if any(t < 0 for t in cfg.times) or sorted(cfg.times) != list(cfg.times):
        raise ConfigError("[run] times must be non-negative and sorted")
    cfg.check_boundary_match()
    cfg.diffusion_matrix()
