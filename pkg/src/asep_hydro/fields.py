"""Real-valued fields on tensor grids over [-1, 1] x torus^(d-1)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ScalarField:
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {shape}")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def points(self) -> np.ndarray:
        """(n_nodes, d) node coordinates in row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def same_grid(self, other: "ScalarField", atol: float = 1e-12) -> bool:
        return self.shape == other.shape and all(
            np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.axes, other.axes)
        )

    def with_values(self, values, **meta) -> "ScalarField":
        return ScalarField(self.axes, values, {**self.meta, **meta})

    @classmethod
    def from_function(cls, axes, fn, **meta) -> "ScalarField":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        vals = np.asarray(fn(pts), dtype=float)
        vals = np.broadcast_to(vals, (pts.shape[0],)).reshape(mesh[0].shape)
        return cls(axes, vals, dict(meta))


def write_field(path, f: ScalarField, **sidecar) -> None:
    """CSV with columns u1..ud,value plus a JSON sidecar next to it.

    Numbers are written with 17 significant digits so a reload is bit-exact.
    """
    path = Path(path)
    header = [f"u{i + 1}" for i in range(f.dim)] + ["value"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for pt, v in zip(f.points(), f.values.reshape(-1)):
            w.writerow([format(x, ".17g") for x in (*pt, v)])
    meta = {**f.meta, **sidecar, "shape": list(f.shape)}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")


def read_field(path) -> ScalarField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    shape = tuple(meta.pop("shape"))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = len(shape)
    values = data[:, d].reshape(shape)
    axes = []
    for i in range(d):
        col = data[:, i].reshape(shape)
        index = [0] * d
        index[i] = slice(None)
        axes.append(col[tuple(index)])
    return ScalarField(tuple(axes), values, meta)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)
