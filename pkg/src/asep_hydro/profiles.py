"""Registered profile expressions for m0 and b.

A profile is a small arithmetic expression in the macroscopic coordinates
``u1 .. ud``, e.g. ``0.2 + 0.3*sin(pi*(u1+1))*cos(pi*u2)``. Only numbers,
``+ - * / **``, the constants ``pi`` and ``e`` and the functions below are
accepted, so configs stay portable and cannot run arbitrary code.
"""
from __future__ import annotations

import ast
import re

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_COORD = re.compile(r"u([1-9][0-9]*)$")


class ProfileError(ValueError):
    pass


class Profile:
    """Callable profile compiled from an expression string."""

    def __init__(self, text: str):
        self.text = str(text).strip()
        try:
            self._tree = ast.parse(self.text, mode="eval").body
        except SyntaxError as exc:
            raise ProfileError(f"cannot parse profile {self.text!r}: {exc.msg}") from None
        self.max_axis = 0
        self._check(self._tree)

    def _check(self, node) -> None:
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ProfileError(f"unsupported literal {node.value!r} in {self.text!r}")
        elif isinstance(node, ast.Name):
            m = _COORD.match(node.id)
            if m:
                self.max_axis = max(self.max_axis, int(m.group(1)))
            elif node.id not in CONSTANTS:
                raise ProfileError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
            self._check(node.args[0])
        else:
            raise ProfileError(f"unsupported construct {ast.dump(node)[:40]} in {self.text!r}")

    def _eval(self, node, u):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            axis = int(node.id[1:]) - 1
            return u[:, axis]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, u), self._eval(node.right, u))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, u)
            return -v if isinstance(node.op, ast.USub) else v
        return FUNCTIONS[node.func.id](self._eval(node.args[0], u))

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self.max_axis > u.shape[1]:
            raise ProfileError(f"profile {self.text!r} uses u{self.max_axis} but d = {u.shape[1]}")
        out = self._eval(self._tree, u)
        return np.broadcast_to(np.asarray(out, dtype=float), (u.shape[0],)).copy()

    def is_zero(self, dim: int, n: int = 9) -> bool:
        """True when the profile vanishes on a test grid (used for precondition checks)."""
        axes = [np.linspace(-1, 1, n)] * dim
        pts = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        return bool(np.all(self(pts) == 0.0))

    def __repr__(self) -> str:
        return f"Profile({self.text!r})"
