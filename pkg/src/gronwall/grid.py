"""Uniform grids on [alpha, beta] and real-valued grid functions.

Everything downstream (kernels, bounds, the Picard oracle) lives on one
shared uniform grid; all integrals are composite trapezoid sums over its
nodes, so cumulative integrals, bound formulas and the oracle agree on
where values live.  Grids and grid functions are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as expr_mod
from .expr import Expr, free_variables

__all__ = [
    "Grid",
    "GridFunction",
    "GridError",
    "NonFiniteSampleError",
    "constant",
    "sample",
    "cumulative_trapezoid",
    "running_sup",
    "pointwise",
    "refine",
    "restrict",
]


class GridError(ValueError):
    pass


class NonFiniteSampleError(GridError):
    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class Grid:
    """Uniform partition of ``[alpha, beta]`` into ``m`` subintervals (m+1 nodes)."""

    alpha: float
    beta: float
    m: int

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise GridError("grid endpoints must be finite")
        if not self.alpha < self.beta:
            raise GridError(f"need alpha < beta, got [{self.alpha}, {self.beta}]")
        if self.m < 1:
            raise GridError(f"need m >= 1, got {self.m}")

    @property
    def dt(self) -> float:
        return (self.beta - self.alpha) / self.m

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(self.alpha, self.beta, self.m + 1)
        if not (np.diff(t) > 0).all():
            raise GridError("grid nodes are not strictly increasing (m too large?)")
        t.flags.writeable = False
        return t

    def refined(self) -> "Grid":
        return Grid(self.alpha, self.beta, 2 * self.m)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a real function at the nodes of a :class:`Grid`.

    Values may contain non-finite entries (e.g. a blown-up bound tail);
    owners flag those through :attr:`first_nonfinite_node`.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.grid.m + 1,):
            raise GridError(
                f"expected {self.grid.m + 1} values, got shape {vals.shape}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def first_nonfinite_node(self) -> int | None:
        finite = np.isfinite(self.values)
        if finite.all():
            return None
        return int(np.argmin(finite))

    def at(self, t: float) -> float:
        """Linear interpolation between nodes; ``t`` must lie in [alpha, beta]."""
        g = self.grid
        if not (g.alpha <= t <= g.beta):
            raise GridError(f"t={t} outside [{g.alpha}, {g.beta}]")
        return float(np.interp(t, g.nodes, self.values))

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _require_same_grid(self, other)
            other = other.values
        with np.errstate(all="ignore"):
            return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


def _require_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GridError(f"grid mismatch: {f.grid} vs {g.grid}")


def constant(value: float, g: Grid) -> GridFunction:
    return GridFunction(g, np.full(g.m + 1, float(value)))


def sample(e: Expr, g: Grid) -> GridFunction:
    """Evaluate an expression in the variable ``t`` at every grid node.

    Raises :class:`NonFiniteSampleError` naming the first node where the
    value is not finite (e.g. a pole inside the interval).
    """
    extra = free_variables(e) - {"t"}
    if extra:
        raise GridError(f"expression depends on {sorted(extra)}, expected only 't'")
    vals = np.broadcast_to(
        np.asarray(expr_mod.evaluate(e, {"t": g.nodes})), (g.m + 1,)
    )
    finite = np.isfinite(vals)
    if not finite.all():
        j = int(np.argmin(finite))
        raise NonFiniteSampleError(
            f"non-finite sample at node {j} (t={g.nodes[j]})", node=j
        )
    return GridFunction(g, vals)


def cumulative_trapezoid(f: GridFunction) -> GridFunction:
    """Running integral from alpha by the composite trapezoid rule.

    out[0] = 0 and out[j] = out[j-1] + dt*(f[j-1]+f[j])/2; exact for
    integrands that are piecewise linear on the grid.
    """
    v = f.values
    out = np.empty_like(v)
    out[0] = 0.0
    with np.errstate(all="ignore"):
        out[1:] = np.cumsum(f.grid.dt * (v[:-1] + v[1:]) / 2.0)
    return GridFunction(f.grid, out)


def running_sup(f: GridFunction) -> GridFunction:
    """Nodewise running maximum: out[j] = max(f[0..j])."""
    return GridFunction(f.grid, np.maximum.accumulate(f.values))


_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
}


def pointwise(op: str, f: GridFunction, other=None) -> GridFunction:
    """Nodewise algebra on grid functions.

    ``op`` is one of ``add``, ``sub``, ``mul``, ``div`` (second operand a
    GridFunction on the same grid), ``pow_scalar`` / ``scale`` (second
    operand a scalar) or ``exp`` (no second operand).  Non-finite results
    are carried in the output and flagged via ``first_nonfinite_node``.
    """
    if op in _BINARY_OPS:
        if not isinstance(other, GridFunction):
            raise GridError(f"op {op!r} needs a GridFunction operand")
        _require_same_grid(f, other)
        with np.errstate(all="ignore"):
            return GridFunction(f.grid, _BINARY_OPS[op](f.values, other.values))
    if op == "pow_scalar":
        with np.errstate(all="ignore"):
            return GridFunction(f.grid, np.power(f.values, float(other)))
    if op == "scale":
        with np.errstate(all="ignore"):
            return GridFunction(f.grid, f.values * float(other))
    if op == "exp":
        if other is not None:
            raise GridError("op 'exp' takes no second operand")
        with np.errstate(all="ignore"):
            return GridFunction(f.grid, np.exp(f.values))
    raise GridError(f"unknown pointwise op {op!r}")


def refine(f: GridFunction) -> GridFunction:
    """Linear interpolation onto the grid with doubled m.

    Even nodes copy the original values bitwise, so ``restrict(refine(f))``
    returns ``f`` exactly.
    """
    fine = f.grid.refined()
    out = np.empty(fine.m + 1)
    out[0::2] = f.values
    out[1::2] = (f.values[:-1] + f.values[1:]) / 2.0
    return GridFunction(fine, out)


def restrict(f: GridFunction) -> GridFunction:
    """Subsample every other node onto the grid with halved m (m must be even)."""
    if f.grid.m % 2 != 0:
        raise GridError(f"restrict needs even m, got {f.grid.m}")
    coarse = Grid(f.grid.alpha, f.grid.beta, f.grid.m // 2)
    return GridFunction(coarse, f.values[0::2])
