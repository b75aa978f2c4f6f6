"""Kernel evaluation and the iterated simplex-integral engine.

A kernel of arity ``i`` is an expression ``k(t, t1, ..., ti)`` over the
outer time ``t`` and ``i`` inner variables; integrals run over the ordered
simplex ``alpha <= ti <= ... <= t1 <= t``.  The two-variable kernel
``k(t, s)`` has arity 1 (``s`` aliases ``t1``) and the three-variable
kernel ``h(t, s, r)`` has arity 2.

All quadrature is nested composite trapezoid on the shared grid, with
inner integrals over fewer than two nodes evaluating to zero.  An
arity-``i`` term with full ``t``-dependence costs ``O(m^i)`` per outer
node; kernels whose active expression does not involve ``t`` are
integrated in a single pass.  Kernels must be nonnegative where sampled
(tolerance -1e-12); violations raise :class:`NegativeKernelError` naming
the node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import expr as expr_mod
from .expr import Expr, Num, free_variables, parse, rename_variables
from .grid import Grid, GridFunction

__all__ = [
    "Kernel",
    "KernelSet",
    "KernelError",
    "NegativeKernelError",
    "compute_B",
    "compute_B1",
    "apply_R",
    "apply_Q",
    "kernel_dt",
    "MAX_ITERATED_KERNELS",
]

NONNEG_TOL = -1e-12
MAX_ITERATED_KERNELS = 4
FD_STEP_SCALE = 1e-5

_ALIASES = {"s": "t1", "r": "t2"}


class KernelError(ValueError):
    pass


class NegativeKernelError(KernelError):
    pass


def _canonical(e: Expr | str, arity: int, what: str) -> Expr:
    names = {f"t{i}" for i in range(1, arity + 1)}
    aliases = {a: c for a, c in _ALIASES.items() if c in names}
    if isinstance(e, str):
        e = parse(e, {"t"} | names | set(aliases))
    e = rename_variables(e, aliases)
    extra = free_variables(e) - {"t"} - names
    if extra:
        raise KernelError(
            f"{what} of an arity-{arity} kernel uses {sorted(extra)}; "
            f"allowed variables are t, {', '.join(sorted(names))}"
        )
    return e


@dataclass(frozen=True)
class Kernel:
    """Arity-tagged kernel expression with an optional d/dt expression.

    ``body`` and ``dt_body`` may be given as source strings; the aliases
    ``s`` (for ``t1``) and ``r`` (for ``t2``) are normalized away.
    """

    arity: int
    body: Expr
    dt_body: Expr | None = None

    def __post_init__(self):
        if self.arity < 1:
            raise KernelError(f"kernel arity must be >= 1, got {self.arity}")
        object.__setattr__(self, "body", _canonical(self.body, self.arity, "body"))
        if self.dt_body is not None:
            object.__setattr__(
                self, "dt_body", _canonical(self.dt_body, self.arity, "dt expression")
            )

    @property
    def depends_on_t(self) -> bool:
        return "t" in free_variables(self.body)

    @property
    def is_zero(self) -> bool:
        return self.body == Num(0.0)

    @property
    def dt_is_zero(self) -> bool:
        """True when d/dt is structurally zero (given as 0, or t never occurs)."""
        if self.dt_body is not None:
            return self.dt_body == Num(0.0)
        return not self.depends_on_t


@dataclass(frozen=True)
class KernelSet:
    """Either the pair {k(t,s), h(t,s,r)} or an iterated list k1..kn."""

    form: str  # "pair" | "iterated"
    kernels: tuple

    @classmethod
    def pair(cls, k: Kernel | None = None, h: Kernel | None = None) -> "KernelSet":
        if k is not None and k.arity != 1:
            raise KernelError(f"pair kernel k must have arity 1, got {k.arity}")
        if h is not None and h.arity != 2:
            raise KernelError(f"pair kernel h must have arity 2, got {h.arity}")
        return cls("pair", (k, h))

    @classmethod
    def iterated(cls, kernels) -> "KernelSet":
        ks = tuple(kernels)
        if not ks:
            raise KernelError("iterated kernel set must not be empty")
        if len(ks) > MAX_ITERATED_KERNELS:
            raise KernelError(
                f"at most {MAX_ITERATED_KERNELS} iterated kernels supported, got {len(ks)}"
            )
        for i, k in enumerate(ks, start=1):
            if k.arity != i:
                raise KernelError(
                    f"iterated kernels need arities 1..n in order; "
                    f"kernel {i} has arity {k.arity}"
                )
        return cls("iterated", ks)

    @property
    def k(self) -> Kernel | None:
        self._require("pair")
        return self.kernels[0]

    @property
    def h(self) -> Kernel | None:
        self._require("pair")
        return self.kernels[1]

    def _require(self, form: str) -> None:
        if self.form != form:
            raise KernelError(f"expected a {form!r} kernel set, got {self.form!r}")


@lru_cache(maxsize=6)
def _weight_matrix(m: int, dt: float) -> np.ndarray:
    """W[L, l] = trapezoid weight of node l for the integral up to node L.

    Row 0 is zero: an integral over a single node vanishes.
    """
    W = np.tril(np.full((m + 1, m + 1), dt))
    W[:, 0] = dt / 2.0
    idx = np.arange(m + 1)
    W[idx, idx] = dt / 2.0
    W[0, 0] = 0.0
    W.flags.writeable = False
    return W


def _weights(g: Grid) -> np.ndarray:
    return _weight_matrix(g.m, g.dt)


def _eval_on(e: Expr, ctx: dict) -> np.ndarray:
    shape = np.broadcast_shapes(*(np.shape(v) for v in ctx.values()))
    out = np.asarray(expr_mod.evaluate(e, ctx))
    return np.broadcast_to(out, shape)


def _check_body_values(vals: np.ndarray, label: str) -> None:
    finite = np.isfinite(vals)
    if not finite.all():
        idx = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise KernelError(f"kernel {label} is non-finite at node index {idx}")
    bad = vals < NONNEG_TOL
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NegativeKernelError(
            f"kernel {label} is negative ({vals[idx]:.6e}) at node index {idx}"
        )


class _TermEvaluator:
    """Evaluates a kernel body (or its t-derivative) on broadcast node arrays."""

    def __init__(self, k: Kernel, use_dt: bool, label: str):
        self.kernel = k
        self.use_dt = use_dt
        self.label = label
        if use_dt:
            active = k.dt_body if k.dt_body is not None else k.body
            self.vars_used = free_variables(active)
            if k.dt_body is None:
                self.vars_used = self.vars_used | {"t"}  # FD step depends on t
        else:
            self.vars_used = free_variables(k.body)

    def _raw(self, ctx: dict) -> np.ndarray:
        if not self.use_dt:
            return _eval_on(self.kernel.body, ctx)
        if self.kernel.dt_body is not None:
            return _eval_on(self.kernel.dt_body, ctx)
        t = np.asarray(ctx["t"], dtype=np.float64)
        step = FD_STEP_SCALE * np.maximum(1.0, np.abs(t))
        up = _eval_on(self.kernel.body, {**ctx, "t": t + step})
        dn = _eval_on(self.kernel.body, {**ctx, "t": t - step})
        with np.errstate(all="ignore"):
            return (up - dn) / (2.0 * step)

    def eval_vector(self, ctx: dict) -> np.ndarray:
        vals = self._raw(ctx)
        if not self.use_dt:
            _check_body_values(vals, self.label)
        return vals

    def eval_matrix(self, ctx: dict) -> np.ndarray:
        # The quadrature only touches the simplex part (inner <= outer);
        # zero the strict upper triangle so unused entries (possibly NaN
        # for kernels like sqrt(t-s)) cannot leak into the sums.
        vals = np.tril(self._raw(ctx))
        if not self.use_dt:
            _check_body_values(vals, self.label)
        return vals


def _simplex_term(
    k: Kernel,
    w: np.ndarray,
    g: Grid,
    n_diag: int,
    use_dt: bool = False,
    label: str = "kernel",
) -> np.ndarray:
    """Iterated simplex integral of ``kernel * w`` against each outer node.

    The kernel's slot ``t`` (and its first ``n_diag`` inner slots) are
    pinned to the outer node t_j; the remaining ``arity - n_diag`` slots
    are integrated over the ordered simplex below t_j, with ``w`` attached
    to the innermost variable.  ``n_diag = arity`` is the pure diagonal
    term ``k(t, t, ..., t) * w(t)``.
    """
    T = g.nodes
    W = _weights(g)
    m = g.m
    ev = _TermEvaluator(k, use_dt, label)
    names = [f"t{i}" for i in range(1, k.arity + 1)]
    diag, ints = names[:n_diag], names[n_diag:]
    depth = len(ints)
    j_slots = {"t", *diag}
    j_dep = bool(ev.vars_used & j_slots)

    if depth == 0:
        ctx = {"t": T, **{name: T for name in diag}}
        return ev.eval_vector(ctx) * w

    if depth == 1:
        col = T[:, None]
        ctx = {"t": col, **{name: col for name in diag}, ints[0]: T[None, :]}
        vals = ev.eval_matrix(ctx)
        return np.einsum("jl,jl,l->j", W, vals, w)

    if depth == 2:
        if not j_dep:
            ctx = {ints[0]: T[:, None], ints[1]: T[None, :]}
            vals = ev.eval_matrix(ctx)
            inner = np.einsum("ln,ln,n->l", W, vals, w)
            return W @ inner
        out = np.empty(m + 1)
        out[0] = 0.0
        for j in range(1, m + 1):
            s = slice(0, j + 1)
            ctx = {
                "t": T[j],
                **{name: T[j] for name in diag},
                ints[0]: T[s, None],
                ints[1]: T[None, s],
            }
            vals = ev.eval_matrix(ctx)
            inner = np.einsum("ln,ln,n->l", W[s, s], vals, w[s])
            out[j] = W[j, s] @ inner
        return out

    if depth == 3:
        if not j_dep:
            level1 = np.empty(m + 1)
            for l1 in range(m + 1):
                s = slice(0, l1 + 1)
                ctx = {ints[0]: T[l1], ints[1]: T[s, None], ints[2]: T[None, s]}
                vals = ev.eval_matrix(ctx)
                inner = np.einsum("ln,ln,n->l", W[s, s], vals, w[s])
                level1[l1] = W[l1, s] @ inner
            return W @ level1
        out = np.empty(m + 1)
        for j in range(m + 1):
            level1 = np.empty(j + 1)
            for l1 in range(j + 1):
                s = slice(0, l1 + 1)
                ctx = {
                    "t": T[j],
                    **{name: T[j] for name in diag},
                    ints[0]: T[l1],
                    ints[1]: T[s, None],
                    ints[2]: T[None, s],
                }
                vals = ev.eval_matrix(ctx)
                inner = np.einsum("ln,ln,n->l", W[s, s], vals, w[s])
                level1[l1] = W[l1, s] @ inner
            out[j] = W[j, : j + 1] @ level1
        return out

    # depth >= 4: plain recursion over the outermost integration variables
    def nested(fixed: dict, remaining: list, limit: int) -> float:
        name = remaining[0]
        if len(remaining) == 2:
            s = slice(0, limit + 1)
            ctx = {**fixed, name: T[s, None], remaining[1]: T[None, s]}
            vals = ev.eval_matrix(ctx)
            inner = np.einsum("ln,ln,n->l", W[s, s], vals, w[s])
            return float(W[limit, s] @ inner)
        acc = np.array(
            [nested({**fixed, name: T[l]}, remaining[1:], l) for l in range(limit + 1)]
        )
        return float(W[limit, : limit + 1] @ acc)

    out = np.empty(m + 1)
    for j in range(m + 1):
        fixed = {"t": T[j], **{name: T[j] for name in diag}}
        out[j] = nested(fixed, ints, j)
    return out


def _require_grid(f: GridFunction, g: Grid, name: str) -> None:
    if f.grid != g:
        raise KernelError(f"{name} lives on {f.grid}, expected {g}")


def compute_B(
    b: GridFunction, k: Kernel | None, h: Kernel | None, g: Grid
) -> GridFunction:
    """B(t) = b(t) + int_a^t k(t,s) ds + int_a^t int_a^s h(t,s,r) dr ds.

    ``k`` must have arity 1 and ``h`` arity 2; pass None for an absent
    kernel.  The k-term costs O(m^2); a t-dependent h-term costs O(m^3).
    """
    _require_grid(b, g, "b")
    out = b.values.copy()
    ones = np.ones(g.m + 1)
    if k is not None and not k.is_zero:
        if k.arity != 1:
            raise KernelError(f"k must have arity 1, got {k.arity}")
        out += _simplex_term(k, ones, g, n_diag=0, label="k")
    if h is not None and not h.is_zero:
        if h.arity != 2:
            raise KernelError(f"h must have arity 2, got {h.arity}")
        out += _simplex_term(h, ones, g, n_diag=0, label="h")
    return GridFunction(g, out)


def compute_B1(b: GridFunction, k: Kernel | None, g: Grid) -> GridFunction:
    """B1(t) = b(t) + int_a^t k(t,s) ds."""
    return compute_B(b, k, None, g)


def apply_R(ks: KernelSet, w: GridFunction, g: Grid) -> GridFunction:
    """The functional R[w](t) of an iterated kernel set.

    R[w](t) = k1(t,t) w(t) + sum_{i>=2} iterated integral of
    k_i(t, t, t2, ..., ti) w(ti) over the simplex below t.
    """
    ks._require("iterated")
    _require_grid(w, g, "w")
    out = np.zeros(g.m + 1)
    for i, k in enumerate(ks.kernels, start=1):
        if k.is_zero:
            continue
        out += _simplex_term(k, w.values, g, n_diag=1, label=f"k{i}")
    return GridFunction(g, out)


def apply_Q(ks: KernelSet, w: GridFunction, g: Grid) -> GridFunction:
    """The functional Q[w](t): as R but with dk_i/dt and integrals from t1.

    Each kernel needs its t-derivative: an explicit ``dt_body`` wins,
    otherwise a central finite difference in t is used.
    """
    ks._require("iterated")
    _require_grid(w, g, "w")
    out = np.zeros(g.m + 1)
    for i, k in enumerate(ks.kernels, start=1):
        if k.dt_is_zero or k.is_zero:
            continue
        term = _simplex_term(k, w.values, g, n_diag=0, use_dt=True, label=f"k{i}")
        if not np.isfinite(term).all():
            j = int(np.argmin(np.isfinite(term)))
            raise KernelError(f"d/dt of kernel k{i} is non-finite at node {j}")
        out += term
    return GridFunction(g, out)


def kernel_dt(k: Kernel, point) -> float:
    """d/dt of the kernel at ``point = (t, x1, ..., x_arity)``.

    Uses ``dt_body`` when present, else a central difference with step
    1e-5 * max(1, |t|).
    """
    point = tuple(float(x) for x in point)
    if len(point) != k.arity + 1:
        raise KernelError(
            f"point must have {k.arity + 1} coordinates, got {len(point)}"
        )
    ctx = {"t": point[0]}
    ctx.update({f"t{i}": x for i, x in enumerate(point[1:], start=1)})
    if k.dt_body is not None:
        val = expr_mod.evaluate(k.dt_body, ctx)
    else:
        t = point[0]
        step = FD_STEP_SCALE * max(1.0, abs(t))
        up = expr_mod.evaluate(k.body, {**ctx, "t": t + step})
        dn = expr_mod.evaluate(k.body, {**ctx, "t": t - step})
        val = (up - dn) / (2.0 * step)
    if not np.isfinite(val):
        raise KernelError(f"kernel derivative non-finite at {point}")
    return float(val)
