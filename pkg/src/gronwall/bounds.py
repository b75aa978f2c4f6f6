"""Explicit a priori bounds for Volterra inequalities with a u^p nonlinearity.

Each ``*_bound`` function evaluates one closed-form bound family on the
instance grid and reports the validity horizon: the largest time up to
which the bracketed expression in the bound stays on its valid side
(strictly below 1 for the blow-up form, strictly positive for the
q-positivity form).  Past the horizon the bound values are NaN.

Instance hypotheses (nonnegativity, monotonicity, sign of p) are checked
eagerly when a :class:`ProblemInstance` is built, with tolerance -1e-12
and the first offending node named; the closed forms are meaningless off
their hypotheses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import expr as expr_mod
from .grid import Grid, GridFunction, cumulative_trapezoid, running_sup
from .kernels import Kernel, KernelSet, _TermEvaluator, _weights, compute_B, compute_B1, apply_Q, apply_R

__all__ = [
    "HorizonKind",
    "BoundResult",
    "HypothesisError",
    "ProblemInstance",
    "THEOREMS",
    "detect_horizon",
    "lemma21_bound",
    "lemma31_bound",
    "bykov_bound",
    "thm22_bound",
    "thm23_bound",
    "thm24_bound",
    "thm32_bound",
    "thm33_bound",
    "thm34_bound",
    "cor35_bound",
    "compute_bound",
]

MONOTONE_TOL = -1e-12

THEOREMS = ("bykov", "thm22", "thm23", "thm24", "thm32", "thm33", "thm34", "cor35")

_P_ABOVE_ONE = ("thm22", "thm23", "thm24")
_P_SECTION3 = ("thm32", "thm33", "thm34", "cor35")
_ITERATED = ("thm24", "thm34")
_CONST_DATUM = ("bykov", "thm23", "thm32", "thm34", "cor35")
_FN_DATUM = ("thm22", "thm33")


class HypothesisError(ValueError):
    """A theorem hypothesis fails on the given data."""


class HorizonKind(enum.Enum):
    FULL = "full"
    P_BLOW_UP = "p_blow_up"
    Q_POSITIVITY = "q_positivity"


@dataclass(frozen=True, eq=False)
class BoundResult:
    """A bound curve plus the horizon up to which it is valid.

    ``horizon_node`` is the last node index where the defining condition
    holds strictly; ``horizon_time`` interpolates the crossing linearly
    (and equals beta with kind FULL when the condition never fails).
    """

    bound: GridFunction
    horizon_node: int
    horizon_time: float
    horizon_kind: HorizonKind

    @property
    def full(self) -> bool:
        return self.horizon_kind is HorizonKind.FULL


def detect_horizon(bracket: GridFunction, kind: str):
    """Locate where ``bracket`` leaves its valid side.

    ``kind`` is ``"p_blow_up"`` (valid while strictly below 1) or
    ``"q_positivity"`` (valid while strictly positive).  Returns
    ``(horizon_node, horizon_time, HorizonKind)``; a node sitting exactly
    on the threshold is excluded.  Raises :class:`HypothesisError` when
    node 0 is already invalid.
    """
    vals = bracket.values
    T = bracket.grid.nodes
    if kind == "p_blow_up":
        threshold, result_kind = 1.0, HorizonKind.P_BLOW_UP
        valid = np.isfinite(vals) & (vals < threshold)
    elif kind == "q_positivity":
        threshold, result_kind = 0.0, HorizonKind.Q_POSITIVITY
        valid = np.isfinite(vals) & (vals > threshold)
    else:
        raise ValueError(f"unknown horizon kind {kind!r}")
    if not valid[0]:
        raise HypothesisError(
            f"bracket invalid at node 0 (value {vals[0]!r}): inconsistent instance"
        )
    if valid.all():
        return bracket.grid.m, T[-1], HorizonKind.FULL
    j = int(np.argmin(valid))
    jstar = j - 1
    v0, v1 = vals[jstar], vals[j]
    if np.isfinite(v1) and v1 != v0:
        time = T[jstar] + (T[j] - T[jstar]) * ((threshold - v0) / (v1 - v0))
    else:
        time = T[j]
    return jstar, float(time), result_kind


def _masked_past(g: Grid, vals: np.ndarray, horizon_node: int) -> GridFunction:
    out = np.where(np.arange(g.m + 1) <= horizon_node, vals, np.nan)
    return GridFunction(g, out)


def _check_nonneg(f: GridFunction, name: str) -> None:
    bad = f.values < MONOTONE_TOL
    if bad.any():
        j = int(np.argmax(bad))
        raise HypothesisError(
            f"{name} must be nonnegative; node {j} has {f.values[j]!r}"
        )


def _check_positive(f: GridFunction, name: str) -> None:
    bad = ~(f.values > 0)
    if bad.any():
        j = int(np.argmax(bad))
        raise HypothesisError(f"{name} must be positive; node {j} has {f.values[j]!r}")


def _check_nondecreasing(f: GridFunction, name: str) -> None:
    diffs = np.diff(f.values)
    bad = diffs < MONOTONE_TOL
    if bad.any():
        j = int(np.argmax(bad))
        raise HypothesisError(
            f"{name} must be nondecreasing; it drops by {-diffs[j]!r} "
            f"between nodes {j} and {j + 1}"
        )


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One inequality instance: theorem family, exponent, data and kernels.

    The datum is either ``a_const`` or ``a_fn`` depending on the family;
    ``sigma`` is the nondecreasing multiplier of thm23; ``kernels`` holds
    the pair {k, h} or the iterated list per the family form.
    """

    theorem: str
    p: float
    grid: Grid
    a_const: float | None = None
    a_fn: GridFunction | None = None
    b: GridFunction | None = None
    sigma: GridFunction | None = None
    kernels: KernelSet | None = None

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def a_values(self) -> np.ndarray:
        if self.a_fn is not None:
            return self.a_fn.values
        return np.full(self.grid.m + 1, float(self.a_const))

    def __post_init__(self):
        t = self.theorem
        if t not in THEOREMS:
            raise HypothesisError(f"unknown theorem {t!r}; expected one of {THEOREMS}")
        self._check_p()
        self._check_datum()
        self._check_coefficients()
        self._check_kernels()

    def _check_p(self):
        p = self.p
        t = self.theorem
        if t == "bykov":
            if p != 1.0:
                raise HypothesisError("bykov is the linear case and requires p = 1")
            return
        if p == 1.0:
            raise HypothesisError(
                f"{t} is undefined at p = 1 (the formulas contain 1/(1-p)); "
                "use bykov_bound for the linear case"
            )
        if t in _P_ABOVE_ONE and not p > 1.0:
            raise HypothesisError(f"{t} requires p > 1, got {p}")
        if t in _P_SECTION3 and not p >= 0.0:
            raise HypothesisError(f"{t} requires p >= 0, got {p}")

    def _check_datum(self):
        t = self.theorem
        if t in _CONST_DATUM:
            if self.a_const is None or self.a_fn is not None:
                raise HypothesisError(f"{t} takes a constant datum a")
        elif t in _FN_DATUM:
            if self.a_fn is None or self.a_const is not None:
                raise HypothesisError(f"{t} takes a datum function a(t)")
        else:  # thm24 accepts either
            have = (self.a_const is not None) + (self.a_fn is not None)
            if have != 1:
                raise HypothesisError(f"{t} takes exactly one of a / a(t)")
        if self.a_fn is not None and self.a_fn.grid != self.grid:
            raise HypothesisError("a(t) must live on the instance grid")

        if t == "bykov" or t == "thm23":
            if not self.a_const >= 0:
                raise HypothesisError(f"{t} requires a >= 0, got {self.a_const}")
        elif t in ("thm32", "thm34", "cor35"):
            if not self.a_const > 0:
                raise HypothesisError(f"{t} requires a > 0, got {self.a_const}")
        elif t == "thm22":
            _check_nonneg(self.a_fn, "a(t)")
            _check_nondecreasing(self.a_fn, "a(t)")
        elif t == "thm33":
            _check_positive(self.a_fn, "a(t)")
        elif t == "thm24":
            a = GridFunction(self.grid, self.a_values)
            _check_nonneg(a, "a(t)")

    def _check_coefficients(self):
        t = self.theorem
        if t == "cor35":
            if self.b is not None:
                raise HypothesisError("cor35 has no coefficient b(t)")
        else:
            if self.b is None:
                raise HypothesisError(f"{t} requires the coefficient b(t)")
            if self.b.grid != self.grid:
                raise HypothesisError("b(t) must live on the instance grid")
            if t == "thm24":
                _check_positive(self.b, "b(t)")
                ratio = GridFunction(self.grid, self.a_values / self.b.values)
                _check_nondecreasing(ratio, "a(t)/b(t)")
            else:
                _check_nonneg(self.b, "b(t)")

        if t == "thm23":
            if self.sigma is None:
                raise HypothesisError("thm23 requires the multiplier sigma(t)")
            if self.sigma.grid != self.grid:
                raise HypothesisError("sigma(t) must live on the instance grid")
            _check_nonneg(self.sigma, "sigma(t)")
            _check_nondecreasing(self.sigma, "sigma(t)")
        elif self.sigma is not None:
            raise HypothesisError(f"{t} takes no sigma(t)")

    def _check_kernels(self):
        t = self.theorem
        ks = self.kernels
        if t in _ITERATED:
            if ks is None or ks.form != "iterated":
                raise HypothesisError(f"{t} requires an iterated kernel set k1..kn")
            return
        if ks is None:
            object.__setattr__(self, "kernels", KernelSet.pair(None, None))
            return
        if ks.form != "pair":
            raise HypothesisError(f"{t} takes the kernel pair {{k, h}}")
        if t == "thm23" and ks.h is not None:
            raise HypothesisError("thm23 has no triple-integral kernel h")


def _require_theorem(inst: ProblemInstance, expected: str) -> None:
    if inst.theorem != expected:
        raise HypothesisError(
            f"instance is for {inst.theorem!r}, expected {expected!r}"
        )


def lemma21_bound(
    v0: float, b: GridFunction, f: GridFunction, g: Grid
) -> GridFunction:
    """Linear comparison bound: v0*exp(Cb) + int f(s) exp(Cb(t)-Cb(s)) ds."""
    Cb = cumulative_trapezoid(b).values
    with np.errstate(all="ignore"):
        E = np.exp(Cb)
        inner = cumulative_trapezoid(GridFunction(g, f.values * np.exp(-Cb))).values
        out = v0 * E + E * inner
    return GridFunction(g, out)


def lemma31_bound(
    v_alpha: float, b: GridFunction, k: GridFunction, p: float, g: Grid
) -> BoundResult:
    """Bernoulli-type bound for v' <= b v + k v^p with v(alpha) <= v_alpha.

    The bracket ``v_alpha^q + q * int k exp(-q Cb)`` must stay positive;
    its first crossing is the horizon.  ``k`` may change sign, so the
    crossing search runs for every q.
    """
    if not v_alpha > 0:
        raise HypothesisError(f"lemma31 requires v(alpha) > 0, got {v_alpha}")
    if p == 1.0:
        raise HypothesisError("p = 1 is the linear case; use lemma21_bound")
    if not p >= 0:
        raise HypothesisError(f"lemma31 requires p >= 0, got {p}")
    q = 1.0 - p
    Cb = cumulative_trapezoid(b).values
    with np.errstate(all="ignore"):
        integrand = GridFunction(g, k.values * np.exp(-q * Cb))
        bracket = GridFunction(
            g, np.power(v_alpha, q) + q * cumulative_trapezoid(integrand).values
        )
    node, time, kind = detect_horizon(bracket, "q_positivity")
    with np.errstate(all="ignore"):
        vals = np.exp(Cb) * np.power(bracket.values, 1.0 / q)
    return BoundResult(_masked_past(g, vals, node), node, time, kind)


def bykov_bound(
    a: float, b: GridFunction, k: Kernel | None, h: Kernel | None, g: Grid
) -> GridFunction:
    """Exponential bound a*exp(int B) for the linear (p = 1) inequality."""
    if not a >= 0:
        raise HypothesisError(f"bykov requires a >= 0, got {a}")
    B = compute_B(b, k, h, g)
    with np.errstate(all="ignore"):
        out = a * np.exp(cumulative_trapezoid(B).values)
    return GridFunction(g, out)


def _power_form_result(
    g: Grid, factor: np.ndarray, s: np.ndarray, p: float
) -> BoundResult:
    """Common tail of thm22/23/24: factor * (1 - s)^(1/(1-p)), horizon at s = 1."""
    node, time, kind = detect_horizon(GridFunction(g, s), "p_blow_up")
    with np.errstate(all="ignore"):
        vals = factor * np.power(1.0 - s, 1.0 / (1.0 - p))
    return BoundResult(_masked_past(g, vals, node), node, time, kind)


def thm22_bound(inst: ProblemInstance) -> BoundResult:
    """Power-nonlinearity bound with a nondecreasing datum function."""
    _require_theorem(inst, "thm22")
    g, p = inst.grid, inst.p
    a = inst.a_fn.values
    B = compute_B(inst.b, inst.kernels.k, inst.kernels.h, g)
    with np.errstate(all="ignore"):
        integrand = GridFunction(g, B.values * np.power(a, p - 1.0))
        s = (p - 1.0) * cumulative_trapezoid(integrand).values
    return _power_form_result(g, a, s, p)


def thm23_bound(inst: ProblemInstance) -> BoundResult:
    """Bound for the multiplicative form u <= sigma(t) {a1 + int b u^p + int int k u^p}."""
    _require_theorem(inst, "thm23")
    g, p, a1 = inst.grid, inst.p, inst.a_const
    sig = inst.sigma.values
    B1 = compute_B1(inst.b, inst.kernels.k, g)
    with np.errstate(all="ignore"):
        integrand = GridFunction(
            g, B1.values * np.power(sig, p - 1.0) * np.exp(sig)
        )
        s = (
            (p - 1.0)
            * np.power(a1, p - 1.0)
            * cumulative_trapezoid(integrand).values
        )
        factor = a1 * sig * np.exp(sig)
    return _power_form_result(g, factor, s, p)


def thm24_bound(inst: ProblemInstance) -> BoundResult:
    """Iterated-kernel bound built from the functionals R[b^p] and Q[b^p]."""
    _require_theorem(inst, "thm24")
    g, p = inst.grid, inst.p
    a = inst.a_values
    b = inst.b.values
    with np.errstate(all="ignore"):
        w = GridFunction(g, np.power(b, p))
    RQ = apply_R(inst.kernels, w, g) + apply_Q(inst.kernels, w, g)
    with np.errstate(all="ignore"):
        integrand = GridFunction(g, np.power(a / b, p - 1.0) * RQ.values)
        s = (p - 1.0) * cumulative_trapezoid(integrand).values
    return _power_form_result(g, a, s, p)


def _q_form_result(
    g: Grid, factor, bracket_vals: np.ndarray, q: float, search_always: bool = False
) -> BoundResult:
    """Common tail of the section-3 bounds: factor * bracket^(1/q).

    For q > 0 with nonnegative data the bracket is automatically positive,
    so no crossing search runs unless ``search_always`` is set (needed when
    kernel t-derivatives of unchecked sign feed the bracket).
    """
    bracket = GridFunction(g, bracket_vals)
    if q > 0 and not search_always:
        node, time, kind = g.m, g.beta, HorizonKind.FULL
    else:
        node, time, kind = detect_horizon(bracket, "q_positivity")
    with np.errstate(all="ignore"):
        vals = factor * np.power(bracket_vals, 1.0 / q)
    return BoundResult(_masked_past(g, vals, node), node, time, kind)


def thm32_bound(inst: ProblemInstance) -> BoundResult:
    """Bound [a^q + q int B]^(1/q) for a constant datum a > 0."""
    _require_theorem(inst, "thm32")
    g, q = inst.grid, inst.q
    B = compute_B(inst.b, inst.kernels.k, inst.kernels.h, g)
    with np.errstate(all="ignore"):
        bracket = np.power(inst.a_const, q) + q * cumulative_trapezoid(B).values
    return _q_form_result(g, 1.0, bracket, q)


def thm33_bound(inst: ProblemInstance) -> BoundResult:
    """As thm32 with the running supremum A(t) of the datum in place of a."""
    _require_theorem(inst, "thm33")
    g, q = inst.grid, inst.q
    A = running_sup(inst.a_fn).values
    B = compute_B(inst.b, inst.kernels.k, inst.kernels.h, g)
    with np.errstate(all="ignore"):
        bracket = np.power(A, q) + q * cumulative_trapezoid(B).values
    return _q_form_result(g, 1.0, bracket, q)


def thm34_bound(inst: ProblemInstance) -> BoundResult:
    """Multiplier form b(t) [a^q + q int (R[b^p]+Q[b^p])]^(1/q)."""
    _require_theorem(inst, "thm34")
    g, q, p = inst.grid, inst.q, inst.p
    b = inst.b.values
    with np.errstate(all="ignore"):
        w = GridFunction(g, np.power(b, p))
    RQ = apply_R(inst.kernels, w, g) + apply_Q(inst.kernels, w, g)
    with np.errstate(all="ignore"):
        bracket = np.power(inst.a_const, q) + q * cumulative_trapezoid(RQ).values
    return _q_form_result(g, b, bracket, q, search_always=True)


def _cor35_R(inst: ProblemInstance) -> np.ndarray:
    g = inst.grid
    T, W = g.nodes, _weights(g)
    out = np.zeros(g.m + 1)
    k, h = inst.kernels.k, inst.kernels.h
    if k is not None and not k.is_zero:
        out += _TermEvaluator(k, False, "k").eval_vector({"t": T, "t1": T})
    if h is not None and not h.is_zero:
        col = T[:, None]
        hv = _TermEvaluator(h, False, "h").eval_matrix(
            {"t": col, "t1": col, "t2": T[None, :]}
        )
        out += np.einsum("jl,jl->j", W, hv)
    return out


def _cor35_Q(inst: ProblemInstance) -> np.ndarray:
    g = inst.grid
    T, W = g.nodes, _weights(g)
    out = np.zeros(g.m + 1)
    k, h = inst.kernels.k, inst.kernels.h
    if k is not None and not (k.dt_is_zero or k.is_zero):
        ev = _TermEvaluator(k, True, "k")
        kd = ev.eval_matrix({"t": T[:, None], "t1": T[None, :]})
        out += np.einsum("jl,jl->j", W, kd)
    if h is not None and not (h.dt_is_zero or h.is_zero):
        ev = _TermEvaluator(h, True, "h")
        if "t" not in ev.vars_used:
            hd = ev.eval_matrix({"t1": T[:, None], "t2": T[None, :]})
            out += W @ np.einsum("ln,ln->l", W, hd)
        else:
            for j in range(1, g.m + 1):
                s = slice(0, j + 1)
                hd = ev.eval_matrix(
                    {"t": T[j], "t1": T[s, None], "t2": T[None, s]}
                )
                out[j] += W[j, s] @ np.einsum("ln,ln->l", W[s, s], hd)
    if not np.isfinite(out).all():
        j = int(np.argmin(np.isfinite(out)))
        raise HypothesisError(f"kernel t-derivative non-finite at node {j}")
    return out


def cor35_bound(inst: ProblemInstance) -> BoundResult:
    """Direct-kernel bound [a^q + q int (R + Q)]^(1/q).

    R(t) = k(t,t) + int_a^t h(t,t,r) dr and Q integrates the kernel
    t-derivatives (explicit expressions or central differences).
    """
    _require_theorem(inst, "cor35")
    g, q = inst.grid, inst.q
    RQ = GridFunction(g, _cor35_R(inst) + _cor35_Q(inst))
    with np.errstate(all="ignore"):
        bracket = np.power(inst.a_const, q) + q * cumulative_trapezoid(RQ).values
    return _q_form_result(g, 1.0, bracket, q, search_always=True)


_BOUND_DISPATCH = {
    "thm22": thm22_bound,
    "thm23": thm23_bound,
    "thm24": thm24_bound,
    "thm32": thm32_bound,
    "thm33": thm33_bound,
    "thm34": thm34_bound,
    "cor35": cor35_bound,
}


def compute_bound(inst: ProblemInstance) -> BoundResult:
    """Evaluate the instance's bound family; bykov wraps into a full-interval result."""
    if inst.theorem == "bykov":
        out = bykov_bound(
            inst.a_const, inst.b, inst.kernels.k, inst.kernels.h, inst.grid
        )
        return BoundResult(out, inst.grid.m, inst.grid.beta, HorizonKind.FULL)
    return _BOUND_DISPATCH[inst.theorem](inst)
