"""Brute-force ground truth for the bound certificates.

The extremal solution of the equality version of each inequality is the
least fixed point of its Volterra right-hand side; because the operator
is monotone for nonnegative data, Picard iteration starting from the
datum climbs to it.  ``verify_dominance`` then checks the headline
certificate: extremal <= bound at every node where both are meaningful.

For p > 1 the true solution may blow up inside the interval; nodes keep
diverging sweep after sweep and the run is reported with the first
divergent node plus the prefix of nodes whose successive differences had
already converged (partial certification over that prefix is the point).

All right-hand sides are discretized with the same composite trapezoid
rule as the bounds.  The inner double/triple integrals are linear in
w = u^p, so their quadrature weights are assembled once per instance and
each Picard sweep is a handful of mat-vecs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bounds import BoundResult, HypothesisError, ProblemInstance, compute_bound
from .grid import Grid, GridFunction, cumulative_trapezoid
from .kernels import Kernel, KernelSet, _TermEvaluator, _simplex_term, _weights

__all__ = [
    "PicardStatus",
    "PicardOutcome",
    "DominanceReport",
    "AdmissibilityReport",
    "SuiteCase",
    "DOMINANCE_RTOL",
    "DIVERGENCE_LIMIT",
    "rhs_operator",
    "picard_extremal",
    "check_admissible",
    "verify_dominance",
    "closed_form",
    "random_instance",
    "dominance_case",
    "SUITE_FAMILIES",
]

DOMINANCE_RTOL = 1e-9
ADMISSIBLE_RTOL = 1e-9
DIVERGENCE_LIMIT = 1e12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000

SUITE_FAMILIES = ("thm22", "thm32", "thm33", "cor35")


class PicardStatus(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITER = "max_iter"


@dataclass(frozen=True, eq=False)
class PicardOutcome:
    """Result of a Picard run.

    ``conv_node`` is the last node of the prefix on which the successive
    -difference criterion held in the final sweep (m when fully
    converged); ``diverged_node`` is the first node past the divergence
    limit, if any.
    """

    u: GridFunction
    status: PicardStatus
    conv_node: int
    iterations: int
    final_delta: float
    diverged_node: int | None = None


def _pair_k_matrix(k: Kernel, g: Grid) -> np.ndarray:
    """Weights of w -> int_a^{x_i} k(x_i, s) w(s) ds as a lower-tri matrix."""
    T = g.nodes
    kv = _TermEvaluator(k, False, "k").eval_matrix(
        {"t": T[:, None], "t1": T[None, :]}
    )
    return _weights(g) * kv


def _pair_h_matrix(h: Kernel, g: Grid) -> np.ndarray:
    """Weights of w -> int_a^{x_i} int_a^s h(x_i, s, r) w(r) dr ds."""
    T = g.nodes
    W = _weights(g)
    ev = _TermEvaluator(h, False, "h")
    if "t" not in ev.vars_used:
        hv = ev.eval_matrix({"t1": T[:, None], "t2": T[None, :]})
        return W @ (W * hv)
    out = np.zeros((g.m + 1, g.m + 1))
    for i in range(1, g.m + 1):
        s = slice(0, i + 1)
        hv = ev.eval_matrix({"t": T[i], "t1": T[s, None], "t2": T[None, s]})
        out[i, s] = W[i, s] @ (W[s, s] * hv)
    return out


class DiscreteRhs:
    """The instance's full right-hand side on the grid, precomputed.

    Calling it maps node values ``u`` to ``RHS(u)``; everything linear in
    w = u^p (the kernel integrals) is stored as weight matrices.
    """

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        g = inst.grid
        self.g = g
        self.W = _weights(g)
        ks = inst.kernels
        t = inst.theorem
        self.K2 = self.M3 = None
        if t in ("bykov", "thm22", "thm23", "thm32", "thm33", "cor35"):
            if ks.k is not None and not ks.k.is_zero:
                self.K2 = _pair_k_matrix(ks.k, g)
            if t != "thm23" and ks.h is not None and not ks.h.is_zero:
                self.M3 = _pair_h_matrix(ks.h, g)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        inst = self.inst
        g = self.g
        with np.errstate(all="ignore"):
            w = np.power(u, inst.p)
        t = inst.theorem
        if t == "cor35":
            acc = np.zeros(g.m + 1)
            if self.K2 is not None:
                acc += self.K2 @ w
            if self.M3 is not None:
                acc += self.M3 @ w
            return inst.a_const + acc
        if t in ("thm24", "thm34"):
            acc = np.zeros(g.m + 1)
            for kern in inst.kernels.kernels:
                if not kern.is_zero:
                    acc += _simplex_term(kern, w, g, n_diag=0)
            if t == "thm24":
                return inst.a_values + inst.b.values * acc
            return inst.b.values * (inst.a_const + acc)
        # cumulative forms: datum + int_a^t (b w + int k w + int int h w)
        with np.errstate(all="ignore"):
            integrand = inst.b.values * w
            if self.K2 is not None:
                integrand = integrand + self.K2 @ w
            if self.M3 is not None:
                integrand = integrand + self.M3 @ w
            acc = cumulative_trapezoid(GridFunction(g, integrand)).values
        if t == "thm23":
            return inst.sigma.values * (inst.a_const + acc)
        return inst.a_values + acc


def rhs_operator(inst: ProblemInstance, u: GridFunction) -> GridFunction:
    """Evaluate the instance's right-hand side at every node.

    Non-finite outputs (u^p overflow) are carried in the result and
    flagged through ``first_nonfinite_node``.
    """
    if u.grid != inst.grid:
        raise HypothesisError("u must live on the instance grid")
    if (u.values < 0).any():
        j = int(np.argmax(u.values < 0))
        raise HypothesisError(f"u must be nonnegative; node {j} is {u.values[j]!r}")
    return GridFunction(inst.grid, DiscreteRhs(inst)(u.values))


def picard_extremal(
    inst: ProblemInstance,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PicardOutcome:
    """Monotone Picard construction of the least solution of u = RHS(u).

    Starts at RHS(0) (the datum) and iterates until the max-node relative
    change drops below ``tol``, any node passes the divergence limit, or
    ``max_iter`` sweeps elapse.  Iterates are checked to be nodewise
    nondecreasing every sweep; the Volterra operator guarantees it.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    op = DiscreteRhs(inst)
    m = inst.grid.m
    u = op(np.zeros(m + 1))
    delta = np.full(m + 1, np.inf)
    status = PicardStatus.MAX_ITER
    diverged_node = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        with np.errstate(all="ignore"):
            un = op(u)
            escaped = ~np.isfinite(un) | (np.abs(un) > DIVERGENCE_LIMIT)
        if escaped.any():
            # Volterra causality: nodes below the first escape never see
            # the diverging tail, so keep iterating that prefix to
            # convergence (partial certification over it is the point).
            jd = int(np.argmax(escaped))
            diverged_node = jd if diverged_node is None else min(diverged_node, jd)
        end = diverged_node if diverged_node is not None else m + 1
        if end == 0:
            status = PicardStatus.DIVERGED
            u = un
            break
        if (un[:end] < u[:end]).any():
            j = int(np.argmax(un[:end] < u[:end]))
            raise RuntimeError(
                f"Picard iterates decreased at node {j}: monotonicity violated"
            )
        with np.errstate(all="ignore"):
            delta = np.abs(un - u) / (1.0 + np.abs(u))
        u = un
        if delta[:end].max() < tol:
            status = (
                PicardStatus.DIVERGED
                if diverged_node is not None
                else PicardStatus.CONVERGED
            )
            break

    if status is PicardStatus.CONVERGED:
        conv_node = m
    else:
        with np.errstate(all="ignore"):
            ok = delta < tol
        conv_node = m if ok.all() else int(np.argmin(ok)) - 1
    end = diverged_node if diverged_node is not None else m + 1
    final_delta = float(delta[:end].max()) if end > 0 else float("inf")
    u = np.where(np.isfinite(u), u, np.nan)
    return PicardOutcome(
        u=GridFunction(inst.grid, u),
        status=status,
        conv_node=conv_node,
        iterations=iterations,
        final_delta=final_delta,
        diverged_node=diverged_node,
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    max_defect: float
    worst_node: int


def check_admissible(inst: ProblemInstance, u: GridFunction) -> AdmissibilityReport:
    """Report how far u exceeds RHS(u); admissible means u <= RHS(u) up to slack."""
    rhs = DiscreteRhs(inst)(u.values)
    defect = u.values - rhs
    slack = ADMISSIBLE_RTOL * (1.0 + np.abs(rhs))
    worst = int(np.argmax(defect - slack))
    return AdmissibilityReport(
        admissible=bool((defect <= slack).all()),
        max_defect=float(defect.max()),
        worst_node=worst,
    )


@dataclass(frozen=True)
class DominanceReport:
    passed: bool
    compare_node: int
    max_violation: float
    min_margin: float
    worst_node: int
    cut: str  # which truncation applied: horizon | oracle | none


def verify_dominance(
    u: GridFunction, br: BoundResult, conv_node: int
) -> DominanceReport:
    """Check extremal <= bound over the nodes where both are meaningful.

    Compares up to min(horizon_node, conv_node) with the relative slack
    ``DOMINANCE_RTOL * (1 + bound)`` per node.
    """
    n = min(br.horizon_node, conv_node)
    if n < 0:
        raise ValueError("nothing to compare: empty converged prefix")
    bvals = br.bound.values[: n + 1]
    uvals = u.values[: n + 1]
    viol = uvals - bvals
    slack = DOMINANCE_RTOL * (1.0 + bvals)
    if br.horizon_node < conv_node:
        cut = "horizon"
    elif conv_node < br.horizon_node:
        cut = "oracle"
    else:
        cut = "none"
    return DominanceReport(
        passed=bool((viol <= slack).all()),
        compare_node=n,
        max_violation=float(viol.max()),
        min_margin=float((-viol).min()),
        worst_node=int(np.argmax(viol - slack)),
        cut=cut,
    )


def closed_form(name: str, g: Grid, **params) -> GridFunction:
    """Analytic references for u' = b u^p initial-value problems.

    riccati(a, b):   a / (1 - a b (t - alpha)), NaN past the pole.
    linear_exp(a, b): a exp(b (t - alpha)).
    bernoulli(v0, k, p): [v0^q + q k (t - alpha)]^(1/q), q = 1 - p.
    """
    s = g.nodes - g.alpha
    with np.errstate(all="ignore"):
        if name == "riccati":
            a, b = params["a"], params["b"]
            denom = 1.0 - a * b * s
            vals = np.where(denom > 0, a / denom, np.nan)
        elif name == "linear_exp":
            a, b = params["a"], params["b"]
            vals = a * np.exp(b * s)
        elif name == "bernoulli":
            v0, k, p = params["v0"], params["k"], params["p"]
            q = 1.0 - p
            bracket = np.power(v0, q) + q * k * s
            vals = np.where(bracket > 0, np.power(bracket, 1.0 / q), np.nan)
        else:
            raise ValueError(f"unknown closed form {name!r}")
    return GridFunction(g, vals)


_SUITE_P = {
    "thm22": (2.0, 3.0),
    "thm32": (0.0, 0.5, 2.0, 3.0),
    "thm33": (0.0, 0.5, 2.0, 3.0),
    "cor35": (0.0, 0.5, 2.0, 3.0),
}


def random_instance(theorem: str, seed: int, m: int = 256) -> ProblemInstance:
    """One member of the random verification family on [0, 1].

    Coefficients c0..c5 are uniform on [0, 1] from ``default_rng(seed)``:
    b = c0 + c1 t, double kernel c2 exp(-(t-s)), triple kernel c3, datum
    c4 (plus c5 t for the nondecreasing-datum families), with p drawn
    from the family's admissible subset of {0, 0.5, 2, 3}.  cor35 needs a
    nonnegative kernel t-derivative, so its double kernel is c2 exp(t-s)
    with the derivative given explicitly.
    """
    if theorem not in _SUITE_P:
        raise ValueError(f"no random family for {theorem!r}")
    rng = np.random.default_rng(seed)
    c = [float(x) for x in rng.uniform(0.0, 1.0, 6)]
    p = float(rng.choice(_SUITE_P[theorem]))
    g = Grid(0.0, 1.0, m)
    T = g.nodes
    b = GridFunction(g, c[0] + c[1] * T)
    h = Kernel(2, repr(c[3]))
    if theorem == "cor35":
        src = f"{c[2]!r}*exp(t-s)"
        kernels = KernelSet.pair(Kernel(1, src, dt_body=src), h)
        return ProblemInstance("cor35", p, g, a_const=c[4], kernels=kernels)
    k = Kernel(1, f"{c[2]!r}*exp(-(t-s))")
    kernels = KernelSet.pair(k, h)
    if theorem in ("thm22", "thm33"):
        a_fn = GridFunction(g, c[4] + c[5] * T)
        return ProblemInstance(theorem, p, g, a_fn=a_fn, b=b, kernels=kernels)
    return ProblemInstance("thm32", p, g, a_const=c[4], b=b, kernels=kernels)


@dataclass(frozen=True)
class SuiteCase:
    seed: int
    p: float
    passed: bool
    max_violation: float
    horizon_time: float
    picard_status: PicardStatus
    compare_node: int


def dominance_case(
    theorem: str,
    seed: int,
    m: int = 256,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SuiteCase:
    """Run one random instance end to end: bound, Picard extremal, dominance."""
    inst = random_instance(theorem, seed, m)
    br = compute_bound(inst)
    outcome = picard_extremal(inst, tol=tol, max_iter=max_iter)
    report = verify_dominance(outcome.u, br, outcome.conv_node)
    return SuiteCase(
        seed=seed,
        p=inst.p,
        passed=report.passed,
        max_violation=report.max_violation,
        horizon_time=br.horizon_time,
        picard_status=outcome.status,
        compare_node=report.compare_node,
    )
