"""Config-driven command line: bound / verify / horizon / convergence / suite.

Scenario configs are plain text, ``key = value`` lines grouped under
``[problem]``, ``[grid]``, ``[oracle]`` and ``[run]`` headers with ``#``
comments.  Outputs are CSV with numbers at 17 significant digits and LF
line endings, so identical configs (and seeds) produce bit-identical
files.  Exit codes: 0 success / verification PASS, 1 verification FAIL,
2 configuration or hypothesis error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass

from .bounds import HypothesisError, ProblemInstance, THEOREMS, compute_bound
from .expr import Expr, ExprError, parse
from .grid import Grid, GridError, sample
from .kernels import Kernel, KernelError, KernelSet
from .oracle import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SUITE_FAMILIES,
    dominance_case,
    picard_extremal,
    verify_dominance,
)

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "main", "console_main"]

_PAIR_THEOREMS = ("bykov", "thm22", "thm23", "thm32", "thm33", "cor35")
_ITERATED_THEOREMS = ("thm24", "thm34")

_PROBLEM_KEYS = {
    "theorem", "p", "alpha", "beta", "a", "a_expr", "b_expr", "sigma_expr",
    "k_expr", "k_dt_expr", "h_expr", "h_dt_expr",
}
for _i in range(1, 5):
    _PROBLEM_KEYS.add(f"k{_i}_expr")
    _PROBLEM_KEYS.add(f"k{_i}_dt_expr")

_KNOWN_KEYS = {
    "problem": _PROBLEM_KEYS,
    "grid": {"m"},
    "oracle": {"tol", "max_iter"},
    "run": {"seed", "cases"},
}

DEFAULT_SUITE_M = 256
DEFAULT_SUITE_CASES = 100
DEFAULT_SUITE_SEED = 42

# Verdict gate for `verify`: the Picard extremal and the bound are both
# trapezoid discretizations, so they may disagree at O(dt^2) even when
# the continuum certificate is tight (bound == extremal).  1e-3 relative
# absorbs that noise at desk-scale grids; the raw strict-dominance
# violation is still printed in the summary.
VERIFY_RTOL = 1e-3

# Richardson comparisons stop 10% short of the shared horizon: next to a
# blow-up the bound is steep enough that node-level differences between
# levels are dominated by the pole, not by quadrature order.
HORIZON_GUARD = 0.9


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _parse_sections(text: str) -> dict:
    data = {name: {} for name in _KNOWN_KEYS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", lineno)
            name = line[1:-1].strip()
            if name not in _KNOWN_KEYS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            section = name
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _KNOWN_KEYS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in data[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        data[section][key] = (value, lineno)
    return data


def _take_float(entries: dict, key: str):
    if key not in entries:
        return None
    value, lineno = entries[key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", lineno) from None


def _take_int(entries: dict, key: str):
    if key not in entries:
        return None
    value, lineno = entries[key]
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", lineno) from None


def _take_expr(entries: dict, key: str, variables) -> Expr | None:
    if key not in entries:
        return None
    value, lineno = entries[key]
    try:
        return parse(value, variables)
    except ExprError as err:
        raise ConfigError(f"{key}: {err}", lineno) from None


def _take_kernel(entries: dict, arity: int, key: str, dt_key: str) -> Kernel | None:
    if dt_key in entries and key not in entries:
        raise ConfigError(f"{dt_key} given without {key}", entries[dt_key][1])
    if key not in entries:
        return None
    body, lineno = entries[key]
    dt = entries[dt_key][0] if dt_key in entries else None
    try:
        return Kernel(arity, body, dt_body=dt)
    except (ExprError, KernelError) as err:
        raise ConfigError(f"{key}: {err}", lineno) from None


@dataclass(eq=False)
class ScenarioConfig:
    """Parsed scenario: expressions are parsed, data is sampled lazily."""

    theorem: str
    p: float | None = None
    alpha: float | None = None
    beta: float | None = None
    a_const: float | None = None
    a_expr: Expr | None = None
    b_expr: Expr | None = None
    sigma_expr: Expr | None = None
    pair_k: Kernel | None = None
    pair_h: Kernel | None = None
    iterated: tuple = ()
    m: int | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int | None = None
    cases: int | None = None

    def build_instance(self) -> ProblemInstance:
        for name in ("alpha", "beta"):
            if getattr(self, name) is None:
                raise ConfigError(f"[problem] {name} is required")
        if self.m is None:
            raise ConfigError("[grid] m is required")
        p = self.p
        if p is None:
            if self.theorem != "bykov":
                raise ConfigError("[problem] p is required")
            p = 1.0
        g = Grid(self.alpha, self.beta, self.m)
        kernels = None
        if self.theorem in _ITERATED_THEOREMS:
            kernels = KernelSet.iterated(self.iterated)
        elif self.pair_k is not None or self.pair_h is not None:
            kernels = KernelSet.pair(self.pair_k, self.pair_h)
        return ProblemInstance(
            self.theorem,
            p,
            g,
            a_const=self.a_const,
            a_fn=sample(self.a_expr, g) if self.a_expr is not None else None,
            b=sample(self.b_expr, g) if self.b_expr is not None else None,
            sigma=sample(self.sigma_expr, g) if self.sigma_expr is not None else None,
            kernels=kernels,
        )


def load_config(path: str) -> ScenarioConfig:
    """Parse and cross-validate a scenario file (expressions included)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = _parse_sections(fh.read())
    problem = data["problem"]
    if "theorem" not in problem:
        raise ConfigError("[problem] theorem is required")
    theorem, lineno = problem["theorem"]
    if theorem not in THEOREMS:
        raise ConfigError(
            f"unknown theorem {theorem!r}; expected one of {', '.join(THEOREMS)}",
            lineno,
        )

    if "a" in problem and "a_expr" in problem:
        raise ConfigError(
            "give exactly one of 'a' (constant) or 'a_expr' (function), not both",
            problem["a_expr"][1],
        )

    iterated_present = [i for i in range(1, 5) if f"k{i}_expr" in problem]
    if theorem in _ITERATED_THEOREMS:
        for key in ("k_expr", "h_expr", "sigma_expr"):
            if key in problem:
                raise ConfigError(
                    f"{key} does not apply to {theorem}; use k1_expr..kn_expr",
                    problem[key][1],
                )
        if not iterated_present:
            raise ConfigError(f"{theorem} requires k1_expr (and optionally k2..kn)")
        n = max(iterated_present)
        missing = [i for i in range(1, n + 1) if i not in iterated_present]
        if missing:
            raise ConfigError(
                f"iterated kernels must be contiguous from k1; missing k{missing[0]}_expr"
            )
    else:
        if iterated_present:
            key = f"k{iterated_present[0]}_expr"
            raise ConfigError(
                f"{key} does not apply to {theorem}; use k_expr/h_expr",
                problem[key][1],
            )
        if theorem == "thm23":
            for key in ("h_expr", "h_dt_expr"):
                if key in problem:
                    raise ConfigError(
                        "thm23 has no triple-integral kernel h", problem[key][1]
                    )
    if theorem != "thm23" and "sigma_expr" in problem:
        raise ConfigError(
            f"sigma_expr applies only to thm23, not {theorem}",
            problem["sigma_expr"][1],
        )
    if theorem == "cor35" and "b_expr" in problem:
        raise ConfigError("cor35 has no coefficient b(t)", problem["b_expr"][1])

    tol = _take_float(data["oracle"], "tol")
    max_iter = _take_int(data["oracle"], "max_iter")
    cfg = ScenarioConfig(
        theorem=theorem,
        p=_take_float(problem, "p"),
        alpha=_take_float(problem, "alpha"),
        beta=_take_float(problem, "beta"),
        a_const=_take_float(problem, "a"),
        a_expr=_take_expr(problem, "a_expr", {"t"}),
        b_expr=_take_expr(problem, "b_expr", {"t"}),
        sigma_expr=_take_expr(problem, "sigma_expr", {"t"}),
        pair_k=_take_kernel(problem, 1, "k_expr", "k_dt_expr"),
        pair_h=_take_kernel(problem, 2, "h_expr", "h_dt_expr"),
        iterated=tuple(
            _take_kernel(problem, i, f"k{i}_expr", f"k{i}_dt_expr")
            for i in iterated_present
        ),
        m=_take_int(data["grid"], "m"),
        tol=DEFAULT_TOL if tol is None else tol,
        max_iter=DEFAULT_MAX_ITER if max_iter is None else max_iter,
        seed=_take_int(data["run"], "seed"),
        cases=_take_int(data["run"], "cases"),
    )
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    return cfg


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_bound(cfg: ScenarioConfig, out_path: str | None) -> int:
    inst = cfg.build_instance()
    br = compute_bound(inst)
    T = inst.grid.nodes
    lines = ["t,bound"]
    for j in range(br.horizon_node + 1):
        lines.append(f"{_fmt(T[j])},{_fmt(br.bound.values[j])}")
    _emit("\n".join(lines) + "\n", out_path)
    return 0


def cmd_verify(cfg: ScenarioConfig, out_path: str | None) -> int:
    inst = cfg.build_instance()
    br = compute_bound(inst)
    outcome = picard_extremal(inst, tol=cfg.tol, max_iter=cfg.max_iter)
    report = verify_dominance(outcome.u, br, outcome.conv_node)
    n = report.compare_node
    bvals = br.bound.values[: n + 1]
    uvals = outcome.u.values[: n + 1]
    passed = bool(((uvals - bvals) <= VERIFY_RTOL * (1.0 + bvals)).all())
    T = inst.grid.nodes
    lines = ["t,bound,extremal,margin"]
    for j in range(n + 1):
        b = br.bound.values[j]
        u = outcome.u.values[j]
        lines.append(f"{_fmt(T[j])},{_fmt(b)},{_fmt(u)},{_fmt(b - u)}")
    _emit("\n".join(lines) + "\n", out_path)
    verdict = "PASS" if passed else "FAIL"
    print(
        f"{verdict} max_violation={_fmt(report.max_violation)} "
        f"min_margin={_fmt(report.min_margin)} compare_node={n} "
        f"cut={report.cut} picard={outcome.status.value} "
        f"iterations={outcome.iterations}",
        file=sys.stderr,
    )
    return 0 if passed else 1


def cmd_horizon(cfg: ScenarioConfig, out_path: str | None) -> int:
    inst = cfg.build_instance()
    br = compute_bound(inst)
    text = (
        "horizon_time,horizon_node,kind\n"
        f"{_fmt(br.horizon_time)},{br.horizon_node},{br.horizon_kind.value}\n"
    )
    _emit(text, out_path)
    return 0


def cmd_convergence(cfg: ScenarioConfig, levels: int, out_path: str | None) -> int:
    if levels < 2:
        raise ConfigError("convergence needs at least 2 levels")
    if cfg.m is None:
        raise ConfigError("[grid] m is required")
    results = []
    for i in range(levels):
        level_cfg = dataclasses.replace(cfg, m=cfg.m * 2**i)
        inst = level_cfg.build_instance()
        results.append(compute_bound(inst))
    alpha = cfg.alpha
    t_cut = min(r.horizon_time for r in results)
    if any(not r.full for r in results):
        t_cut = alpha + HORIZON_GUARD * (t_cut - alpha)
    diffs = []
    for i, (coarse, fine) in enumerate(zip(results, results[1:])):
        g = Grid(cfg.alpha, cfg.beta, cfg.m * 2**i)
        n = min(coarse.horizon_node, fine.horizon_node // 2)
        usable = [j for j in range(n + 1) if g.nodes[j] <= t_cut]
        d = max(
            abs(coarse.bound.values[j] - fine.bound.values[2 * j]) for j in usable
        )
        diffs.append(d)
    lines = ["m,max_diff,ratio"]
    for i, d in enumerate(diffs):
        ratio = _fmt(d / diffs[i + 1]) if i + 1 < len(diffs) and diffs[i + 1] else ""
        lines.append(f"{cfg.m * 2**i},{_fmt(d)},{ratio}")
    _emit("\n".join(lines) + "\n", out_path)
    return 0


def cmd_suite(
    cfg: ScenarioConfig,
    cases: int | None,
    seed: int | None,
    out_path: str | None,
) -> int:
    if cfg.theorem not in SUITE_FAMILIES:
        raise ConfigError(
            f"suite supports theorem in {SUITE_FAMILIES}, got {cfg.theorem!r}"
        )
    cases = cases if cases is not None else (cfg.cases or DEFAULT_SUITE_CASES)
    seed = seed if seed is not None else (cfg.seed or DEFAULT_SUITE_SEED)
    m = cfg.m if cfg.m is not None else DEFAULT_SUITE_M
    lines = ["seed,p,pass,max_violation,horizon_time"]
    n_failed = 0
    for i in range(cases):
        case = dominance_case(
            cfg.theorem, seed + i, m=m, tol=cfg.tol, max_iter=cfg.max_iter
        )
        n_failed += 0 if case.passed else 1
        lines.append(
            f"{case.seed},{_fmt(case.p)},{'PASS' if case.passed else 'FAIL'},"
            f"{_fmt(case.max_violation)},{_fmt(case.horizon_time)}"
        )
    _emit("\n".join(lines) + "\n", out_path)
    print(f"{cases - n_failed}/{cases} cases passed", file=sys.stderr)
    return 0 if n_failed == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gronwall",
        description="Certified Gronwall-type bounds for Volterra inequalities "
        "with power nonlinearity, verified against a Picard extremal oracle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("bound", "write the bound curve as CSV (t,bound)"),
        ("verify", "compare the bound against the Picard extremal solution"),
        ("horizon", "print the validity horizon"),
        ("convergence", "Richardson refinement study of the bound"),
        ("suite", "run the seeded random dominance suite"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario config path")
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        if name == "convergence":
            p.add_argument("--levels", type=int, default=3)
        if name == "suite":
            p.add_argument("--cases", type=int, default=None)
            p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "bound":
            return cmd_bound(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.out)
        if args.command == "horizon":
            return cmd_horizon(cfg, args.out)
        if args.command == "convergence":
            return cmd_convergence(cfg, args.levels, args.out)
        return cmd_suite(cfg, args.cases, args.seed, args.out)
    except (ConfigError, ExprError, KernelError, HypothesisError, GridError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())
