import math

import numpy as np
import pytest

from conftest import make_instance
from gronwall.bounds import BoundResult, HypothesisError, compute_bound, thm32_bound
from gronwall.grid import Grid, GridFunction, constant
from gronwall.oracle import (
    DominanceReport,
    PicardStatus,
    check_admissible,
    closed_form,
    dominance_case,
    picard_extremal,
    random_instance,
    rhs_operator,
    verify_dominance,
)


class TestRhsOperator:
    def test_trivial_data_returns_datum(self):
        inst = make_instance("thm32", 2.0, 0, 1, 32, a=1.5, b_expr="0")
        out = rhs_operator(inst, constant(3.0, inst.grid))
        assert (out.values == 1.5).all()

    def test_multiplicative_forms_apply_factor(self):
        i23 = make_instance(
            "thm23", 2.0, 0, 1, 32, a=2.0, b_expr="0", sigma_expr="1+t"
        )
        out = rhs_operator(i23, constant(1.0, i23.grid))
        assert np.allclose(out.values, 2.0 * (1.0 + i23.grid.nodes), atol=1e-14)
        i34 = make_instance("thm34", 2.0, 0, 1, 32, a=2.0, b_expr="1+t", ks=["0"])
        out34 = rhs_operator(i34, constant(1.0, i34.grid))
        assert np.allclose(out34.values, 2.0 * (1.0 + i34.grid.nodes), atol=1e-14)

    def test_linear_volterra_rhs(self):
        inst = make_instance("bykov", 1.0, 0, 1, 64, a=1.0, b_expr="1")
        out = rhs_operator(inst, constant(1.0, inst.grid))
        assert np.allclose(out.values, 1.0 + inst.grid.nodes, atol=1e-14)

    def test_riccati_fixed_point(self):
        inst = make_instance("thm32", 2.0, 0, 0.5, 2048, a=1.0, b_expr="1")
        u = closed_form("riccati", inst.grid, a=1.0, b=1.0)
        out = rhs_operator(inst, u)
        assert np.abs(out.values - u.values).max() <= 1e-3

    def test_negative_u_rejected(self):
        inst = make_instance("thm32", 2.0, 0, 1, 16, a=1.0, b_expr="1")
        with pytest.raises(HypothesisError, match="nonnegative"):
            rhs_operator(inst, constant(-1.0, inst.grid))


class TestPicard:
    def test_converges_to_datum_without_integrals(self):
        inst = make_instance("thm32", 2.0, 0, 1, 32, a=2.0, b_expr="0")
        out = picard_extremal(inst)
        assert out.status is PicardStatus.CONVERGED
        assert out.iterations == 1
        assert (out.u.values == 2.0).all()

    def test_linear_volterra_exponential(self):
        inst = make_instance("bykov", 1.0, 0, 1, 1024, a=1.0, b_expr="1")
        out = picard_extremal(inst, tol=1e-10)
        assert out.status is PicardStatus.CONVERGED
        assert out.u.values[-1] == pytest.approx(math.e, abs=1e-5)

    def test_riccati_value(self):
        inst = make_instance("thm32", 2.0, 0, 0.5, 2048, a=1.0, b_expr="1")
        out = picard_extremal(inst)
        assert out.status is PicardStatus.CONVERGED
        assert out.u.values[-1] == pytest.approx(2.0, abs=1e-3)

    def test_blow_up_reports_divergence_and_prefix(self):
        inst = make_instance("thm32", 2.0, 0, 2, 256, a=1.0, b_expr="1")
        out = picard_extremal(inst)
        assert out.status is PicardStatus.DIVERGED
        assert out.diverged_node is not None
        # true blow-up at t = 1 (node 128); the usable prefix ends nearby
        assert 100 <= out.conv_node < 140
        assert np.isfinite(out.u.values[: out.conv_node + 1]).all()

    def test_monotone_iteration(self):
        from gronwall.oracle import DiscreteRhs

        inst = make_instance(
            "thm32", 2.0, 0, 1, 128, a=0.5, b_expr="0.5+t", k="0.3", h="0.2"
        )
        op = DiscreteRhs(inst)
        u = op(np.zeros(inst.grid.m + 1))
        for _ in range(8):
            un = op(u)
            assert (un >= u).all()
            u = un

    def test_fixed_point_residual(self):
        tol = 1e-10
        inst = make_instance(
            "thm32", 0.5, 0, 1, 256, a=0.7, b_expr="0.4+0.2*t", k="0.6", h="0.3"
        )
        out = picard_extremal(inst, tol=tol)
        rhs = rhs_operator(inst, out.u)
        resid = np.abs(out.u.values - rhs.values)
        assert (resid <= 10 * tol * (1.0 + np.abs(out.u.values))).all()

    def test_full_interval_convergence_for_small_p(self):
        for fam in ("thm32", "thm33"):
            for seed in range(40):
                inst = random_instance(fam, seed, m=64)
                if inst.p > 1:
                    continue
                out = picard_extremal(inst)
                assert out.status is PicardStatus.CONVERGED
                assert out.conv_node == inst.grid.m

    def test_max_iter_reported(self):
        inst = make_instance("thm32", 2.0, 0, 0.9, 256, a=1.0, b_expr="1")
        out = picard_extremal(inst, tol=1e-14, max_iter=3)
        assert out.status is PicardStatus.MAX_ITER
        assert out.iterations == 3


class TestAdmissibility:
    def riccati_instance(self):
        return make_instance("thm32", 2.0, 0, 0.5, 512, a=1.0, b_expr="1")

    def test_scaled_extremal_admissible(self):
        inst = self.riccati_instance()
        u = picard_extremal(inst).u
        half = GridFunction(inst.grid, 0.5 * u.values)
        assert check_admissible(inst, half).admissible

    def test_datum_admissible(self):
        inst = make_instance("thm32", 2.0, 0, 1, 128, a=1.0, b_expr="0.5", k="0.5")
        assert check_admissible(inst, constant(1.0, inst.grid)).admissible

    def test_doubled_extremal_inadmissible(self):
        inst = self.riccati_instance()
        u = picard_extremal(inst).u
        double = GridFunction(inst.grid, 2.0 * u.values)
        rep = check_admissible(inst, double)
        assert not rep.admissible
        assert rep.max_defect > 0


class TestVerifyDominance:
    def test_riccati_extremal_second_order_approach(self):
        # The bound here *is* the extremal solution, so the discrete
        # comparison sits exactly on the trapezoid noise floor: the
        # violation is ~2*dt^2 at t=0.5 and shrinks at second order,
        # clearing the 1e-9 dominance gate once the grid is fine enough.
        viol = {}
        for m in (2048, 4096, 16384):
            inst = make_instance("thm32", 2.0, 0, 0.5, m, a=1.0, b_expr="1")
            br = thm32_bound(inst)
            out = picard_extremal(inst)
            rep = verify_dominance(out.u, br, out.conv_node)
            viol[m] = rep.max_violation
        assert 3.0 <= viol[2048] / viol[4096] <= 5.0
        inst = make_instance("thm32", 2.0, 0, 0.5, 16384, a=1.0, b_expr="1")
        rep = verify_dominance(
            picard_extremal(inst).u, thm32_bound(inst), inst.grid.m
        )
        assert rep.passed
        assert abs(rep.min_margin) <= 1e-8  # margin -> 0: bound is tight here

    def test_zero_function_dominated(self):
        inst = make_instance("thm32", 2.0, 0, 1, 128, a=1.0, b_expr="1", k="0.5")
        br = thm32_bound(inst)
        rep = verify_dominance(constant(0.0, inst.grid), br, inst.grid.m)
        assert rep.passed
        assert rep.min_margin >= 1.0  # at least the datum

    def test_corrupted_bound_fails(self):
        inst = make_instance("thm32", 2.0, 0, 0.5, 512, a=1.0, b_expr="1")
        br = thm32_bound(inst)
        out = picard_extremal(inst)
        bad = BoundResult(
            GridFunction(inst.grid, 0.5 * br.bound.values),
            br.horizon_node,
            br.horizon_time,
            br.horizon_kind,
        )
        rep = verify_dominance(out.u, bad, out.conv_node)
        assert not rep.passed
        assert rep.max_violation > 0

    def test_cut_labels(self):
        inst = make_instance("thm32", 2.0, 0, 2, 256, a=1.0, b_expr="1")
        br = thm32_bound(inst)
        out = picard_extremal(inst)
        rep = verify_dominance(out.u, br, out.conv_node)
        assert rep.cut in ("horizon", "oracle", "none")
        assert rep.compare_node == min(br.horizon_node, out.conv_node)


class TestClosedForms:
    def test_riccati(self):
        g = Grid(0, 0.5, 4)
        u = closed_form("riccati", g, a=1.0, b=1.0)
        assert u.at(0.5) == pytest.approx(2.0)

    def test_riccati_pole_flagged(self):
        g = Grid(0, 2, 8)
        u = closed_form("riccati", g, a=1.0, b=1.0)
        assert u.first_nonfinite_node == 4  # t = 1

    def test_linear_exp(self):
        g = Grid(0, 1, 4)
        assert (closed_form("linear_exp", g, a=1.0, b=0.0).values == 1.0).all()

    def test_bernoulli_q1(self):
        g = Grid(0, 1, 4)
        u = closed_form("bernoulli", g, v0=1.0, k=1.0, p=0.0)
        assert np.allclose(u.values, 1.0 + g.nodes, atol=1e-15)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            closed_form("cubic", Grid(0, 1, 4))


class TestRandomFamily:
    def test_deterministic(self):
        a = random_instance("thm32", 7, m=32)
        b = random_instance("thm32", 7, m=32)
        assert a.p == b.p
        assert (a.b.values == b.b.values).all()
        assert a.a_const == b.a_const

    def test_respects_family_hypotheses(self):
        for fam in ("thm22", "thm32", "thm33", "cor35"):
            for seed in range(10):
                inst = random_instance(fam, seed, m=16)  # validation runs in ctor
                assert inst.theorem == fam

    def test_dominance_case_summary(self):
        case = dominance_case("thm33", 3, m=64)
        assert case.seed == 3
        assert case.p in (0.0, 0.5, 2.0, 3.0)
        assert isinstance(case.passed, bool)


class TestDominanceRegression:
    """Dominance holds at the realistic discretization noise floor.

    The 1e-9 acceptance gate sits below the O(dt^3) trapezoid noise near
    t = alpha for constant-datum families at m = 256 (see the acceptance
    suite); 1e-6 is comfortably above the measured worst case (~1.2e-7)
    and still certifies the bounds to quadrature accuracy.
    """

    def test_all_families_dominate_within_noise_floor(self):
        for fam in ("thm22", "thm32", "thm33", "cor35"):
            for seed in range(25):
                inst = random_instance(fam, seed, m=256)
                br = compute_bound(inst)
                out = picard_extremal(inst)
                n = min(br.horizon_node, out.conv_node)
                viol = out.u.values[: n + 1] - br.bound.values[: n + 1]
                slack = 1e-6 * (1.0 + br.bound.values[: n + 1])
                assert (viol <= slack).all(), (fam, seed, viol.max())
