import math

import numpy as np
import pytest

from sharpstep.problems import ProblemInstance, gen_phase_retrieval, PhaseRetrievalSpec, make_abs, make_l1, make_quad1d
from sharpstep.solver import (
    Constant,
    Geometric,
    OracleError,
    Polyak,
    SolveConfig,
    ZeroSubgradientError,
    constant_step,
    constant_step_bound,
    constant_step_threshold,
    geometric_params,
    geometric_stepsize,
    polyak_step,
    solve,
)

IDENT = lambda y: y


class TestStepOps:
    def test_polyak_one_step_exact_on_abs(self):
        out = polyak_step(np.array([0.8]), 0.8, 0.0, np.array([1.0]), IDENT)
        assert out[0] == pytest.approx(0.0, abs=1e-15)

    def test_polyak_on_quadratic_kink(self):
        out = polyak_step(np.array([1.2]), 0.44, 0.0, np.array([2.4]), IDENT)
        assert out[0] == pytest.approx(1.2 - 0.44 / 2.4, abs=1e-12)

    def test_polyak_zero_gap_keeps_point(self):
        out = polyak_step(np.array([2.0]), 5.0, 5.0, np.array([3.0]), IDENT)
        assert out[0] == 2.0

    def test_polyak_negative_gap_clamped(self):
        out = polyak_step(np.array([2.0]), 4.0, 5.0, np.array([3.0]), IDENT)
        assert out[0] == 2.0

    def test_polyak_zero_subgradient_rejected(self):
        with pytest.raises(ZeroSubgradientError):
            polyak_step(np.array([1.0]), 1.0, 0.0, np.array([0.0]), IDENT)

    def test_constant_step_on_abs(self):
        out = constant_step(np.array([1.0]), np.array([1.0]), 0.3, IDENT)
        assert out[0] == pytest.approx(0.7)

    def test_constant_step_displacement_is_alpha(self):
        x = np.array([0.3, -0.8, 1.1])
        zeta = np.array([2.0, -1.0, 0.5])
        out = constant_step(x, zeta, 0.25, IDENT)
        assert np.linalg.norm(out - x) == pytest.approx(0.25, rel=1e-12)

    def test_constant_step_projection_clamp(self):
        clamp = lambda y: np.maximum(y, 0.0)
        out = constant_step(np.array([0.1]), np.array([1.0]), 0.3, clamp)
        assert out[0] == 0.0

    def test_constant_step_zero_subgradient_rejected(self):
        with pytest.raises(ZeroSubgradientError):
            constant_step(np.array([1.0]), np.array([0.0]), 0.3, IDENT)


class TestGeometricStepsize:
    def test_at_zero(self):
        assert geometric_stepsize(0, 0.5, 0.9) == 0.5

    def test_at_two(self):
        assert geometric_stepsize(2, 0.5, 0.9) == pytest.approx(0.405)

    def test_monotone(self):
        vals = [geometric_stepsize(k, 0.5, 0.9) for k in range(30)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            geometric_stepsize(-1, 0.5, 0.9)
        with pytest.raises(ValueError):
            geometric_stepsize(0, 0.5, 1.0)


class TestGeometricParams:
    def test_l1_values(self):
        lam, q = geometric_params(0.5, 1.0, 1.0, math.sqrt(2.0))
        assert lam == pytest.approx(0.353553, abs=1e-6)
        assert q == pytest.approx(0.866025, abs=1e-6)

    def test_hypothesis_violation(self):
        # tau = 1 exceeds sqrt(1/1.5)
        with pytest.raises(ValueError, match="tau"):
            geometric_params(0.5, 1.0, 1.0, 1.0)

    def test_rate_degrades_as_gamma_grows(self):
        _, q_low = geometric_params(0.5, 1.0, 2.0, 3.0)
        _, q_high = geometric_params(0.99, 1.0, 2.0, 3.0)
        assert q_low < q_high < 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            geometric_params(1.0, 1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            geometric_params(0.5, -1.0, 1.0, 2.0)


class TestConstantStepConstants:
    def test_threshold_value(self):
        # direct formula evaluation: (0.3 / (1 + sqrt(0.4)))^2
        got = constant_step_threshold(0.1, 1.0, 2.0, 3.0)
        assert got == pytest.approx((0.3 / (1.0 + math.sqrt(0.4))) ** 2, rel=1e-12)

    def test_threshold_vanishes_with_alpha(self):
        assert constant_step_threshold(1e-9, 1.0, 2.0, 3.0) < 1e-15

    def test_threshold_is_fixed_point(self):
        for alpha, mu, rho, L in [(0.1, 1.0, 2.0, 3.0), (0.05, 1.0, 1.0, 1.0),
                                  (0.02, 0.8, 1.5, 2.0)]:
            e = constant_step_threshold(alpha, mu, rho, L)
            tau = mu / L
            resid = e - ((1.0 + alpha * rho / L) * e
                         - 2.0 * alpha * tau * math.sqrt(e) + alpha * alpha)
            assert abs(resid) <= 1e-12

    def test_threshold_increasing_in_alpha(self):
        vals = [constant_step_threshold(a, 1.0, 2.0, 3.0)
                for a in (0.01, 0.05, 0.1, 0.15)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_threshold_range_check(self):
        with pytest.raises(ValueError):
            constant_step_threshold(1.0, 1.0, 2.0, 3.0)  # above tau*mu/rho = 1/6

    def test_bound_at_zero_iterations(self):
        bound, D, q = constant_step_bound(0.2, 0.1, 0.9, 1.0, 2.0, 3.0, 0)
        estar = constant_step_threshold(0.1, 1.0, 2.0, 3.0)
        assert bound == pytest.approx(0.2 - estar, rel=1e-9)
        assert bound == pytest.approx(0.166227, abs=1e-5)
        assert 0.0 < q < 1.0

    def test_bound_limit_is_twice_alpha_squared(self):
        bound, _, _ = constant_step_bound(0.2, 0.1, 0.9, 1.0, 2.0, 3.0, 10**6)
        assert bound == pytest.approx(2.0 * 0.1**2, rel=1e-12)

    def test_contraction_coefficient_over_admissible_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            mu = rng.uniform(0.2, 3.0)
            rho = rng.uniform(0.2, 3.0)
            L = mu / rng.uniform(0.05, 1.0)  # tau in (0.05, 1]
            gamma = rng.uniform(0.05, 0.95)
            tau = mu / L
            amax = gamma * tau / math.sqrt(1.0 + 2.0 * tau * tau) * mu / rho
            alpha = rng.uniform(0.05, 0.95) * amax
            E0 = rng.uniform(0.0, 1.0) * (gamma * mu / rho) ** 2
            _, _, q = constant_step_bound(E0, alpha, gamma, mu, rho, L, 3)
            assert 0.0 < q < 1.0

    def test_bound_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            constant_step_bound(0.2, 0.5, 0.9, 1.0, 2.0, 3.0, 0)  # alpha too big
        with pytest.raises(ValueError):
            constant_step_bound(0.5, 0.1, 0.9, 1.0, 2.0, 3.0, 0)  # E0 outside tube


class TestSolve:
    def test_polyak_abs_converges_in_one_step(self):
        inst = make_abs()
        tr = solve(inst.problem, Polyak(), np.array([0.8]), SolveConfig(max_iters=50))
        assert tr.status == "zero-subgradient-exit"
        assert len(tr) == 2
        assert np.allclose(tr.objective, [0.8, 0.0])
        assert tr.final_point[0] == 0.0

    def test_geometric_l1_rate_bound(self):
        inst = make_l1()
        lam, q = geometric_params(0.5, inst.mu, inst.rho, inst.L)
        tr = solve(inst.problem, Geometric(lam, q), np.array([0.2, -0.3]),
                   SolveConfig(max_iters=100))
        E = tr.distance**2
        ks = np.arange(len(tr))
        assert (E <= 0.25 * 0.75**ks + 1e-9).all()

    def test_constant_abs_oscillates_below_alpha(self):
        inst = make_abs()
        tr = solve(inst.problem, Constant(0.3), np.array([1.0]),
                   SolveConfig(max_iters=60))
        assert (tr.distance[4:] <= 0.3 + 1e-15).all()

    def test_trace_is_deterministic(self):
        inst = gen_phase_retrieval(PhaseRetrievalSpec(d=15, m=90, seed=4))
        x0 = inst.xbar + 0.1
        a = solve(inst.problem, Polyak(), x0, SolveConfig(max_iters=40))
        b = solve(inst.problem, Polyak(), x0, SolveConfig(max_iters=40))
        assert np.array_equal(a.objective, b.objective)
        assert np.array_equal(a.distance, b.distance)
        assert np.array_equal(a.step_size, b.step_size)
        assert np.array_equal(a.subgrad_norm, b.subgrad_norm)
        assert np.array_equal(a.final_point, b.final_point)
        assert a.status == b.status

    def test_min_value_read_only_under_polyak(self):
        reads = {"count": 0}

        class Spy:
            dim = 1
            value = staticmethod(lambda x: float(abs(x[0])))
            subgrad = staticmethod(lambda x: np.sign(x))
            project = staticmethod(lambda y: y)
            distance = staticmethod(lambda x: float(abs(x[0])))
            solutions = ()
            metadata = {}

            @property
            def min_value(self):
                reads["count"] += 1
                return 0.0

        spy = Spy()
        solve(spy, Constant(0.1), np.array([0.5]), SolveConfig(max_iters=5))
        solve(spy, Geometric(0.1, 0.5), np.array([0.5]), SolveConfig(max_iters=5))
        assert reads["count"] == 0
        solve(spy, Polyak(), np.array([0.5]), SolveConfig(max_iters=5))
        assert reads["count"] == 1

    def test_polyak_missing_min_value(self):
        spec = PhaseRetrievalSpec(d=8, m=40, corrupted=True, seed=1)
        inst = gen_phase_retrieval(spec)
        assert inst.problem.min_value is None
        with pytest.raises(ValueError, match="optimal value"):
            solve(inst.problem, Polyak(), inst.xbar, SolveConfig(max_iters=5))

    def test_polyak_clamps_misdeclared_min(self):
        inst = make_abs()
        tr = solve(inst.problem, Polyak(min_value=0.5), np.array([0.3]),
                   SolveConfig(max_iters=10))
        assert tr.status == "max-iters"
        assert any("clamped" in w for w in tr.warnings)
        assert (tr.step_size == 0.0).all()

    def test_oracle_failure_reports_iteration(self):
        bad = ProblemInstance(
            dim=1,
            value=lambda x: float("inf") if abs(x[0]) > 10 else float(abs(x[0])),
            subgrad=lambda x: np.sign(x),
            distance=lambda x: float(abs(x[0])),
        )
        with pytest.raises(OracleError) as err:
            solve(bad, Geometric(100.0, 0.5), np.array([1.0]),
                  SolveConfig(max_iters=10))
        assert err.value.iteration == 1

    def test_x0_is_projected(self):
        clamped = ProblemInstance(
            dim=1,
            value=lambda x: float(abs(x[0])),
            subgrad=lambda x: np.sign(x),
            project=lambda y: np.maximum(y, 0.0),
            distance=lambda x: float(abs(x[0])),
        )
        tr = solve(clamped, Constant(0.1), np.array([-5.0]),
                   SolveConfig(max_iters=10))
        assert tr.objective[0] == 0.0  # started from proj(-5) = 0
        assert tr.status == "zero-subgradient-exit"

    def test_distance_tolerance_exit(self):
        inst = make_quad1d()
        tr = solve(inst.problem, Polyak(), np.array([1.2]),
                   SolveConfig(max_iters=100, dist_tol=1e-3))
        assert tr.status == "tolerance-met"
        assert tr.distance[-1] <= 1e-3

    def test_gap_tolerance_under_polyak(self):
        inst = make_quad1d()
        tr = solve(inst.problem, Polyak(), np.array([1.2]),
                   SolveConfig(max_iters=100, gap_tol=1e-6))
        assert tr.status == "tolerance-met"
        assert tr.objective[-1] <= 1e-6

    def test_explicit_zero_threshold(self):
        inst = make_abs()
        tr = solve(inst.problem, Polyak(), np.array([0.8]),
                   SolveConfig(max_iters=50, zero_subgrad_tol=0.0))
        # sign(0) = 0 still triggers the exact-zero exit
        assert tr.status == "zero-subgradient-exit"

    def test_row_budget(self):
        inst = make_abs()
        tr = solve(inst.problem, Constant(0.3), np.array([50.0]),
                   SolveConfig(max_iters=7))
        assert tr.status == "max-iters"
        assert len(tr) == 8

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolveConfig(max_iters=0)
        with pytest.raises(ValueError):
            SolveConfig(dist_tol=-1.0)
        with pytest.raises(ValueError):
            Constant(alpha=0.0)
        with pytest.raises(ValueError):
            Geometric(lam=1.0, q=1.0)

    def test_polyak_step_size_column_semantics(self):
        # the recorded step is the displacement length when unconstrained
        inst = make_quad1d()
        tr = solve(inst.problem, Polyak(), np.array([1.2]),
                   SolveConfig(max_iters=3))
        assert tr.step_size[0] == pytest.approx(0.44 / 2.4, rel=1e-12)
