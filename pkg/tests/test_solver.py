import numpy as np
import pytest

from ibpg import (
    CompositeProblem,
    DivergenceError,
    InfeasibleParametersError,
    Kernel,
    LeastSquares,
    NonsmoothPart,
    ParameterSchedule,
    QuadraticInverse,
    SolverState,
    StoppingRule,
    default_schedule,
    ibpg_step,
    lyapunov,
    parameter_window,
    random_least_squares,
    random_quadratic_inverse,
    run,
    stationarity_residual,
    validate_parameters,
    write_trace_csv,
)
from ibpg import oracle


def scalar_problem(g=None):
    """f(x) = 0.5*x^2 in one dimension (identity least squares)."""
    return CompositeProblem(
        LeastSquares(np.array([[1.0]]), np.array([0.0])),
        g or NonsmoothPart.zero(),
        Kernel.quadratic(1),
    )


def quartic_test_problem(d=6, m=15, seed=3, g=None):
    A, b, _ = random_quadratic_inverse(d, m, seed)
    return CompositeProblem(QuadraticInverse(A, b), g or NonsmoothPart.zero(),
                            Kernel.quartic(d))


class TestParameterValidation:
    def test_worked_window(self):
        w = validate_parameters(1.0, 1.0, ParameterSchedule(0.5, 0.2))
        assert w.m_lo == 0.4
        assert w.m_hi == 0.6
        assert w.strictly_feasible
        assert w.default_m == 0.6

    def test_zero_inertia_window(self):
        w = validate_parameters(1.0, 1.0, ParameterSchedule(0.5, 0.0))
        assert (w.m_lo, w.m_hi) == (0.0, 1.0)
        assert w.strictly_feasible

    def test_infeasible_window(self):
        sched = ParameterSchedule(0.5, 0.3)
        w = parameter_window(1.0, 1.0, sched)
        assert w.m_lo == pytest.approx(0.6) and w.m_hi == pytest.approx(0.4)
        assert not w.feasible
        with pytest.raises(InfeasibleParametersError, match="beta_max <"):
            validate_parameters(1.0, 1.0, sched)

    def test_step_size_cap(self):
        with pytest.raises(InfeasibleParametersError, match="lambda_k <= 1/L"):
            validate_parameters(2.0, 1.0, ParameterSchedule(0.8, 0.0))

    def test_positive_step_required(self):
        with pytest.raises(InfeasibleParametersError, match="0 < lambda_k"):
            validate_parameters(1.0, 1.0, ParameterSchedule(0.0, 0.0))

    def test_inertia_cap(self):
        with pytest.raises(InfeasibleParametersError, match="beta_k < 1"):
            validate_parameters(1.0, 1.0, ParameterSchedule(0.1, 1.0))

    def test_explicit_m_outside_window(self):
        with pytest.raises(InfeasibleParametersError, match="outside the feasible window"):
            validate_parameters(1.0, 1.0, ParameterSchedule(0.5, 0.2, M=0.7))

    def test_sequence_envelopes(self):
        sched = ParameterSchedule([0.3, 0.5, 0.4], [0.0, 0.1])
        assert sched.lambda_min == 0.3
        assert sched.lambda_max == 0.5
        assert sched.beta_max == 0.1
        assert sched.lambda_at(0) == 0.3
        assert sched.lambda_at(99) == 0.4  # holds last value
        assert sched.beta_at(5) == 0.1

    def test_default_schedule_strictly_feasible(self):
        for L in (1.0, 37.5, 8087.0):
            sched = default_schedule(L)
            w = validate_parameters(L, 1.0, sched)
            assert w.strictly_feasible
            assert sched.lambda_max <= 1.0 / L


class TestIbpgStep:
    def test_gradient_descent_step(self):
        prob = scalar_problem()
        state = SolverState(0, np.array([1.0]), np.array([1.0]))
        new = ibpg_step(state, prob, 0.5, 0.0)
        assert new.x_curr[0] == pytest.approx(0.5, abs=1e-15)
        assert new.k == 1
        np.testing.assert_array_equal(new.x_prev, [1.0])

    def test_inertial_step(self):
        prob = scalar_problem()
        state = SolverState(1, np.array([1.0]), np.array([2.0]))
        new = ibpg_step(state, prob, 0.5, 0.2)
        assert new.x_curr[0] == pytest.approx(0.3, abs=1e-15)

    def test_stationary_fixed_point(self):
        prob = scalar_problem()
        state = SolverState(4, np.array([0.0]), np.array([0.0]))
        new = ibpg_step(state, prob, 0.5, 0.2)
        assert new.x_curr[0] == 0.0


class TestStationarityResidual:
    def test_all_equal_gives_zero(self):
        prob = scalar_problem()
        x = np.array([0.7])
        v = stationarity_residual(x, x, x, 0.5, 0.2, prob)
        np.testing.assert_array_equal(v, [0.0])

    def test_hand_value(self):
        prob = scalar_problem()
        v = stationarity_residual(np.array([0.5]), np.array([1.0]), np.array([1.0]),
                                  0.5, 0.0, prob)
        assert v[0] == pytest.approx(0.5, abs=1e-15)

    def test_gradient_descent_identity(self):
        # with beta=0, quadratic kernel, g=0 and x_k = x_km1 - lam*grad f(x_km1),
        # the residual collapses to grad f(x_k)
        rng = np.random.default_rng(8)
        A, b, _ = random_least_squares(4, 7, 2)
        prob = CompositeProblem(LeastSquares(A, b), NonsmoothPart.zero(),
                                Kernel.quadratic(4))
        lam = 0.5 / prob.smad_L
        for _ in range(20):
            x_prev = rng.standard_normal(4)
            _, g_prev = prob.f.value_grad(x_prev)
            x = x_prev - lam * g_prev
            v = stationarity_residual(x, x_prev, x_prev, lam, 0.0, prob)
            _, g_now = prob.f.value_grad(x)
            np.testing.assert_allclose(v, g_now, rtol=1e-10, atol=1e-12)


def test_lyapunov_values():
    assert lyapunov(2.0, 0.5, 0.6) == 2.3
    assert lyapunov(1.5, 0.0, 7.0) == 1.5
    assert lyapunov(1.5, 0.4, 0.0) == 1.5


class TestRun:
    def test_geometric_contraction(self):
        prob = scalar_problem()
        res = run(prob, ParameterSchedule(0.5, 0.0), np.array([1.0]),
                  StoppingRule(max_iter=200, residual_tol=1e-8))
        assert res.termination_reason == "residual_tol"
        assert res.final.k <= 60
        assert abs(res.x_final[0]) < 1e-7

    def test_max_iter_zero_single_record(self):
        prob = scalar_problem()
        res = run(prob, ParameterSchedule(0.5, 0.0), np.array([1.0]),
                  StoppingRule(max_iter=0))
        assert res.termination_reason == "max_iter"
        assert len(res.records) == 1
        assert res.records[0].k == 0
        assert res.records[0].step_norm == 0.0

    def test_merit_nonincreasing_on_quartic_instance(self):
        prob = quartic_test_problem()
        sched = default_schedule(prob.smad_L)
        x0 = np.random.default_rng(0).standard_normal(prob.dimension)
        res = run(prob, sched, x0, StoppingRule(max_iter=500, residual_tol=0.0))
        H = np.array([r.lyapunov for r in res.records])
        assert np.all(np.diff(H) <= 1e-9)

    def test_divergence_detected(self):
        prob = quartic_test_problem(d=3, m=6)
        sched = default_schedule(prob.smad_L)
        with pytest.raises(DivergenceError) as exc_info:
            run(prob, sched, 1e80 * np.ones(3), StoppingRule(max_iter=5))
        assert isinstance(exc_info.value.records, list)

    def test_infeasible_schedule_rejected_unless_opted_out(self):
        prob = quartic_test_problem(d=3, m=6)
        sched = ParameterSchedule(0.99 / prob.smad_L, 0.9)
        with pytest.raises(InfeasibleParametersError):
            run(prob, sched, np.ones(3))
        res = run(prob, ParameterSchedule(0.99 / prob.smad_L, 0.9, M=1.0),
                  np.ones(3), StoppingRule(max_iter=20), validate=False)
        assert len(res.records) == 21

    def test_boundedness_on_shipped_instance(self):
        prob = quartic_test_problem()
        sched = default_schedule(prob.smad_L)
        x0 = np.random.default_rng(1).standard_normal(prob.dimension)
        res = run(prob, sched, x0, StoppingRule(max_iter=1000, residual_tol=0.0),
                  keep_iterates=True)
        max_norm = max(np.linalg.norm(x) for x in res.iterates)
        assert max_norm <= 1e6 * (1.0 + np.linalg.norm(x0))

    def test_cumulative_bregman_bound(self):
        # telescoped merit decrease bounds the summed Bregman steps
        prob = quartic_test_problem()
        sched = default_schedule(prob.smad_L)
        x0 = np.random.default_rng(2).standard_normal(prob.dimension)
        res = run(prob, sched, x0, StoppingRule(max_iter=2000, residual_tol=0.0))
        H = [r.lyapunov for r in res.records]
        total = sum(r.bregman_step for r in res.records[1:])
        m_lo = res.window.m_lo
        assert total <= (H[0] - min(H)) / (res.M - m_lo) + 1e-6


class TestReductionEquivalences:
    def test_beta_zero_matches_bpg_reference(self):
        prob = quartic_test_problem()
        lam = 0.99 / prob.smad_L
        x0 = np.random.default_rng(3).standard_normal(prob.dimension)
        res = run(prob, ParameterSchedule(lam, 0.0), x0,
                  StoppingRule(max_iter=100, residual_tol=0.0), keep_iterates=True)
        ref = oracle.bpg_reference_iterates(prob, x0, lam, 100)
        for mine, theirs in zip(res.iterates, ref):
            assert np.linalg.norm(mine - theirs) <= 1e-12

    def test_quadratic_l1_matches_inertial_proxgrad(self):
        A, b, _ = random_least_squares(5, 8, 4)
        prob = CompositeProblem(LeastSquares(A, b), NonsmoothPart.l1(0.3),
                                Kernel.quadratic(5))
        lam, beta = 0.5 / prob.smad_L, 0.2
        x0 = np.random.default_rng(4).standard_normal(5)
        res = run(prob, ParameterSchedule(lam, beta), x0,
                  StoppingRule(max_iter=100, residual_tol=0.0), keep_iterates=True)
        ref = oracle.inertial_proxgrad_reference(A, b, 0.3, x0, lam, beta, 100)
        for mine, theirs in zip(res.iterates, ref):
            assert np.linalg.norm(mine - theirs) <= 1e-10


class TestTraceCsv:
    def test_header_and_determinism(self, tmp_path):
        prob = scalar_problem()
        res = run(prob, ParameterSchedule(0.5, 0.0), np.array([1.0]),
                  StoppingRule(max_iter=10, residual_tol=0.0))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace_csv(res.records, p1)
        write_trace_csv(res.records, p2)
        text = p1.read_text()
        assert text.splitlines()[0] == \
            "k,psi,lyapunov,bregman_step,step_norm,residual_norm,lambda,beta"
        assert len(text.splitlines()) == 12
        assert p1.read_bytes() == p2.read_bytes()
