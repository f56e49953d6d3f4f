import itertools

import numpy as np
import pytest

from ibpg import (
    CompositeProblem,
    ConfigurationError,
    Kernel,
    LeastSquares,
    NonsmoothPart,
    QuadraticInverse,
    bregman_prox,
    eval_kernel,
    eval_nonsmooth,
    eval_smooth,
    fd_gradient,
    random_least_squares,
    random_quadratic_inverse,
    smad_constant,
    validate_problem,
)
from ibpg.problems import load_matrix, save_matrix


def inclusion_residual(g, h, p, lam, x):
    """Distance from p - grad h(x) to lam * (subdifferential of g at x)."""
    _, grad_h = eval_kernel(h, x)
    r = p - grad_h
    level = lam * g.weight
    if g.kind == "zero":
        return float(np.linalg.norm(r))
    if g.kind == "l1":
        viol = np.where(x == 0.0,
                        np.maximum(np.abs(r) - level, 0.0),
                        np.abs(r - level * np.sign(x)))
        return float(np.linalg.norm(viol))
    # l0: coordinates off the support are unconstrained
    return float(np.linalg.norm(r[x != 0.0]))


class TestEvalSmooth:
    def test_least_squares_identity(self):
        f = LeastSquares(np.eye(2), np.zeros(2))
        v, g = eval_smooth(f, np.array([1.0, 1.0]))
        assert v == 1.0
        np.testing.assert_array_equal(g, [1.0, 1.0])

    def test_quadratic_inverse_at_zero(self):
        f = QuadraticInverse(np.array([[1.0, 0.0]]), np.array([1.0]))
        v, g = eval_smooth(f, np.zeros(2))
        assert v == 0.25
        np.testing.assert_array_equal(g, [0.0, 0.0])

    def test_quadratic_inverse_exact_fit(self):
        f = QuadraticInverse(np.array([[1.0, 0.0]]), np.array([1.0]))
        v, g = eval_smooth(f, np.array([1.0, 0.0]))
        assert v == 0.0
        np.testing.assert_array_equal(g, [0.0, 0.0])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        A, b, _ = random_least_squares(4, 6, 0)
        A2, b2, _ = random_quadratic_inverse(4, 6, 1)
        for f in (LeastSquares(A, b), QuadraticInverse(A2, b2)):
            for _ in range(1000):
                x = rng.standard_normal(4)
                _, g = eval_smooth(f, x)
                fd = fd_gradient(lambda z: f.value(z), x, 1e-6)
                assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(12)
        A, b, _ = random_quadratic_inverse(3, 5, 2)
        f = QuadraticInverse(A, b)
        X = rng.standard_normal((20, 3))
        np.testing.assert_allclose(f.value_many(X), [f.value(x) for x in X], rtol=1e-12)
        np.testing.assert_allclose(f.grad_many(X), [f.value_grad(x)[1] for x in X], rtol=1e-12)


class TestSmadConstant:
    def test_identity_design(self):
        assert smad_constant(LeastSquares(np.eye(2), np.zeros(2)), Kernel.quadratic(2)) \
            == pytest.approx(1.0, rel=1e-9)

    def test_diagonal_design(self):
        f = LeastSquares(np.diag([2.0, 1.0]), np.zeros(2))
        assert smad_constant(f, Kernel.quadratic(2)) == pytest.approx(4.0, rel=1e-9)

    def test_quadratic_inverse_row(self):
        f = QuadraticInverse(np.array([[1.0, 0.0]]), np.array([1.0]))
        assert smad_constant(f, Kernel.quartic(2)) == 4.0

    def test_power_iteration_matches_eigvalsh(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            A = rng.standard_normal((7, 5))
            f = LeastSquares(A, np.zeros(7))
            ref = np.linalg.eigvalsh(A.T @ A)[-1]
            assert f.smad_L == pytest.approx(ref, rel=1e-8)

    def test_inadmissible_pairings(self):
        ls = LeastSquares(np.eye(2), np.zeros(2))
        qi = QuadraticInverse(np.eye(2), np.ones(2))
        with pytest.raises(ConfigurationError):
            smad_constant(ls, Kernel.quartic(2))
        with pytest.raises(ConfigurationError):
            smad_constant(qi, Kernel.quadratic(2))


class TestEvalNonsmooth:
    def test_zero(self):
        assert eval_nonsmooth(NonsmoothPart.zero(), np.array([3.0, -1.0])) == 0.0

    def test_l1(self):
        assert eval_nonsmooth(NonsmoothPart.l1(2.0), np.array([1.0, -3.0])) == 8.0

    def test_l0(self):
        assert eval_nonsmooth(NonsmoothPart.l0(1.0), np.array([0.0, 5.0, 0.0])) == 1.0

    def test_weight_guard(self):
        with pytest.raises(ConfigurationError):
            NonsmoothPart.l1(0.0)


class TestBregmanProx:
    def test_zero_quadratic(self):
        x = bregman_prox(NonsmoothPart.zero(), Kernel.quadratic(2), np.array([1.0, 2.0]), 0.3)
        np.testing.assert_array_equal(x, [1.0, 2.0])

    def test_l1_quadratic_soft_threshold(self):
        x = bregman_prox(NonsmoothPart.l1(1.0), Kernel.quadratic(2), np.array([2.0, -0.5]), 1.0)
        np.testing.assert_array_equal(x, [1.0, 0.0])

    def test_l1_quartic_threshold_then_rescale(self):
        x = bregman_prox(NonsmoothPart.l1(1.0), Kernel.quartic(2), np.array([2.0, 0.0]), 1.0)
        assert x[0] == pytest.approx(0.6823278, abs=1e-7)
        assert x[1] == 0.0

    def test_l0_hard_threshold_with_tie_to_zero(self):
        g = NonsmoothPart.l0(2.0)
        h = Kernel.quadratic(3)
        # middle coordinate has 0.5*p^2 == lam*weight exactly; ties drop to zero
        p = np.array([3.0, 2.0, 0.5])
        x = bregman_prox(g, h, p, 1.0)
        np.testing.assert_array_equal(x, [3.0, 0.0, 0.0])

    def test_l0_quartic_rejected(self):
        with pytest.raises(ConfigurationError):
            bregman_prox(NonsmoothPart.l0(1.0), Kernel.quartic(2), np.zeros(2), 1.0)

    def test_nonpositive_lambda_rejected(self):
        with pytest.raises(ValueError):
            bregman_prox(NonsmoothPart.zero(), Kernel.quadratic(2), np.zeros(2), 0.0)

    @pytest.mark.parametrize("g_kind,h_kind", [
        ("zero", "quadratic"), ("l1", "quadratic"), ("l0", "quadratic"),
        ("zero", "quartic"), ("l1", "quartic"),
    ])
    def test_optimality_inclusion(self, g_kind, h_kind):
        rng = np.random.default_rng(hash((g_kind, h_kind)) % 2**32)
        d = 4
        h = Kernel(h_kind, d)
        for _ in range(200):
            g = NonsmoothPart(g_kind, 0.2 + rng.random()) if g_kind != "zero" \
                else NonsmoothPart.zero()
            p = rng.standard_normal(d) * 3
            lam = 0.1 + rng.random()
            x = bregman_prox(g, h, p, lam)
            assert inclusion_residual(g, h, p, lam, x) <= 1e-10

    @pytest.mark.parametrize("g_kind,h_kind", [
        ("zero", "quadratic"), ("l1", "quadratic"), ("l0", "quadratic"),
        ("zero", "quartic"), ("l1", "quartic"),
    ])
    def test_beats_random_probes(self, g_kind, h_kind):
        rng = np.random.default_rng(hash((h_kind, g_kind)) % 2**32)
        d = 3
        h = Kernel(h_kind, d)
        g = NonsmoothPart(g_kind, 0.7) if g_kind != "zero" else NonsmoothPart.zero()
        p = rng.standard_normal(d) * 2
        lam = 0.5
        x = bregman_prox(g, h, p, lam)

        def objective(z):
            return lam * eval_nonsmooth(g, z) + eval_kernel(h, z)[0] - float(p @ z)

        best = objective(x)
        for _ in range(1000):
            z = rng.standard_normal(d) * 3
            assert best <= objective(z) + 1e-12

    def test_l0_beats_support_enumeration(self):
        rng = np.random.default_rng(21)
        h = Kernel.quadratic(6)
        g = NonsmoothPart.l0(0.4)
        for _ in range(50):
            p = rng.standard_normal(6) * 2
            lam = 0.3 + rng.random()
            x = bregman_prox(g, h, p, lam)
            val = lam * eval_nonsmooth(g, x) + eval_kernel(h, x)[0] - float(p @ x)
            for r in range(7):
                for support in itertools.combinations(range(6), r):
                    z = np.zeros(6)
                    z[list(support)] = p[list(support)]
                    alt = lam * eval_nonsmooth(g, z) + eval_kernel(h, z)[0] - float(p @ z)
                    assert val <= alt + 1e-12


class TestCompositeProblem:
    def test_pairing_enforced_on_construction(self):
        ls = LeastSquares(np.eye(2), np.zeros(2))
        with pytest.raises(ConfigurationError):
            CompositeProblem(ls, NonsmoothPart.zero(), Kernel.quartic(2))
        with pytest.raises(ConfigurationError):
            CompositeProblem(
                QuadraticInverse(np.eye(2), np.ones(2)),
                NonsmoothPart.l0(1.0),
                Kernel.quartic(2),
            )

    def test_psi_sums_parts(self):
        A, b, _ = random_least_squares(3, 5, 0)
        prob = CompositeProblem(LeastSquares(A, b), NonsmoothPart.l1(0.5),
                                Kernel.quadratic(3))
        x = np.array([1.0, -2.0, 0.0])
        assert prob.psi(x) == pytest.approx(
            prob.f.value(x) + 0.5 * 3.0, rel=1e-15)

    def test_validate_problem_passes_on_shipped_instances(self):
        A, b, _ = random_quadratic_inverse(5, 12, 3)
        prob = CompositeProblem(QuadraticInverse(A, b), NonsmoothPart.zero(),
                                Kernel.quartic(5))
        report = validate_problem(prob, seed=0)
        assert report["min_psi_sampled"] >= 0.0

        A2, b2, _ = random_least_squares(4, 9, 3)
        prob2 = CompositeProblem(LeastSquares(A2, b2), NonsmoothPart.l1(0.3),
                                 Kernel.quadratic(4))
        validate_problem(prob2, seed=0)


class TestInstanceIO:
    def test_matrix_roundtrip(self, tmp_path):
        M = np.random.default_rng(7).standard_normal((4, 3))
        path = tmp_path / "m.txt"
        save_matrix(path, M)
        np.testing.assert_array_equal(load_matrix(path), M)

    def test_commas_accepted(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2 2\n1, 2\n3, 4\n")
        np.testing.assert_array_equal(load_matrix(path), [[1.0, 2.0], [3.0, 4.0]])

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("oops\n")
        with pytest.raises(ConfigurationError):
            load_matrix(path)

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("3 1\n1\n2\n")
        with pytest.raises(ConfigurationError):
            load_matrix(path)

    def test_generators_deterministic(self):
        A1, b1, x1 = random_quadratic_inverse(4, 6, 9)
        A2, b2, x2 = random_quadratic_inverse(4, 6, 9)
        np.testing.assert_array_equal(A1, A2)
        np.testing.assert_array_equal(b1, b2)
        np.testing.assert_array_equal(x1, x2)
        assert np.all(b1 >= 0.0)
        assert np.linalg.norm(x1) == pytest.approx(1.0, rel=1e-12)
