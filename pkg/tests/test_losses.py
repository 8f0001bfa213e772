import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fcsolve import losses
from fcsolve.exceptions import ConfigError, NoClosedForm
from fcsolve.losses import CustomLoss, FiniteSumLoss, SquaredLoss, finite_sum_oracle, quadratic_loss
from fcsolve.operators import build_univariate_diff


def all_losses():
    rng = np.random.default_rng(0)
    return [
        SquaredLoss(rng.normal(size=5)),
        FiniteSumLoss(rng.normal(size=(4, 5)), rng.normal(size=4)),
        quadratic_loss(rng.uniform(0.5, 3.0, 5), rng.normal(size=5)),
    ]


class TestGrad:
    def test_zero_at_data(self):
        y = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(losses.grad(SquaredLoss(y), y), 0.0)

    def test_identity_for_zero_data(self):
        np.testing.assert_array_equal(losses.grad(SquaredLoss([0.0, 0.0]), [1.0, 2.0]), [1.0, 2.0])

    def test_finite_sum_is_mean_of_components(self):
        a = np.array([[1.0, 0.0], [3.0, 4.0]])
        fs = FiniteSumLoss(a)
        beta = np.array([0.5, 0.5])
        by_hand = 0.5 * ((beta - a[0]) + (beta - a[1]))
        np.testing.assert_allclose(losses.grad(fs, beta), by_hand)
        np.testing.assert_allclose(
            losses.grad(fs, beta), np.mean([fs.component_grad(i, beta) for i in range(2)], axis=0)
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            losses.grad(SquaredLoss([1.0, 2.0]), [1.0])

    @pytest.mark.parametrize("loss", all_losses(), ids=lambda l: l.kind)
    def test_finite_differences(self, loss):
        rng = np.random.default_rng(1)
        for _ in range(20):
            beta = rng.normal(size=loss.dim) * 2
            g = losses.grad(loss, beta)
            fd = np.empty_like(beta)
            for i in range(beta.size):
                h = 1e-6 * (1 + abs(beta[i]))
                e = np.zeros_like(beta)
                e[i] = h
                fd[i] = (loss.value(beta + e) - loss.value(beta - e)) / (2 * h)
            assert np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))

    @pytest.mark.parametrize("loss", all_losses(), ids=lambda l: l.kind)
    def test_strong_convexity_and_smoothness(self, loss):
        rng = np.random.default_rng(2)
        for _ in range(50):
            b1, b2 = rng.normal(size=(2, loss.dim)) * 3
            dg = loss.grad(b1) - loss.grad(b2)
            db = b1 - b2
            assert db @ dg >= loss.mu * (db @ db) * (1 - 1e-12)
            assert np.linalg.norm(dg) <= loss.ell * np.linalg.norm(db) * (1 + 1e-12)


class TestTilted:
    def test_untilted(self):
        y = np.array([1.0, 2.0])
        np.testing.assert_array_equal(losses.argmin_tilted(SquaredLoss(y), [0.0, 0.0]), y)

    def test_stationarity(self):
        np.testing.assert_array_equal(losses.argmin_tilted(SquaredLoss([0.0, 0.0]), [1.0, -1.0]), [1.0, -1.0])

    def test_example_with_operator_and_agd_crosscheck(self):
        from fcsolve.subroutines import agd_minimize

        loss = SquaredLoss([2.0, 2.0, 2.0])
        s = build_univariate_diff(3, 0).apply_adjoint([1.0, 0.0])
        np.testing.assert_array_equal(s, [-1.0, 1.0, 0.0])
        exact = losses.argmin_tilted(loss, s)
        np.testing.assert_array_equal(exact, [1.0, 3.0, 2.0])
        approx = agd_minimize(loss, s, np.zeros(3), 1e-10).beta
        np.testing.assert_allclose(approx, exact, atol=1e-10)

    def test_no_closed_form_for_other_losses(self):
        with pytest.raises(NoClosedForm):
            losses.argmin_tilted(FiniteSumLoss(np.ones((2, 2))), np.zeros(2))
        with pytest.raises(NoClosedForm):
            losses.conjugate_value(quadratic_loss([1.0, 2.0]), np.zeros(2))


class TestConjugate:
    def test_values(self):
        assert losses.conjugate_value(SquaredLoss([0.0]), [0.0]) == 0.0
        assert losses.conjugate_value(SquaredLoss([0.0, 0.0]), [3.0, 4.0]) == 12.5
        assert losses.conjugate_value(SquaredLoss([1.0, 1.0]), [1.0, 0.0]) == 1.5

    def test_matches_numeric_sup(self):
        # f*(s) = sup_b s.b - f(b); the concave inner problem is maximized on a fine grid
        y, s = np.array([1.0, 1.0]), np.array([1.0, 0.0])
        loss = SquaredLoss(y)
        grid = np.linspace(-3, 5, 801)
        b0, b1 = np.meshgrid(grid, grid, indexing="ij")
        vals = s[0] * b0 + s[1] * b1 - 0.5 * ((b0 - y[0]) ** 2 + (b1 - y[1]) ** 2)
        assert vals.max() == pytest.approx(losses.conjugate_value(loss, s), abs=1e-9)

    def test_fenchel_young(self):
        rng = np.random.default_rng(3)
        loss = SquaredLoss(rng.normal(size=6))
        for _ in range(50):
            beta, s = rng.normal(size=(2, 6))
            assert loss.value(beta) + losses.conjugate_value(loss, s) >= s @ beta - 1e-12
            s_eq = loss.grad(beta)
            lhs = loss.value(beta) + losses.conjugate_value(loss, s_eq)
            assert lhs == pytest.approx(s_eq @ beta, abs=1e-10)


class TestFiniteSum:
    def test_from_squared_preserves_loss(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=7)
        fs = FiniteSumLoss.from_squared(y, 12, 0.3, seed=1)
        sq = SquaredLoss(y)
        for _ in range(10):
            beta = rng.normal(size=7)
            assert fs.value(beta) == pytest.approx(sq.value(beta), abs=1e-12)
            np.testing.assert_allclose(fs.grad(beta), sq.grad(beta), atol=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            FiniteSumLoss(np.ones(3))
        with pytest.raises(ConfigError):
            FiniteSumLoss(np.ones((2, 3)), np.ones(3))

    def test_custom_loss_validates_moduli(self):
        with pytest.raises(ConfigError):
            CustomLoss(lambda b: 0.0, lambda b: b, 2, mu=2.0, ell=1.0)
        with pytest.raises(ConfigError):
            quadratic_loss([1.0, 0.0])


class TestStochastic:
    def test_identical_components_exact(self):
        fs = FiniteSumLoss(np.tile([1.0, -2.0], (5, 1)))
        orc = finite_sum_oracle(fs, seed=0)
        beta = np.array([0.3, 0.7])
        for _ in range(10):
            np.testing.assert_array_equal(losses.stochastic_grad(fs, orc, beta), fs.grad(beta))

    def test_unbiased_and_bounded(self):
        rng = np.random.default_rng(5)
        fs = FiniteSumLoss(rng.normal(size=(10, 3)))
        orc = finite_sum_oracle(fs, seed=9, radius=2.0)
        beta = fs.anchors.mean(axis=0) + np.array([1.0, -1.0, 0.5])  # within radius 2
        n = 100_000
        samples = np.array([losses.stochastic_grad(fs, orc, beta) for _ in range(n)])
        mean, std = samples.mean(axis=0), samples.std(axis=0)
        assert np.all(np.abs(mean - fs.grad(beta)) <= 3 * std / np.sqrt(n) + 1e-15)
        second = np.mean(np.sum(samples**2, axis=1))
        se = np.std(np.sum(samples**2, axis=1)) / np.sqrt(n)
        assert second <= orc.bound_C**2 + 3 * se

    def test_deterministic_given_seed(self):
        fs = FiniteSumLoss(np.random.default_rng(0).normal(size=(6, 2)))
        a = [losses.stochastic_grad(fs, finite_sum_oracle(fs, seed=3), np.zeros(2)) for _ in range(2)]
        np.testing.assert_array_equal(a[0], a[1])

    def test_squared_unsupported(self):
        orc = losses.StochasticOracle(np.random.default_rng(0), 1.0)
        with pytest.raises(ConfigError):
            losses.stochastic_grad(SquaredLoss([1.0]), orc, [0.0])

    def test_custom_sampler(self):
        def sample(beta, rng):
            return beta + rng.normal(size=beta.size)

        loss = CustomLoss(lambda b: 0.5 * b @ b, lambda b: b, 2, 1.0, 1.0, sample_grad=sample)
        orc = losses.StochasticOracle(np.random.default_rng(0), 2.0)
        assert losses.stochastic_grad(loss, orc, np.ones(2)).shape == (2,)


@settings(max_examples=50, deadline=None)
@given(
    y=arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)),
    s=arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)),
)
def test_tilted_minimizer_is_stationary(y, s):
    loss = SquaredLoss(y)
    beta = losses.argmin_tilted(loss, s)
    np.testing.assert_allclose(loss.grad(beta), s, atol=1e-9 * (1 + np.abs(y).max() + np.abs(s).max()))
