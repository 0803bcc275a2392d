import numpy as np
import pytest

from dpconformal import PrivacyBudget, gaussian_calibrate, sensitivity_bound
from dpconformal.erm import (
    LaplaceLocationRegressor,
    LipschitzErmRegressor,
    LocationRegressor,
    PrivateErmRegressor,
    clip_rows,
    fit_lipschitz_erm,
)


def objective_oracle(theta, design, targets, ridge, normalization):
    """Independent objective evaluation for the absolute loss."""
    loss = sum(abs(t - row @ theta) for row, t in zip(design, targets))
    return loss / normalization + 0.5 * ridge * float(theta @ theta)


class TestSensitivityBound:
    def test_worked_example(self):
        assert sensitivity_bound(1.0, 0.5, 100) == pytest.approx(0.04)

    def test_inverse_scaling_in_n(self):
        assert sensitivity_bound(1.0, 0.5, 200) == pytest.approx(
            sensitivity_bound(1.0, 0.5, 100) / 2
        )

    def test_zero_lipschitz(self):
        assert sensitivity_bound(0.0, 2.0, 10) == 0.0


class TestSolver:
    def test_intercept_only_small_ridge_recovers_median(self):
        rng = np.random.default_rng(0)
        residuals = rng.normal(5.0, 1.0, size=101)
        design = np.ones((101, 1))
        solution = fit_lipschitz_erm(design, residuals, ridge=1e-8)
        assert solution.theta[0] == pytest.approx(np.median(residuals), abs=1e-4)

    def test_single_point_huge_ridge_shrinks_to_zero(self):
        solution = fit_lipschitz_erm(np.array([[1.0]]), np.array([3.0]), ridge=1e6)
        assert abs(solution.theta[0]) < 1e-5

    def test_duplicated_dataset_same_minimizer(self):
        rng = np.random.default_rng(1)
        design = rng.normal(size=(30, 2))
        targets = rng.normal(size=30)
        once = fit_lipschitz_erm(design, targets, ridge=0.7)
        twice = fit_lipschitz_erm(np.vstack([design] * 2), np.tile(targets, 2), ridge=0.7)
        np.testing.assert_allclose(once.theta, twice.theta, atol=1e-7)

    def test_duality_gap_certificate(self):
        rng = np.random.default_rng(2)
        design = rng.normal(size=(50, 3))
        targets = rng.normal(size=50)
        solution = fit_lipschitz_erm(design, targets, ridge=0.5)
        assert solution.gap >= 0.0
        assert solution.tolerance <= 1e-6
        assert solution.converged

    def test_strong_convexity_around_minimizer(self):
        rng = np.random.default_rng(3)
        ridge = 0.8
        design = clip_rows(rng.normal(size=(60, 2)), 1.0)
        targets = rng.normal(size=60)
        solution = fit_lipschitz_erm(design, targets, ridge=ridge)
        value_hat = objective_oracle(solution.theta, design, targets, ridge, 60)
        for _ in range(50):
            theta = solution.theta + rng.normal(scale=2.0, size=2)
            distance = np.linalg.norm(theta - solution.theta)
            slack = solution.gap + ridge * solution.tolerance * distance + 1e-12
            value = objective_oracle(theta, design, targets, ridge, 60)
            assert value >= value_hat + 0.5 * ridge * distance**2 - slack

    def test_huber_loss_solves_and_certifies(self):
        rng = np.random.default_rng(4)
        design = rng.normal(size=(40, 2))
        targets = rng.normal(size=40)
        solution = fit_lipschitz_erm(design, targets, loss="huber", huber_kappa=0.5, ridge=0.5)
        assert solution.tolerance <= 1e-6

    def test_sensitivity_fuzzing_200_instances(self):
        # Fit a dataset and its one-point augmentation under the same loss
        # normalization; the minimizers must stay within
        # 2 * lipschitz / (ridge * n), up to certified solver error.
        rng = np.random.default_rng(5)
        bound = 1.0
        violations = 0
        for _ in range(200):
            n = int(rng.integers(20, 201))
            d = int(rng.integers(1, 4))
            ridge = float(rng.uniform(0.3, 3.0))
            design = clip_rows(rng.normal(size=(n + 1, d)), bound)
            targets = rng.normal(scale=rng.uniform(0.5, 3.0), size=n + 1)
            base = fit_lipschitz_erm(design[:n], targets[:n], ridge=ridge)
            augmented = fit_lipschitz_erm(
                design, targets, ridge=ridge, loss_normalization=n
            )
            tau = sensitivity_bound(bound, ridge, n)
            distance = np.linalg.norm(augmented.theta - base.theta)
            if distance > tau * (1 + 1e-6) + 2 * max(base.tolerance, augmented.tolerance):
                violations += 1
        assert violations == 0


class TestLipschitzErmRegressor:
    def test_row_clipping_bounds_norms(self):
        rng = np.random.default_rng(6)
        clipped = clip_rows(rng.normal(scale=10, size=(100, 3)), 2.0)
        assert np.linalg.norm(clipped, axis=1).max() <= 2.0 + 1e-12

    def test_fit_predict_roundtrip(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(80, 2))
        y = X @ np.array([0.5, -0.2]) + 1.0 + rng.normal(scale=0.1, size=80)
        model = LipschitzErmRegressor(ridge=0.01, feature_bound=5.0).fit(X, y)
        assert model.budget_spent_.is_identity
        residual = np.abs(model.predict(X) - y).mean()
        assert residual < 1.0

    def test_lipschitz_property(self):
        model = LipschitzErmRegressor(feature_bound=3.0)
        assert model.lipschitz == 3.0


class TestPrivateErm:
    def test_huge_epsilon_recovers_nonprivate_fit(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(50, 1))
        y = rng.normal(size=50)
        base = LipschitzErmRegressor(ridge=1.0).fit(X, y)
        private = PrivateErmRegressor(ridge=1.0, epsilon=1e6, delta=1e-5, random_state=0).fit(X, y)
        np.testing.assert_allclose(private.theta_, base.theta_, atol=1e-3)

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(9)
        X, y = rng.normal(size=(30, 1)), rng.normal(size=30)
        a = PrivateErmRegressor(epsilon=0.5, delta=1e-5, random_state=11).fit(X, y)
        b = PrivateErmRegressor(epsilon=0.5, delta=1e-5, random_state=11).fit(X, y)
        np.testing.assert_array_equal(a.theta_, b.theta_)

    def test_recorded_sigma_matches_formula_chain(self):
        rng = np.random.default_rng(10)
        X, y = rng.normal(size=(40, 2)), rng.normal(size=40)
        model = PrivateErmRegressor(
            ridge=0.5, feature_bound=2.0, epsilon=0.3, delta=1e-4, random_state=0
        ).fit(X, y)
        tau = sensitivity_bound(2.0, 0.5, 40)
        expected = gaussian_calibrate(tau, PrivacyBudget(0.3, 1e-4))
        assert model.sensitivity_ == pytest.approx(tau)
        assert model.calibration_.sigma == pytest.approx(expected.sigma, rel=1e-14)
        assert model.budget_spent_ == PrivacyBudget(0.3, 1e-4)

    def test_delta_zero_rejected(self):
        with pytest.raises(ValueError):
            PrivateErmRegressor(epsilon=1.0, delta=0.0).fit(
                np.zeros((5, 1)), np.zeros(5)
            )

    def test_noise_standard_deviation_over_seeded_runs(self):
        rng = np.random.default_rng(11)
        X, y = rng.normal(size=(4, 1)), rng.normal(size=4)
        base = LipschitzErmRegressor(ridge=1.0).fit(X, y)
        runs = 10_000
        prototype = PrivateErmRegressor(ridge=1.0, epsilon=0.8, delta=1e-5)
        draws = np.empty((runs, base.theta_.size))
        for i in range(runs):
            prototype.random_state = i
            draws[i] = prototype.fit(X, y).theta_
        sigma = prototype.calibration_.sigma
        # SE of a Gaussian sample standard deviation: sigma / sqrt(2 runs).
        se = sigma / np.sqrt(2 * runs)
        noise_std = (draws - base.theta_).std(axis=0, ddof=1)
        assert np.all(np.abs(noise_std - sigma) <= 4 * se)


class TestLocationModels:
    def test_nonprivate_mean_residual(self):
        x = np.linspace(-3, 3, 21)[:, None]
        y = x[:, 0] + 5.0
        model = LocationRegressor().fit(x, y)
        assert model.intercept_ == pytest.approx(5.0)
        np.testing.assert_allclose(model.predict(x), y)

    def test_noise_free_data_huge_epsilon(self):
        x = np.linspace(-10, 10, 50)[:, None]
        y = x[:, 0] + 5.0
        model = LaplaceLocationRegressor(sigma_eps=5.0, epsilon=1e6, random_state=0).fit(x, y)
        assert model.intercept_ == pytest.approx(5.0, abs=1e-3)

    def test_noise_scale_formula(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(2000, 1))
        y = x[:, 0] + 5.0
        model = LaplaceLocationRegressor(sigma_eps=5.0, epsilon=0.1, random_state=0).fit(x, y)
        assert model.noise_scale_ == pytest.approx(0.15)
        assert model.budget_spent_ == PrivacyBudget(0.1, 0.0)

    def test_unbiasedness_over_seeded_runs(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(20, 1))
        y = x[:, 0] + 5.0 + rng.uniform(-2, 2, size=20)
        truth = float((y - x[:, 0]).mean())
        runs = 100_000
        scale = 6.0 * 5.0 / (20 * 0.5)
        prototype = LaplaceLocationRegressor(sigma_eps=5.0, epsilon=0.5)
        estimates = np.empty(runs)
        for i in range(runs):
            prototype.random_state = i
            estimates[i] = prototype.fit(x, y).intercept_
        se = scale * np.sqrt(2.0) / np.sqrt(runs)  # Laplace sd = scale * sqrt(2)
        assert abs(estimates.mean() - truth) <= 4 * se

    def test_clipped_mean_sensitivity_by_direct_perturbation(self):
        # With residuals clipped to [-3s, 3s], replacing one of n samples
        # moves the mean by at most 6s/n.
        rng = np.random.default_rng(14)
        sigma_eps = 5.0
        for _ in range(100):
            n = int(rng.integers(2, 50))
            residuals = rng.uniform(-40, 40, size=n)
            clipped = np.clip(residuals, -3 * sigma_eps, 3 * sigma_eps)
            replacement = np.clip(rng.uniform(-40, 40), -3 * sigma_eps, 3 * sigma_eps)
            for i in range(n):
                perturbed = clipped.copy()
                perturbed[i] = replacement
                change = abs(perturbed.mean() - clipped.mean())
                assert change <= 6 * sigma_eps / n + 1e-12

    def test_requires_single_feature(self):
        with pytest.raises(ValueError):
            LocationRegressor().fit(np.zeros((5, 2)), np.zeros(5))
