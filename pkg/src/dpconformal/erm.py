"""Strongly convex ERM trainers with output perturbation.

Two families:

* A ridge-regularized linear model under a Lipschitz per-sample loss
  (absolute or Huber), privatized by adding Gaussian noise scaled to the
  closed-form L2 sensitivity ``2 * lipschitz / (ridge * n)`` of the minimizer.
* A one-parameter location model ``y = x + b`` whose intercept is the mean of
  the range-clipped residuals, privatized with Laplace noise at scale
  ``6 * sigma_eps / (n * epsilon)``.

The ridge problem is solved exactly through its Fenchel dual, a box-constrained
concave quadratic. The duality gap certifies a distance bound to the true
minimizer, which output perturbation needs: noise is calibrated to the exact
minimizer's sensitivity, so solver error must be measurable, not hoped for.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y, column_or_1d

from .budget import PrivacyBudget
from .mechanisms import gaussian_calibrate, laplace_sample
from .validation import as_generator, require_positive

LOSS_LIPSCHITZ = {"absolute": 1.0, "huber": 1.0}


def sensitivity_bound(lipschitz: float, ridge: float, n: int) -> float:
    """Worst-case L2 change of the regularized minimizer under one added point."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 2.0 * float(lipschitz) / (float(ridge) * n)


def clip_rows(design: np.ndarray, bound: float) -> np.ndarray:
    """Scale each row of the design matrix down to L2 norm <= bound."""
    norms = np.linalg.norm(design, axis=1)
    factors = np.minimum(1.0, bound / np.maximum(norms, np.finfo(float).tiny))
    return design * factors[:, None]


class ErmSolution:
    """Certified solution of the ridge-regularized Lipschitz-loss problem."""

    def __init__(self, theta, gap, tolerance, dual, converged):
        self.theta = theta
        self.gap = gap
        self.tolerance = tolerance
        self.dual = dual
        self.converged = converged


def _objective(theta, design, targets, loss, kappa, ridge, normalization):
    residuals = targets - design @ theta
    if loss == "absolute":
        per_sample = np.abs(residuals)
    else:
        absr = np.abs(residuals)
        per_sample = np.where(
            absr <= kappa, residuals**2 / (2.0 * kappa), absr - kappa / 2.0
        )
    return per_sample.sum() / normalization + 0.5 * ridge * float(theta @ theta)


def _dual_value(dual_vars, design, targets, kappa, ridge, n0):
    zv = design.T @ dual_vars
    return float(
        dual_vars @ targets
        - 0.5 * kappa * n0 * (dual_vars @ dual_vars)
        - (zv @ zv) / (2.0 * ridge)
    )


def _prox_loss(t, kappa, n0, rho):
    """Proximal map of loss(u)/n0 at penalty rho."""
    if kappa == 0.0:
        threshold = 1.0 / (n0 * rho)
        return np.sign(t) * np.maximum(np.abs(t) - threshold, 0.0)
    inner = t / (1.0 + 1.0 / (rho * kappa * n0))
    outer = t - np.sign(t) / (rho * n0)
    return np.where(np.abs(t) <= kappa + 1.0 / (rho * n0), inner, outer)


def _solve_admm(design, targets, kappa, ridge, n0, tol, max_iter):
    """ADMM on the primal; immune to the conditioning that defeats the dual
    solve when ridge is many orders below the loss scale."""
    n, d = design.shape
    rho = 1.0
    gram = design.T @ design
    identity = np.eye(d)

    def factor(rho):
        return np.linalg.cholesky(ridge * identity + rho * gram)

    chol = factor(rho)
    u = targets.astype(float).copy()
    w = np.zeros(n)
    theta = np.zeros(d)
    best = None
    scale = max(1.0, float(np.abs(targets).max(initial=0.0)))
    for iteration in range(max_iter):
        rhs = rho * design.T @ (targets - u + w)
        theta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        residual_pred = targets - design @ theta
        u_new = _prox_loss(residual_pred + w, kappa, n0, rho)
        w = w + residual_pred - u_new
        primal_res = float(np.linalg.norm(residual_pred - u_new))
        dual_res = float(rho * np.linalg.norm(design.T @ (u_new - u)))
        u = u_new
        if iteration % 25 == 24 or (primal_res < 1e-13 * scale and dual_res < 1e-13 * scale):
            # rho * w is a subgradient of the loss term at u, hence dual
            # feasible up to clipping.
            dual_vars = np.clip(rho * w, -1.0 / n0, 1.0 / n0)
            theta_dual = design.T @ dual_vars / ridge
            for candidate in (theta, theta_dual):
                gap = max(
                    _objective(candidate, design, targets, "absolute" if kappa == 0.0 else "huber", kappa, ridge, n0)
                    - _dual_value(dual_vars, design, targets, kappa, ridge, n0),
                    0.0,
                )
                if best is None or gap < best[1]:
                    best = (candidate.copy(), gap, dual_vars.copy())
            if best[1] <= 0.5 * ridge * tol**2:
                break
            if primal_res < 1e-13 * scale and dual_res < 1e-13 * scale:
                break
            if primal_res > 10.0 * dual_res and rho < 1e8:
                rho *= 2.0
                w /= 2.0
                chol = factor(rho)
            elif dual_res > 10.0 * primal_res and rho > 1e-8:
                rho /= 2.0
                w *= 2.0
                chol = factor(rho)
    theta, gap, dual_vars = best
    return theta, gap, dual_vars


def fit_lipschitz_erm(
    design: np.ndarray,
    targets: np.ndarray,
    *,
    loss: str = "absolute",
    huber_kappa: float = 1.0,
    ridge: float = 1.0,
    loss_normalization: int | None = None,
    tol: float = 1e-6,
    max_iter: int = 50_000,
) -> ErmSolution:
    """Minimize ``sum(loss(y_i - z_i @ theta)) / n0 + ridge/2 * ||theta||^2``.

    ``loss_normalization`` (default: the number of rows) is the divisor n0 of
    the loss sum; it is exposed so an augmented dataset can be fit under the
    same normalization as its base dataset, which is the convention under
    which the ``2 * lipschitz / (ridge * n)`` sensitivity bound is stated.

    The dual is ``max v.y - kappa*n0/2 ||v||^2 - ||Z.T v||^2 / (2*ridge)``
    over the box ``|v_i| <= 1/n0`` (``kappa = 0`` for the absolute loss), a
    smooth concave problem solved with L-BFGS-B. The primal point is recovered
    as ``theta = Z.T v / ridge`` and the duality gap bounds
    ``||theta - theta*|| <= sqrt(2 * gap / ridge)``.
    """
    if loss not in LOSS_LIPSCHITZ:
        raise ValueError(f"loss must be one of {sorted(LOSS_LIPSCHITZ)}, got {loss!r}")
    ridge = require_positive(ridge, "ridge")
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = design.shape[0]
    if n == 0:
        raise ValueError("cannot fit on an empty dataset")
    n0 = float(loss_normalization if loss_normalization is not None else n)
    kappa = require_positive(huber_kappa, "huber_kappa") if loss == "huber" else 0.0

    def negative_dual(v):
        zv = design.T @ v
        value = v @ targets - 0.5 * kappa * n0 * (v @ v) - (zv @ zv) / (2.0 * ridge)
        grad = targets - kappa * n0 * v - design @ (zv / ridge)
        return -value, -grad

    box = 1.0 / n0
    result = minimize(
        negative_dual,
        x0=np.zeros(n),
        jac=True,
        method="L-BFGS-B",
        bounds=[(-box, box)] * n,
        options={"maxiter": max_iter, "maxfun": 4 * max_iter, "ftol": 1e-16, "gtol": 1e-12},
    )
    dual_vars = np.clip(result.x, -box, box)
    theta = design.T @ dual_vars / ridge
    gap = max(
        _objective(theta, design, targets, loss, kappa, ridge, n0)
        - _dual_value(dual_vars, design, targets, kappa, ridge, n0),
        0.0,
    )
    if np.sqrt(2.0 * gap / ridge) > tol:
        # The dual curvature scales with 1/ridge; for extreme ridge values
        # L-BFGS-B stalls and ADMM takes over.
        admm_theta, admm_gap, admm_dual = _solve_admm(
            design, targets, kappa, ridge, n0, tol, max_iter
        )
        if admm_gap < gap:
            theta, gap, dual_vars = admm_theta, admm_gap, admm_dual
    tolerance = float(np.sqrt(2.0 * gap / ridge))
    converged = tolerance <= tol
    if not converged:
        warnings.warn(
            f"ERM solver reached certified tolerance {tolerance:.3e} "
            f"(target {tol:.1e}); duality gap {gap:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ErmSolution(theta, gap, tolerance, dual_vars, converged)


class LipschitzErmRegressor(RegressorMixin, BaseEstimator):
    """Linear model under a ridge-regularized Lipschitz loss (non-private).

    Rows of the (intercept-augmented) design matrix are clipped to
    ``feature_bound`` in L2 norm, so each per-sample loss is
    ``loss_slope * feature_bound``-Lipschitz in the parameters and the
    minimizer has sensitivity ``2 * lipschitz / (ridge * n)``. Predictions
    apply the same clipping.

    Parameters
    ----------
    loss : {"absolute", "huber"}
        Per-sample loss; both have slope at most 1 in the prediction.
        Squared loss is deliberately absent: it is not globally Lipschitz,
        so the sensitivity bound would not hold.
    huber_kappa : float
        Huber transition point (only used for ``loss="huber"``).
    ridge : float
        Strong-convexity modulus of the L2 penalty.
    feature_bound : float
        L2 clipping bound on the augmented feature rows.
    fit_intercept : bool
        Append a constant column before clipping.
    tol : float
        Target certified distance to the true minimizer.
    """

    def __init__(
        self,
        loss: str = "absolute",
        huber_kappa: float = 1.0,
        ridge: float = 1.0,
        feature_bound: float = 1.0,
        fit_intercept: bool = True,
        tol: float = 1e-6,
        max_iter: int = 50_000,
    ):
        self.loss = loss
        self.huber_kappa = huber_kappa
        self.ridge = ridge
        self.feature_bound = feature_bound
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_iter = max_iter

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of theta -> per-sample loss: slope * feature bound."""
        return LOSS_LIPSCHITZ[self.loss] * float(self.feature_bound)

    def _design(self, X: np.ndarray) -> np.ndarray:
        if self.fit_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return clip_rows(X, float(self.feature_bound))

    def fit(self, X, y, rng=None):
        X, y = check_X_y(X, y, ensure_min_features=0 if self.fit_intercept else 1)
        design = self._design(np.asarray(X, dtype=float))
        solution = fit_lipschitz_erm(
            design,
            y,
            loss=self.loss,
            huber_kappa=self.huber_kappa,
            ridge=self.ridge,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self.theta_ = solution.theta
        self.solver_gap_ = solution.gap
        self.solver_tolerance_ = solution.tolerance
        self.n_features_in_ = X.shape[1]
        self.budget_spent_ = PrivacyBudget(0.0, 0.0)
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(np.asarray(X, dtype=float), ensure_min_features=0)
        return self._design(X) @ self.theta_


class PrivateErmRegressor(LipschitzErmRegressor):
    """ERM release privatized by Gaussian output perturbation.

    Fits the exact regularized minimizer, then adds i.i.d. Gaussian noise per
    coordinate with the scale required by the (epsilon, delta) budget at the
    minimizer's closed-form sensitivity. Only the perturbed parameters are
    retained on the fitted estimator.
    """

    def __init__(
        self,
        loss: str = "absolute",
        huber_kappa: float = 1.0,
        ridge: float = 1.0,
        feature_bound: float = 1.0,
        fit_intercept: bool = True,
        tol: float = 1e-6,
        max_iter: int = 50_000,
        epsilon: float = 1.0,
        delta: float = 1e-5,
        random_state=None,
    ):
        super().__init__(
            loss=loss,
            huber_kappa=huber_kappa,
            ridge=ridge,
            feature_bound=feature_bound,
            fit_intercept=fit_intercept,
            tol=tol,
            max_iter=max_iter,
        )
        self.epsilon = epsilon
        self.delta = delta
        self.random_state = random_state

    def fit(self, X, y, rng=None):
        budget = PrivacyBudget(self.epsilon, self.delta)
        if budget.delta <= 0.0:
            raise ValueError("Gaussian output perturbation requires delta > 0")
        rng = as_generator(self.random_state if rng is None else rng)
        super().fit(X, y)
        n = np.asarray(y).shape[0]
        tau = sensitivity_bound(self.lipschitz, self.ridge, n)
        calibration = gaussian_calibrate(tau, budget)
        self.theta_ = self.theta_ + rng.normal(0.0, calibration.sigma, self.theta_.shape)
        self.calibration_ = calibration
        self.sensitivity_ = tau
        self.budget_spent_ = budget
        return self


class LocationRegressor(RegressorMixin, BaseEstimator):
    """Unit-slope location model ``y = x + b`` with ``b`` the mean residual.

    Expects a single feature column. Not private; used as the oracle and
    split-conformal trainer on the additive synthetic process.
    """

    def __init__(self):
        pass

    @staticmethod
    def _residuals(X, y):
        X = check_array(np.asarray(X, dtype=float))
        if X.shape[1] != 1:
            raise ValueError(
                f"the location model expects exactly one feature, got {X.shape[1]}"
            )
        return column_or_1d(y) - X[:, 0]

    def fit(self, X, y, rng=None):
        residuals = self._residuals(X, y)
        if residuals.size == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.intercept_ = float(residuals.mean())
        self.budget_spent_ = PrivacyBudget(0.0, 0.0)
        return self

    def predict(self, X):
        check_is_fitted(self, "intercept_")
        X = check_array(np.asarray(X, dtype=float))
        return X[:, 0] + self.intercept_


class LaplaceLocationRegressor(LocationRegressor):
    """Laplace-perturbed location estimator.

    Residuals ``y - x`` are clipped to ``[-3 * sigma_eps, 3 * sigma_eps]``
    before averaging, so replacing one sample moves the mean by at most
    ``6 * sigma_eps / n``; Laplace noise at scale ``6 * sigma_eps / (n *
    epsilon)`` then makes the release epsilon-DP. On data generated with
    noise truncated to that range the clipping never binds.
    """

    def __init__(self, sigma_eps: float = 5.0, epsilon: float = 1.0, random_state=None):
        self.sigma_eps = sigma_eps
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X, y, rng=None):
        sigma_eps = require_positive(self.sigma_eps, "sigma_eps")
        epsilon = require_positive(self.epsilon, "epsilon")
        rng = as_generator(self.random_state if rng is None else rng)
        residuals = self._residuals(X, y)
        n = residuals.size
        if n == 0:
            raise ValueError("cannot fit on an empty dataset")
        clipped = np.clip(residuals, -3.0 * sigma_eps, 3.0 * sigma_eps)
        scale = 6.0 * sigma_eps / (n * epsilon)
        self.noise_scale_ = scale
        self.intercept_ = float(clipped.mean() + laplace_sample(scale, rng))
        self.budget_spent_ = PrivacyBudget(epsilon, 0.0)
        return self
