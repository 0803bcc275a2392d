"""Conformal interval constructors, from the oracle benchmark to the fully
private pipeline.

All constructors are estimators: ``fit(X, y)`` performs training plus
calibration and stores the threshold; ``predict_interval(X)`` returns one
interval per row. The calibration audit trail lives in ``record_``.

Privacy labeling matters here. The no-split constructor that calibrates at a
privacy-adjusted level on raw scores (``DifferentialConformalRegressor``)
trains privately but releases a quantile computed directly on the data: its
record carries ``private_release=False``. Only the constructors that release
the threshold through the private quantile mechanism are end-to-end private.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .budget import PrivacyBudget, compose
from .quantile import (
    BinGrid,
    DpqRequest,
    InfeasibleLevelError,
    ScoreVector,
    conformal_index,
    corrected_level,
    dpq_release,
    rank_based_grid,
    uniform_grid,
)
from .scores import ScoreFunction, absolute_residual_score
from .validation import as_generator, require_unit_open

METHOD_ORACLE = "oracle"
METHOD_SPLIT = "split"
METHOD_DIFFERENTIAL = "differential"
METHOD_DPCP = "dpcp"
METHOD_PSCP = "pscp"


class InvalidLevelError(ValueError):
    """alpha <= delta leaves no room for the privacy-adjusted level."""


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval [center - radius, center + radius].

    An infinite radius is the whole-line sentinel: calibration could not
    support a finite threshold and the interval covers trivially.
    """

    center: float
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")

    @property
    def lower(self) -> float:
        return self.center - self.radius

    @property
    def upper(self) -> float:
        return self.center + self.radius

    @property
    def length(self) -> float:
        return 2.0 * self.radius

    @property
    def is_whole_line(self) -> bool:
        return math.isinf(self.radius)

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


@dataclass(frozen=True)
class CalibrationRecord:
    """Audit trail of one calibration: threshold, level, and budget spent.

    ``epsilon_spent`` labels the budget consumed to produce the released
    model-plus-threshold pair; ``calibration_epsilon`` is the share spent by
    the threshold release alone (zero whenever the quantile was computed
    directly on the data). ``private_release`` is False when any raw-data
    statistic was released unprotected.
    """

    threshold: float
    level_used: float
    epsilon_spent: PrivacyBudget
    method: str
    private_release: bool
    calibration_epsilon: PrivacyBudget = PrivacyBudget(0.0, 0.0)
    infeasible: bool = False
    detail: dict = field(default_factory=dict)


def empirical_conformal_quantile(scores, alpha: float) -> float:
    """The ceil((1-alpha)(n+1))-th smallest score, or +inf when out of range.

    The +inf sentinel yields the whole-line interval, which keeps the coverage
    guarantee valid when the calibration set is too small for the level.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a nonempty 1-d array")
    k = conformal_index(alpha, scores.size)
    if k > scores.size:
        return float("inf")
    return float(np.partition(scores, k - 1)[k - 1])


def invert_threshold(score_fn: ScoreFunction, model, X, threshold: float):
    """Turn a raw-score threshold into per-row (lower, upper) interval bounds."""
    X = np.asarray(X, dtype=float)
    return score_fn.interval(model, X, threshold)


def _fit_trainer(trainer, X, y, rng):
    if "rng" in inspect.signature(trainer.fit).parameters:
        return trainer.fit(X, y, rng=rng)
    return trainer.fit(X, y)


def _configure_private_trainer(prototype, epsilon: float, delta: float):
    """Clone a trainer and point its budget parameters at (epsilon, delta).

    A trainer without an ``epsilon`` parameter cannot enforce a privacy
    budget; silently accepting one here would be a privacy bug.
    """
    params = prototype.get_params()
    if "epsilon" not in params:
        raise ValueError(
            f"{type(prototype).__name__} takes no epsilon parameter and cannot "
            "be used as the private trainer"
        )
    trainer = clone(prototype)
    trainer.set_params(epsilon=epsilon)
    if "delta" in params:
        trainer.set_params(delta=delta)
    return trainer


def _identity_level(alpha, n_cal, epsilon, grid):
    return alpha


def _log_grid_level(alpha, n_cal, epsilon, grid):
    # Net correction alpha - 2*ln(M)/(n*eps) after the release's own
    # 2/(n*eps) shift; the log(M) factor mirrors the exponential-mechanism
    # high-probability utility bound and is deliberately conservative.
    m = max(grid.num_candidates, 2)
    return alpha - 2.0 * (math.log(m) - 1.0) / (n_cal * epsilon)


LEVEL_RULES = {"identity": _identity_level, "log-grid": _log_grid_level}


def _rule_min_cal_size(rule, alpha, epsilon, grid, cap: int = 2**40) -> int | None:
    """Smallest calibration size at which the corrected level is feasible.

    Both presets correct by a term shrinking in n, so feasibility is monotone
    and a doubling search plus bisection finds the threshold. Returns None if
    even the cap is infeasible (pathological custom rules).
    """

    def feasible(n):
        beta = rule(alpha, n, epsilon, grid)
        return 0.0 < beta and beta > 2.0 / (n * epsilon)

    high = 1
    while high <= cap and not feasible(high):
        high *= 2
    if high > cap:
        return None
    low = max(high // 2, 1)
    while low + 1 < high:
        mid = (low + high) // 2
        if feasible(mid):
            high = mid
        else:
            low = mid
    return high if feasible(high) else None


class _ConformalRegressor(RegressorMixin, BaseEstimator):
    """Shared prediction surface: centers from the fitted model, symmetric
    intervals from the calibrated raw-score threshold."""

    def predict(self, X):
        check_is_fitted(self, "trainer_")
        X = check_array(np.asarray(X, dtype=float))
        return self.trainer_.predict(X)

    def predict_interval(self, X):
        check_is_fitted(self, "threshold_")
        X = check_array(np.asarray(X, dtype=float))
        lower, upper = self._score_fn_.interval(self.trainer_, X, self.threshold_)
        return np.column_stack([lower, upper])

    def interval_at(self, x_row) -> PredictionInterval:
        x = np.atleast_2d(np.asarray(x_row, dtype=float))
        center = float(self.trainer_.predict(x)[0])
        return PredictionInterval(center=center, radius=float(self.threshold_))


class SplitConformalRegressor(_ConformalRegressor):
    """Split conformal prediction: train on one part, calibrate on the other.

    The threshold is the conformal empirical quantile of the calibration
    scores at the requested level; no privacy adjustment is applied, so the
    trainer is normally non-private.

    Parameters
    ----------
    trainer : estimator
        Prototype regressor; cloned before fitting.
    alpha : float
        Target miscoverage level.
    cal_fraction : float
        Fraction of rows routed to calibration when no explicit calibration
        set is passed to ``fit``.
    score : ScoreFunction, optional
        Defaults to the absolute residual.
    """

    def __init__(self, trainer=None, alpha=0.1, cal_fraction=0.5, score=None, random_state=None):
        self.trainer = trainer
        self.alpha = alpha
        self.cal_fraction = cal_fraction
        self.score = score
        self.random_state = random_state

    def fit(self, X, y, X_cal=None, y_cal=None, rng=None):
        X, y = check_X_y(X, y)
        require_unit_open(self.alpha, "alpha")
        rng = as_generator(self.random_state if rng is None else rng)
        self._score_fn_ = self.score or absolute_residual_score()
        if X_cal is None:
            order = rng.permutation(X.shape[0])
            n_cal = int(round(self.cal_fraction * X.shape[0]))
            if n_cal < 1 or n_cal >= X.shape[0]:
                raise ValueError(
                    f"cal_fraction={self.cal_fraction} leaves an empty partition "
                    f"for n={X.shape[0]}"
                )
            cal_idx, train_idx = order[:n_cal], order[n_cal:]
            X_cal, y_cal = X[cal_idx], y[cal_idx]
            X, y = X[train_idx], y[train_idx]
        else:
            X_cal, y_cal = check_X_y(X_cal, y_cal)
        self.trainer_ = _fit_trainer(clone(self.trainer), X, y, rng)
        cal_scores = self._score_fn_.raw(self.trainer_, X_cal, y_cal)
        self.threshold_ = empirical_conformal_quantile(cal_scores, self.alpha)
        self.record_ = CalibrationRecord(
            threshold=self.threshold_,
            level_used=self.alpha,
            epsilon_spent=getattr(self.trainer_, "budget_spent_", PrivacyBudget(0.0, 0.0)),
            method=METHOD_SPLIT,
            private_release=False,
            detail={"n_cal": int(np.asarray(y_cal).size)},
        )
        return self


class DifferentialConformalRegressor(_ConformalRegressor):
    """No-split conformal calibration at a privacy-adjusted level.

    Trains (typically privately) on all n points, scores the same n points,
    and thresholds at level ``exp(-epsilon) * (alpha - delta)``. The stability
    of the private trainer across one-point changes is what makes reusing the
    training data valid. The quantile itself is computed on the raw scores,
    so the released interval is NOT differentially private; the record says
    so explicitly.

    ``epsilon``/``delta`` default to the budget the trainer reports having
    spent; pass them explicitly to adjust at a declared budget instead.
    """

    def __init__(self, trainer=None, alpha=0.1, epsilon=None, delta=None, score=None, random_state=None):
        self.trainer = trainer
        self.alpha = alpha
        self.epsilon = epsilon
        self.delta = delta
        self.score = score
        self.random_state = random_state

    def fit(self, X, y, rng=None):
        X, y = check_X_y(X, y)
        require_unit_open(self.alpha, "alpha")
        rng = as_generator(self.random_state if rng is None else rng)
        self._score_fn_ = self.score or absolute_residual_score()
        self.trainer_ = _fit_trainer(clone(self.trainer), X, y, rng)
        spent = getattr(self.trainer_, "budget_spent_", PrivacyBudget(0.0, 0.0))
        epsilon = spent.epsilon if self.epsilon is None else float(self.epsilon)
        delta = spent.delta if self.delta is None else float(self.delta)
        if self.alpha <= delta:
            raise InvalidLevelError(
                f"alpha={self.alpha} must exceed delta={delta} for the adjusted level"
            )
        level = math.exp(-epsilon) * (self.alpha - delta)
        scores = self._score_fn_.raw(self.trainer_, X, y)
        self.threshold_ = empirical_conformal_quantile(scores, level)
        self.adjusted_level_ = level
        self.record_ = CalibrationRecord(
            threshold=self.threshold_,
            level_used=level,
            epsilon_spent=spent,
            method=METHOD_DIFFERENTIAL,
            private_release=False,
            detail={"declared_epsilon": epsilon, "declared_delta": delta},
        )
        return self


def _resolve_grid(grid, normalized_scores):
    if grid is None or (isinstance(grid, str) and grid == "uniform"):
        return uniform_grid(), "uniform"
    if isinstance(grid, str) and grid == "rank":
        # Experimental: edges depend on the data, outside the fixed-grid
        # privacy analysis.
        return rank_based_grid(normalized_scores), "rank"
    if isinstance(grid, BinGrid):
        return grid, "fixed"
    raise ValueError(f"grid must be a BinGrid, 'uniform', or 'rank', got {grid!r}")


class DpcpRegressor(_ConformalRegressor):
    """End-to-end private conformal prediction on the full dataset.

    A private trainer consumes ``(epsilon1, delta)`` on all n points; scores
    on the same n points are normalized to [0, 1]; the threshold is released
    by the private quantile mechanism with budget ``epsilon2 = epsilon -
    epsilon1`` at the adjusted level ``exp(-epsilon1) * (alpha - delta)``.
    The released pair (model, threshold) is ``(epsilon1 + epsilon2, delta)``-DP
    by sequential composition.

    Parameters
    ----------
    trainer : estimator
        Private trainer prototype exposing an ``epsilon`` (and usually
        ``delta``) parameter; it is cloned and pointed at (epsilon1, delta).
    train_fraction_of_epsilon : float
        epsilon1 / epsilon. The default even split matches the budget
        allocation used throughout the experiments.
    score_bound : float
        Normalization bound for raw scores.
    grid : BinGrid | "uniform" | "rank"
        Candidate thresholds in normalized units; "rank" is experimental.
    """

    def __init__(
        self,
        trainer=None,
        alpha=0.1,
        epsilon=0.1,
        delta=1e-5,
        train_fraction_of_epsilon=0.5,
        score_bound=1.0,
        grid=None,
        score=None,
        random_state=None,
    ):
        self.trainer = trainer
        self.alpha = alpha
        self.epsilon = epsilon
        self.delta = delta
        self.train_fraction_of_epsilon = train_fraction_of_epsilon
        self.score_bound = score_bound
        self.grid = grid
        self.score = score
        self.random_state = random_state

    def _budget_split(self):
        require_unit_open(self.train_fraction_of_epsilon, "train_fraction_of_epsilon")
        epsilon1 = float(self.epsilon) * float(self.train_fraction_of_epsilon)
        epsilon2 = float(self.epsilon) - epsilon1
        return epsilon1, epsilon2

    def adjusted_level(self) -> float:
        epsilon1, _ = self._budget_split()
        if self.alpha <= self.delta:
            raise InvalidLevelError(
                f"alpha={self.alpha} must exceed delta={self.delta}"
            )
        return math.exp(-epsilon1) * (float(self.alpha) - float(self.delta))

    def fit(self, X, y, rng=None):
        X, y = check_X_y(X, y)
        require_unit_open(self.alpha, "alpha")
        rng = as_generator(self.random_state if rng is None else rng)
        epsilon1, epsilon2 = self._budget_split()
        level = self.adjusted_level()
        self._score_fn_ = self.score or absolute_residual_score(bound=self.score_bound)
        trainer = _configure_private_trainer(self.trainer, epsilon1, self.delta)
        self.trainer_ = _fit_trainer(trainer, X, y, rng)
        raw = self._score_fn_.raw(self.trainer_, X, y)
        normalized = ScoreVector(self._score_fn_.normalize(raw), source=METHOD_DPCP)
        grid, grid_kind = _resolve_grid(self.grid, normalized.scores)
        released = dpq_release(normalized, DpqRequest(level, epsilon2, grid), rng)
        self.threshold_ = self._score_fn_.denormalize(released)
        self.adjusted_level_ = level
        self.record_ = CalibrationRecord(
            threshold=self.threshold_,
            level_used=level,
            epsilon_spent=compose(
                PrivacyBudget(epsilon1, self.delta), PrivacyBudget(epsilon2, 0.0)
            ),
            method=METHOD_DPCP,
            private_release=grid_kind != "rank",
            calibration_epsilon=PrivacyBudget(epsilon2, 0.0),
            detail={"epsilon1": epsilon1, "epsilon2": epsilon2, "grid": grid_kind},
        )
        return self


class PscpRegressor(_ConformalRegressor):
    """Private split conformal baseline: half the data per stage.

    Trains privately with ``(epsilon/2, delta)`` on one half and releases the
    threshold from the other half's scores through the private quantile
    mechanism with ``epsilon/2``. The input level handed to the release comes
    from a pluggable correction rule; the rule name is recorded so results
    always state which baseline variant they were produced against.

    ``level_rule="identity"`` feeds the target level straight through (the
    release applies its own 2/(n*eps) correction); ``"log-grid"`` applies a
    more conservative log(M)-type correction.
    """

    def __init__(
        self,
        trainer=None,
        alpha=0.1,
        epsilon=0.1,
        delta=1e-5,
        level_rule="identity",
        score_bound=1.0,
        grid=None,
        score=None,
        random_state=None,
    ):
        self.trainer = trainer
        self.alpha = alpha
        self.epsilon = epsilon
        self.delta = delta
        self.level_rule = level_rule
        self.score_bound = score_bound
        self.grid = grid
        self.score = score
        self.random_state = random_state

    def fit(self, X, y, rng=None):
        X, y = check_X_y(X, y)
        require_unit_open(self.alpha, "alpha")
        if callable(self.level_rule):
            rule_name, rule = getattr(self.level_rule, "__name__", "custom"), self.level_rule
        else:
            if self.level_rule not in LEVEL_RULES:
                raise ValueError(
                    f"level_rule must be callable or one of {sorted(LEVEL_RULES)}"
                )
            rule_name, rule = self.level_rule, LEVEL_RULES[self.level_rule]
        rng = as_generator(self.random_state if rng is None else rng)
        half_epsilon = float(self.epsilon) / 2.0
        self._score_fn_ = self.score or absolute_residual_score(bound=self.score_bound)

        order = rng.permutation(X.shape[0])
        n_cal = X.shape[0] // 2
        if n_cal < 1:
            raise ValueError("need at least 2 rows to split in half")
        cal_idx, train_idx = order[:n_cal], order[n_cal:]
        trainer = _configure_private_trainer(self.trainer, half_epsilon, self.delta)
        self.trainer_ = _fit_trainer(trainer, X[train_idx], y[train_idx], rng)

        raw = self._score_fn_.raw(self.trainer_, X[cal_idx], y[cal_idx])
        normalized = ScoreVector(self._score_fn_.normalize(raw), source=METHOD_PSCP)
        grid, grid_kind = _resolve_grid(self.grid, normalized.scores)
        beta = rule(float(self.alpha), n_cal, half_epsilon, grid)
        if not 0.0 < beta or beta <= 2.0 / (n_cal * half_epsilon):
            raise InfeasibleLevelError(
                float(self.alpha),
                n_cal,
                half_epsilon,
                min_n=_rule_min_cal_size(rule, float(self.alpha), half_epsilon, grid),
            )
        released = dpq_release(normalized, DpqRequest(beta, half_epsilon, grid), rng)
        self.threshold_ = self._score_fn_.denormalize(released)
        self.record_ = CalibrationRecord(
            threshold=self.threshold_,
            level_used=beta,
            epsilon_spent=compose(
                PrivacyBudget(half_epsilon, self.delta), PrivacyBudget(half_epsilon, 0.0)
            ),
            method=METHOD_PSCP,
            private_release=grid_kind != "rank",
            calibration_epsilon=PrivacyBudget(half_epsilon, 0.0),
            detail={"level_rule": rule_name, "n_cal": int(n_cal), "grid": grid_kind},
        )
        return self


def oracle_interval(trainer, X, y, x_new, y_new, alpha: float, score=None) -> PredictionInterval:
    """The infeasible full-data benchmark interval at one test point.

    Fits the (non-private) trainer on the dataset augmented with the test
    pair itself, scores all n+1 points, and thresholds at the
    ceil((1-alpha)(n+1))-th smallest of those n+1 scores. Infeasible in
    practice because it sees ``y_new``; used only to measure how close a
    constructor gets to full-data efficiency.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    score_fn = score or absolute_residual_score()
    x_row = np.atleast_2d(np.asarray(x_new, dtype=float))
    X_aug = np.vstack([X, x_row])
    y_aug = np.append(y, float(y_new))
    model = clone(trainer).fit(X_aug, y_aug)
    scores = score_fn.raw(model, X_aug, y_aug)
    k = conformal_index(alpha, y.size)
    radius = float(np.partition(scores, k - 1)[k - 1])
    center = float(model.predict(x_row)[0])
    return PredictionInterval(center=center, radius=radius)
