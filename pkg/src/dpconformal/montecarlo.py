"""Batched coverage studies.

The coverage guarantees in this package are statements about probabilities
over repeated draws; checking them at meaningful precision needs 1e5-scale
repetition counts, far beyond what per-trial estimator objects can do in
reasonable time. The kernels here vectorize whole batches of trials for the
location-model pipelines and the private quantile release. Each kernel is a
pure function of arrays, so small instances can be cross-checked against the
estimator path on identical data.
"""

from __future__ import annotations

import numpy as np

from .datagen import SyntheticSpec, truncated_normal
from .mechanisms import laplace_sample
from .quantile import BinGrid, conformal_index, corrected_level, uniform_grid
from .validation import as_generator


def _kth_smallest_rows(matrix: np.ndarray, k: int) -> np.ndarray:
    return np.partition(matrix, k - 1, axis=1)[:, k - 1]


def split_coverage_kernel(train_residuals, cal_residuals, test_residuals, alpha: float):
    """Split-conformal coverage indicators for a batch of location-model trials.

    Rows are independent trials; the intercept is the mean of each trial's
    training residuals, scores are absolute deviations of the calibration
    residuals from it, and the test point is covered when its score is at or
    below the conformal empirical quantile.
    """
    train_residuals = np.asarray(train_residuals, dtype=float)
    cal_residuals = np.asarray(cal_residuals, dtype=float)
    test_residuals = np.asarray(test_residuals, dtype=float)
    intercept = train_residuals.mean(axis=1)
    k = conformal_index(alpha, cal_residuals.shape[1])
    if k > cal_residuals.shape[1]:
        return np.ones(cal_residuals.shape[0], dtype=bool)
    thresholds = _kth_smallest_rows(np.abs(cal_residuals - intercept[:, None]), k)
    return np.abs(test_residuals - intercept) <= thresholds


def split_coverage_trials(
    spec: SyntheticSpec,
    n_train: int,
    n_cal: int,
    alpha: float,
    trials: int,
    rng,
    chunk: int = 10_000,
) -> float:
    """Empirical coverage of split CP over fresh synthetic trials."""
    rng = as_generator(rng)
    covered = 0
    remaining = trials
    while remaining > 0:
        size = min(chunk, remaining)
        noise = truncated_normal(
            spec.mu_eps, spec.sigma_eps, spec.noise_half_range, size * (n_train + n_cal + 1), rng
        ).reshape(size, -1)
        flags = split_coverage_kernel(
            noise[:, :n_train], noise[:, n_train:-1], noise[:, -1], alpha
        )
        covered += int(flags.sum())
        remaining -= size
    return covered / trials


def differential_coverage_kernel(residuals, laplace_noise, level: float):
    """No-split adjusted-level coverage indicators for a batch of trials.

    Each row holds n+1 residuals: the first n train the private intercept and
    provide the calibration scores; the last is the test point. ``level`` is
    the already privacy-adjusted quantile level.
    """
    residuals = np.asarray(residuals, dtype=float)
    laplace_noise = np.asarray(laplace_noise, dtype=float)
    fit = residuals[:, :-1]
    intercept = fit.mean(axis=1) + laplace_noise
    k = conformal_index(level, fit.shape[1])
    if k > fit.shape[1]:
        return np.ones(residuals.shape[0], dtype=bool)
    thresholds = _kth_smallest_rows(np.abs(fit - intercept[:, None]), k)
    return np.abs(residuals[:, -1] - intercept) <= thresholds


def differential_coverage_trials(
    spec: SyntheticSpec,
    n: int,
    epsilon: float,
    delta: float,
    alpha: float,
    trials: int,
    rng,
    chunk: int = 10_000,
) -> float:
    """Empirical coverage of the no-split constructor with the private
    location trainer, at the declared (epsilon, delta)."""
    rng = as_generator(rng)
    level = float(np.exp(-epsilon) * (alpha - delta))
    scale = 6.0 * spec.sigma_eps / (n * epsilon)
    covered = 0
    remaining = trials
    while remaining > 0:
        size = min(chunk, remaining)
        noise = truncated_normal(
            spec.mu_eps, spec.sigma_eps, spec.noise_half_range, size * (n + 1), rng
        ).reshape(size, n + 1)
        lap = laplace_sample(scale, rng, size=size)
        flags = differential_coverage_kernel(noise, lap, level)
        covered += int(flags.sum())
        remaining -= size
    return covered / trials


def dpq_distribution_batch(scores, alpha0: float, grid: BinGrid, epsilon: float) -> np.ndarray:
    """Per-row analytic selection probabilities of the private quantile.

    Matches the single-instance release exactly: strict-inequality counts,
    penalty max of the two sides, min-shift stabilization, softmax.
    """
    scores = np.sort(np.asarray(scores, dtype=float), axis=1)
    candidates = grid.candidates
    n_rows, n_scores = scores.shape
    below = np.empty((n_rows, candidates.size))
    above = np.empty((n_rows, candidates.size))
    for i in range(n_rows):
        below[i] = np.searchsorted(scores[i], candidates, side="left")
        above[i] = n_scores - np.searchsorted(scores[i], candidates, side="right")
    utilities = np.maximum(below / (1.0 - alpha0), above / alpha0)
    sensitivity = max(1.0 / (1.0 - alpha0), 1.0 / alpha0)
    shifted = utilities - utilities.min(axis=1, keepdims=True)
    raw = np.exp(-epsilon * shifted / (2.0 * sensitivity))
    return raw / raw.sum(axis=1, keepdims=True)


def dpq_release_batch(scores, alpha0: float, grid: BinGrid, epsilon: float, rng) -> np.ndarray:
    """Release one private quantile per row."""
    rng = as_generator(rng)
    probabilities = dpq_distribution_batch(scores, alpha0, grid, epsilon)
    cumulative = np.cumsum(probabilities, axis=1)
    uniforms = rng.random(probabilities.shape[0])
    # #{j: cum_j <= u} reproduces searchsorted(cum, u, side="right"), keeping
    # the batched draw bit-compatible with the scalar release.
    indices = (cumulative <= uniforms[:, None]).sum(axis=1)
    indices = np.minimum(indices, probabilities.shape[1] - 1)
    return grid.candidates[indices]


def dpq_coverage_trials(
    n_scores: int,
    beta: float,
    epsilon: float,
    trials: int,
    rng,
    grid: BinGrid | None = None,
    chunk: int = 2_000,
) -> float:
    """P(score <= released quantile) for i.i.d. uniform scores.

    The tracked score is one of the calibration scores themselves (the first
    column), which is the quantity the release's coverage bounds speak about.
    """
    rng = as_generator(rng)
    grid = grid or uniform_grid()
    alpha0 = corrected_level(beta, n_scores, epsilon)
    covered = 0
    remaining = trials
    while remaining > 0:
        size = min(chunk, remaining)
        scores = rng.random((size, n_scores))
        released = dpq_release_batch(scores, alpha0, grid, epsilon, rng)
        covered += int((scores[:, 0] <= released).sum())
        remaining -= size
    return covered / trials
