"""Differentially private quantile release over a fixed bin grid.

The mechanism scores every candidate threshold by how badly it misses the
target quantile of the calibration scores, then samples a threshold through
the exponential mechanism. Scores must already be normalized to [0, 1]; the
conformal layer owns that normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .mechanisms import ExpMechWeights, exp_mech_probabilities, exp_mech_sample
from .validation import as_float_array, require_count, require_positive, require_unit_open


class InfeasibleLevelError(ValueError):
    """The requested level cannot be corrected: level <= 2 / (n * epsilon).

    Carries the minimal sample size and minimal epsilon that would make the
    request feasible, so callers can surface an actionable diagnostic.
    """

    def __init__(self, level: float, n: int, epsilon: float, min_n: int | None = None):
        self.level = level
        self.n = n
        self.epsilon = epsilon
        if min_n is None:
            # Search upward from the real-arithmetic estimate: float rounding
            # can leave the closed-form candidate infeasible by one. Only
            # refine at actionable scales; unit increments cannot move the
            # float quotient for astronomically large estimates.
            min_n = max(math.floor(2.0 / (level * epsilon)), 1)
            if min_n <= 10**12:
                while not level > 2.0 / (min_n * epsilon):
                    min_n += 1
        self.min_n = min_n
        self.min_epsilon = 2.0 / (n * level)
        super().__init__(
            f"level {level} is not strictly greater than 2/(n*epsilon) = "
            f"{2.0 / (n * epsilon)} at n={n}, epsilon={epsilon}; "
            f"need n >= {self.min_n} at this epsilon, or epsilon > {self.min_epsilon} "
            f"at this n, or a larger level"
        )


@dataclass(frozen=True)
class BinGrid:
    """Ordered candidate thresholds 0 = e_0 < e_1 < ... < e_M = 1.

    ``e_0`` anchors the grid but is never released; the selection runs over
    the M candidates ``e_1 .. e_M``.
    """

    edges: np.ndarray

    def __post_init__(self):
        edges = as_float_array(self.edges, "edges")
        if edges.size < 2:
            raise ValueError("a grid needs at least two edges (M >= 1)")
        if edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValueError(
                f"grid endpoints must be exactly 0 and 1, got [{edges[0]}, {edges[-1]}]"
            )
        if np.any(np.diff(edges) <= 0):
            raise ValueError("grid edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def num_candidates(self) -> int:
        return self.edges.size - 1

    @property
    def candidates(self) -> np.ndarray:
        return self.edges[1:]


def uniform_grid(num_bins: int = 1000) -> BinGrid:
    """Evenly spaced grid with ``num_bins`` candidate thresholds on (0, 1]."""
    num_bins = require_count(num_bins, "num_bins")
    return BinGrid(np.linspace(0.0, 1.0, num_bins + 1))


def rank_based_grid(scores) -> BinGrid:
    """Candidate thresholds at midpoints between consecutive order statistics.

    Experimental: the grid depends on the data, so the fixed-grid privacy
    argument for the release does not apply as-is. Exposed for efficiency
    experiments only; the default pipeline uses :func:`uniform_grid`.
    """
    values = np.sort(as_float_array(scores, "scores"))
    midpoints = (values[:-1] + values[1:]) / 2.0 if values.size > 1 else np.empty(0)
    midpoints = np.clip(midpoints, 0.0, 1.0)
    interior = np.unique(midpoints)
    interior = interior[(interior > 0.0) & (interior < 1.0)]
    return BinGrid(np.concatenate(([0.0], interior, [1.0])))


@dataclass(frozen=True)
class ScoreVector:
    """Normalized nonconformity scores, all in [0, 1]."""

    scores: np.ndarray
    source: str = "unknown"

    def __post_init__(self):
        scores = as_float_array(self.scores, "scores")
        if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
            raise ValueError(
                "scores must be normalized to [0, 1] before private quantile "
                f"release; observed range [{scores.min()}, {scores.max()}]"
            )
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class DpqRequest:
    """Parameters of one private quantile release."""

    level: float
    epsilon: float
    grid: BinGrid = field(default_factory=uniform_grid)

    def __post_init__(self):
        require_unit_open(self.level, "level")
        require_positive(self.epsilon, "epsilon")


def corrected_level(beta: float, n: int, epsilon: float) -> float:
    """Shift the requested level down by the privacy correction 2/(n*epsilon).

    Raises
    ------
    InfeasibleLevelError
        If ``beta <= 2/(n*epsilon)`` (strict inequality required), i.e. the
        calibration set is too small or the budget too tight for the level.
    """
    beta = require_unit_open(beta, "beta")
    n = require_count(n, "n")
    epsilon = require_positive(epsilon, "epsilon")
    bound = 2.0 / (n * epsilon)
    if not beta > bound:
        raise InfeasibleLevelError(beta, n, epsilon)
    return beta - bound


def threshold_counts(scores: np.ndarray, grid: BinGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-candidate counts of scores strictly below / strictly above each edge.

    Scores exactly equal to an edge count in neither direction.
    """
    ordered = np.sort(np.asarray(scores, dtype=float))
    below = np.searchsorted(ordered, grid.candidates, side="left")
    above = ordered.size - np.searchsorted(ordered, grid.candidates, side="right")
    return below.astype(float), above.astype(float)


def dpq_utilities(
    scores: ScoreVector, alpha0: float, grid: BinGrid, epsilon: float
) -> ExpMechWeights:
    """Penalties for every candidate threshold at the corrected level.

    Candidate e_j is penalized by
    ``max(#below / (1 - alpha0), #above / alpha0)``; the penalty changes by at
    most ``max(1/(1-alpha0), 1/alpha0)`` when one score is added or removed,
    which is exactly the sensitivity used for the exponential mechanism.
    """
    alpha0 = require_unit_open(alpha0, "alpha0")
    below, above = threshold_counts(scores.scores, grid)
    utilities = np.maximum(below / (1.0 - alpha0), above / alpha0)
    sensitivity = max(1.0 / (1.0 - alpha0), 1.0 / alpha0)
    return ExpMechWeights(utilities=utilities, sensitivity=sensitivity, epsilon=epsilon)


def dpq_distribution(
    scores: ScoreVector, alpha0: float, grid: BinGrid, epsilon: float
) -> np.ndarray:
    """Analytic selection probabilities over the grid candidates."""
    return exp_mech_probabilities(dpq_utilities(scores, alpha0, grid, epsilon))


def dpq_release(
    scores: ScoreVector, request: DpqRequest, rng: np.random.Generator
) -> float:
    """Release one grid candidate as the private quantile of the scores.

    The request level is first corrected by 2/(N*epsilon); the exponential
    mechanism then selects among ``grid.candidates``. The release consumes
    ``request.epsilon`` of pure-epsilon budget.
    """
    alpha0 = corrected_level(request.level, scores.size, request.epsilon)
    weights = dpq_utilities(scores, alpha0, request.grid, request.epsilon)
    index = exp_mech_sample(weights, rng)
    return float(request.grid.candidates[index])


def conformal_index(alpha: float, n: int) -> int:
    """The order-statistic index ceil((1 - alpha) * (n + 1)).

    Computed in exact rational arithmetic: the float product can land a few
    ulps above an integer boundary (e.g. alpha=0.1, n=9) and a naive ceil
    would then overshoot by one.
    """
    require_unit_open(alpha, "alpha")
    n = require_count(n, "n")
    return int(math.ceil((1 - Fraction(alpha)) * (n + 1)))
