"""Core differential-privacy primitives.

Laplace noise (inverse-CDF sampling), the Gaussian mechanism calibration for a
given L2 sensitivity, and exponential-mechanism sampling over a vector of
penalties. All sampling takes an explicit ``numpy.random.Generator``; nothing
in this module touches global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .budget import PrivacyBudget
from .validation import as_float_array, require_nonnegative, require_positive


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    """Draw from the zero-centered Laplace distribution with the given scale.

    Uses the inverse-CDF transform of a single uniform draw per sample, so the
    output is a deterministic function of the generator state.

    Parameters
    ----------
    scale : float
        Laplace scale parameter b > 0 (standard deviation is b * sqrt(2)).
    rng : numpy.random.Generator
        Seeded random source.
    size : int or tuple, optional
        If omitted, returns a scalar float.
    """
    scale = require_positive(scale, "scale")
    u = rng.random(size=size)
    centered = u - 0.5
    # 1 - 2|u - 0.5| can underflow to 0 at the extreme uniform value; clamp so
    # the log stays finite.
    tail = np.maximum(1.0 - 2.0 * np.abs(centered), np.finfo(float).tiny)
    draw = -scale * np.sign(centered) * np.log(tail)
    if size is None:
        return float(draw)
    return draw


@dataclass(frozen=True)
class GaussianCalibration:
    """Noise level for the Gaussian mechanism at a given L2 sensitivity.

    ``sigma`` is the per-coordinate standard deviation satisfying
    ``sigma**2 == 2 * ln(1.25 / delta) * sensitivity**2 / epsilon**2``.
    """

    sensitivity: float
    epsilon: float
    delta: float
    sigma: float


def gaussian_calibrate(sensitivity: float, budget: PrivacyBudget) -> GaussianCalibration:
    """Compute the Gaussian-mechanism noise scale for the given budget.

    Raises
    ------
    ValueError
        If ``budget.delta == 0``: the calibration formula is undefined there,
        and this implementation does not approximate a pure-epsilon Gaussian
        mechanism.
    """
    sensitivity = require_nonnegative(sensitivity, "sensitivity")
    epsilon = require_positive(budget.epsilon, "budget.epsilon")
    if budget.delta <= 0.0:
        raise ValueError(
            "the Gaussian mechanism requires delta > 0; "
            "use the Laplace mechanism for pure-epsilon privacy"
        )
    sigma = np.sqrt(2.0 * np.log(1.25 / budget.delta)) * sensitivity / epsilon
    return GaussianCalibration(
        sensitivity=sensitivity, epsilon=epsilon, delta=budget.delta, sigma=float(sigma)
    )


def gaussian_perturb(
    values: np.ndarray, calibration: GaussianCalibration, rng: np.random.Generator
) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise per coordinate."""
    values = np.asarray(values, dtype=float)
    return values + rng.normal(0.0, calibration.sigma, size=values.shape)


@dataclass(frozen=True)
class ExpMechWeights:
    """Penalty vector for exponential-mechanism selection.

    Candidate j is selected with probability proportional to
    ``exp(-epsilon * utilities[j] / (2 * sensitivity))``; lower penalty means
    higher probability.
    """

    utilities: np.ndarray
    sensitivity: float
    epsilon: float

    def __post_init__(self):
        utilities = as_float_array(self.utilities, "utilities")
        if utilities.size == 0:
            raise ValueError("utilities must be nonempty")
        if np.any(utilities < 0):
            raise ValueError("utilities are penalties and must be nonnegative")
        object.__setattr__(self, "utilities", utilities)
        object.__setattr__(
            self, "sensitivity", require_positive(self.sensitivity, "sensitivity")
        )
        object.__setattr__(self, "epsilon", require_positive(self.epsilon, "epsilon"))


def exp_mech_probabilities(weights: ExpMechWeights) -> np.ndarray:
    """Analytic selection probabilities of the exponential mechanism.

    The minimum penalty is subtracted before exponentiation so the largest
    exponent is exactly zero; this prevents underflow of the whole vector when
    ``epsilon * w / sensitivity`` is large and leaves the normalized
    probabilities unchanged.
    """
    shifted = weights.utilities - weights.utilities.min()
    raw = np.exp(-weights.epsilon * shifted / (2.0 * weights.sensitivity))
    return raw / raw.sum()


def exp_mech_sample(weights: ExpMechWeights, rng: np.random.Generator) -> int:
    """Sample a candidate index with the exponential-mechanism distribution."""
    probabilities = exp_mech_probabilities(weights)
    cumulative = np.cumsum(probabilities)
    u = rng.random()
    index = int(np.searchsorted(cumulative, u, side="right"))
    return min(index, probabilities.size - 1)
