"""Nonconformity score functions and their [0, 1] normalization.

The private quantile mechanism operates on scores in [0, 1]; raw scores are
clipped to ``[0, bound]`` and divided by ``bound``. The bound is part of the
score function because the interval inversion must undo it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .validation import require_positive


class NonInvertibleScoreError(TypeError):
    """The score kind has no closed-form interval inversion."""


@dataclass(frozen=True)
class ScoreFunction:
    """A raw nonconformity score plus its normalization bound.

    Parameters
    ----------
    kind : str
        "absolute-residual", "one-minus-probability", or "custom".
    bound : float
        Raw scores are clipped to [0, bound] and divided by bound. Must be 1.0
        for "one-minus-probability", whose raw scores already live in [0, 1].
    raw_fn : callable, optional
        ``raw_fn(model, X, y) -> raw scores`` for the "custom" kind.
    inverse_fn : callable, optional
        ``inverse_fn(model, X, threshold) -> (lower, upper)`` for kinds
        without the built-in absolute-residual inversion.
    """

    kind: str
    bound: float = 1.0
    raw_fn: Optional[Callable] = None
    inverse_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("absolute-residual", "one-minus-probability", "custom"):
            raise ValueError(f"unknown score kind {self.kind!r}")
        require_positive(self.bound, "bound")
        if self.kind == "custom" and self.raw_fn is None:
            raise ValueError("custom score functions need a raw_fn")

    def raw(self, model, X, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "absolute-residual":
            return np.abs(y - np.asarray(model.predict(X), dtype=float))
        if self.kind == "one-minus-probability":
            proba = np.asarray(model.predict_proba(X), dtype=float)
            labels = y.astype(int)
            return 1.0 - proba[np.arange(labels.size), labels]
        return np.asarray(self.raw_fn(model, X, y), dtype=float)

    def normalize(self, raw_scores) -> np.ndarray:
        return np.clip(np.asarray(raw_scores, dtype=float), 0.0, self.bound) / self.bound

    def denormalize(self, normalized: float) -> float:
        return float(normalized) * self.bound

    def interval(self, model, X, raw_threshold: float):
        """Invert ``score((x, y)) <= raw_threshold`` into per-row (lower, upper)."""
        if self.kind == "absolute-residual":
            center = np.asarray(model.predict(X), dtype=float)
            return center - raw_threshold, center + raw_threshold
        if self.inverse_fn is not None:
            return self.inverse_fn(model, X, raw_threshold)
        raise NonInvertibleScoreError(
            f"score kind {self.kind!r} has no closed-form interval inversion; "
            "supply inverse_fn"
        )


def absolute_residual_score(bound: float = 1.0) -> ScoreFunction:
    """|y - prediction|, normalized by a response-range bound."""
    return ScoreFunction(kind="absolute-residual", bound=bound)


def one_minus_probability_score() -> ScoreFunction:
    """1 - predicted probability of the observed class (already in [0, 1])."""
    return ScoreFunction(kind="one-minus-probability", bound=1.0)


def custom_score(raw_fn, bound: float = 1.0, inverse_fn=None) -> ScoreFunction:
    return ScoreFunction(kind="custom", bound=bound, raw_fn=raw_fn, inverse_fn=inverse_fn)
