"""Privacy budget bookkeeping: the (epsilon, delta) pair and its composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BudgetOverflowError(ValueError):
    """Raised when composing budgets would push delta to 1 or beyond."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) differential-privacy budget.

    ``epsilon = 0`` together with ``delta = 0`` is the identity budget and is
    used to label non-private releases (oracle and split calibration records).
    Mechanisms that actually add noise require a strictly positive epsilon and
    validate that themselves.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        epsilon = float(self.epsilon)
        delta = float(self.delta)
        if not np.isfinite(epsilon) or epsilon < 0.0:
            raise ValueError(f"epsilon must be finite and >= 0, got {epsilon}")
        if not (0.0 <= delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {delta}")
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "delta", delta)

    @property
    def is_identity(self) -> bool:
        return self.epsilon == 0.0 and self.delta == 0.0


ZERO_BUDGET = PrivacyBudget(0.0, 0.0)


def compose(first: PrivacyBudget, second: PrivacyBudget) -> PrivacyBudget:
    """Sequential composition: (e1, d1) then (e2, d2) spends (e1+e2, d1+d2).

    Raises
    ------
    BudgetOverflowError
        If the summed delta reaches 1, at which point the guarantee is vacuous.
    """
    delta = first.delta + second.delta
    if delta >= 1.0:
        raise BudgetOverflowError(
            f"composed delta {delta} >= 1; the privacy guarantee would be vacuous"
        )
    return PrivacyBudget(first.epsilon + second.epsilon, delta)
