"""Cost-derived switchover threshold with a hysteresis band."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, List

from .exceptions import ConfigError, ContractViolation


class Decision(str, Enum):
    SWITCHOVER = "SWITCHOVER"
    STANDBY = "STANDBY"


def threshold_from_costs(c_fp: float, c_fn: float) -> float:
    """Posterior above which switching over has lower expected cost.

    Switching costs ``(1 - p) * c_fp``, staying costs ``p * c_fn``; the two
    are equal at ``p = c_fp / (c_fp + c_fn)``.
    """
    if not (c_fp > 0 and c_fn > 0):
        raise ConfigError(f"misclassification costs must be > 0, got {c_fp}, {c_fn}")
    return c_fp / (c_fp + c_fn)


@dataclass(frozen=True)
class Thresholds:
    tau_active: float = 0.3
    delta: float = 0.05
    c_fp: float = 3.0
    c_fn: float = 7.0

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if not (0 < self.tau_active - self.delta and self.tau_active + self.delta < 1):
            raise ConfigError(
                f"hysteresis band [{self.lower}, {self.upper}] must sit inside (0, 1)"
            )

    @classmethod
    def from_costs(cls, c_fp: float = 3.0, c_fn: float = 7.0, delta: float = 0.05) -> "Thresholds":
        return cls(threshold_from_costs(c_fp, c_fn), delta, c_fp, c_fn)

    @property
    def upper(self) -> float:
        return self.tau_active + self.delta

    @property
    def lower(self) -> float:
        return self.tau_active - self.delta


@dataclass(frozen=True)
class DecisionState:
    decision: Decision = Decision.STANDBY
    previous: Decision = Decision.STANDBY
    since: float = 0.0

    @property
    def changed(self) -> bool:
        return self.decision != self.previous


def decide(posterior: float, state: DecisionState, th: Thresholds, now: float = 0.0) -> DecisionState:
    if not 0.0 <= posterior <= 1.0:
        raise ContractViolation(f"posterior {posterior} outside [0, 1]")
    if posterior > th.upper:
        verdict = Decision.SWITCHOVER
    elif posterior < th.lower:
        verdict = Decision.STANDBY
    else:
        verdict = state.decision
    since = now if verdict != state.decision else state.since
    return replace(state, decision=verdict, previous=state.decision, since=since)


def decide_sequence(
    posteriors: Iterable[float], th: Thresholds, initial: Decision = Decision.STANDBY
) -> List[Decision]:
    state = DecisionState(initial, initial, 0.0)
    out = []
    for i, p in enumerate(posteriors):
        state = decide(p, state, th, float(i))
        out.append(state.decision)
    return out
