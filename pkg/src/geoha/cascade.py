"""Online detection of temporal A -> B failure cascades.

Each failure is compared with the most recent failure of every other
service; pairs closer than the cascade window become observations, and
cumulative counters back the cascade ratio used for CPT learning.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .exceptions import ConfigError, ContractViolation, OrderingError, UndefinedRatioError

DEFAULT_WINDOW = 60.0


@dataclass(frozen=True)
class CascadeWindowConfig:
    window: float = DEFAULT_WINDOW

    def __post_init__(self):
        if not self.window > 0:
            raise ConfigError("cascade window must be > 0")


@dataclass(frozen=True)
class FailureEvent:
    service: str
    t: float

    def __post_init__(self):
        if not self.t >= 0:
            raise ContractViolation(f"failure timestamp must be >= 0, got {self.t}")


@dataclass(frozen=True)
class CascadeObservation:
    source: str
    target: str
    delay: float
    t: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {"source": self.source, "target": self.target, "delay": self.delay, "t": self.t}
        )


def is_cascade(t_a: float, t_b: float, cfg: CascadeWindowConfig = CascadeWindowConfig()) -> bool:
    """True when B failed no earlier than A and within the cascade window."""
    delay = t_b - t_a
    return 0 <= delay <= cfg.window


class CascadeDetector:
    """Longitudinal cascade database for one persona.

    ``recent`` holds the latest failure time per service and is bounded by
    :meth:`prune`; ``n_failures``, ``n_cascade`` and ``n_switchover`` are
    cumulative and survive pruning and episode resets.
    """

    def __init__(self, cfg: Optional[CascadeWindowConfig] = None, log_path=None):
        self.cfg = cfg or CascadeWindowConfig()
        self.log_path = Path(log_path) if log_path is not None else None
        self.recent: Dict[str, float] = {}
        self.n_failures: Counter = Counter()
        self.n_cascade: Counter = Counter()
        # failures followed by a confirmed switchover necessity within the window
        self.n_switchover: Counter = Counter()
        self._credited: Dict[str, bool] = {}
        # targets already counted against the current failure instance of a source
        self._counted: Dict[str, set] = {}
        self._clock: Optional[float] = None

    def record_failure(self, event: FailureEvent) -> List[CascadeObservation]:
        if self._clock is not None and event.t < self._clock:
            raise OrderingError(
                f"failure of {event.service} at t={event.t} precedes t={self._clock}"
            )
        self._clock = event.t
        found = []
        for source, t_a in self.recent.items():
            if source == event.service:
                continue
            if is_cascade(t_a, event.t, self.cfg):
                found.append(CascadeObservation(source, event.service, event.t - t_a, event.t))
        # re-insert so iteration order follows failure time
        self.recent.pop(event.service, None)
        self.recent[event.service] = event.t
        self._credited[event.service] = False
        self._counted[event.service] = set()
        self.n_failures[event.service] += 1
        for obs in found:
            # a repeat failure of the target inside the window is not a new cascade
            if obs.target not in self._counted[obs.source]:
                self._counted[obs.source].add(obs.target)
                self.n_cascade[(obs.source, obs.target)] += 1
        if self.log_path is not None and found:
            with self.log_path.open("a") as fh:
                for obs in found:
                    fh.write(obs.to_json() + "\n")
        return found

    def confirm_switchover(self, t: float, exclude: Tuple[str, ...] = ()) -> List[str]:
        """Credit recent failures that preceded a confirmed switchover necessity.

        Each failure instance is credited at most once. Returns the credited
        services in failure order.
        """
        credited = []
        for service, t_a in self.recent.items():
            if service in exclude or self._credited.get(service):
                continue
            if is_cascade(t_a, t, self.cfg):
                self._credited[service] = True
                self.n_switchover[service] += 1
                credited.append(service)
        return credited

    def cascade_ratio(self, source: str, target: str) -> float:
        n = self.n_failures[source]
        if n == 0:
            raise UndefinedRatioError(f"{source} has no recorded failures")
        return self.n_cascade[(source, target)] / n

    def switchover_ratio(self, source: str) -> float:
        n = self.n_failures[source]
        if n == 0:
            raise UndefinedRatioError(f"{source} has no recorded failures")
        return self.n_switchover[source] / n

    def prune(self, now: float) -> int:
        cutoff = now - self.cfg.window
        stale = [svc for svc, t in self.recent.items() if t < cutoff]
        for svc in stale:
            del self.recent[svc]
            self._credited.pop(svc, None)
            self._counted.pop(svc, None)
        return len(stale)

    def new_episode(self) -> None:
        """Forget in-flight failures and the ordering clock; keep counters."""
        self.recent.clear()
        self._credited.clear()
        self._counted.clear()
        self._clock = None

    def counts(self) -> dict:
        return {
            "n_failures": dict(sorted(self.n_failures.items())),
            "n_cascade": {f"{a}->{b}": n for (a, b), n in sorted(self.n_cascade.items())},
            "n_switchover": dict(sorted(self.n_switchover.items())),
        }

    def load_counts(self, data: dict) -> None:
        self.n_failures = Counter(data.get("n_failures", {}))
        self.n_cascade = Counter(
            {tuple(k.split("->", 1)): v for k, v in data.get("n_cascade", {}).items()}
        )
        self.n_switchover = Counter(data.get("n_switchover", {}))


def brute_force_cascades(
    events: List[FailureEvent], window: float
) -> List[CascadeObservation]:
    """Reference enumeration used to check :class:`CascadeDetector`.

    For every event B, pairs it with the latest earlier-presented failure of
    each other service A and keeps the pair when ``0 <= t_B - t_A <= window``.
    """
    out = []
    for j, b in enumerate(events):
        latest: Dict[str, float] = {}
        for a in events[:j]:
            latest[a.service] = a.t
        for service, t_a in latest.items():
            if service != b.service and 0 <= b.t - t_a <= window:
                out.append(CascadeObservation(service, b.service, b.t - t_a, b.t))
    return out
