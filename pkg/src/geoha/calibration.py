"""Fit fixture inputs (expert priors, ramp slopes) to target detection times.

The bundled scenarios fix the event geometry; what they leave open is how
strong the expert priors are and how fast the precursor metrics ramp.
:func:`search` sweeps those knobs through the real simulator and keeps the
combinations that land the static and trained adaptive detections on the
requested ticks while the false-alarm fixture stays quiet.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .learner import SWITCHOVER
from .simulator import (
    DATA_DIR,
    Scenario,
    Simulator,
    Strategy,
    build_persona,
    default_config,
)

SEQUENCE = ("event1", "event2", "event3")


@dataclass(frozen=True)
class CalibrationPoint:
    prior: float
    latency_slope: float
    lag_slope: float
    static_detection: Optional[float]
    adaptive_detection: Optional[float]
    m11_crossing: Optional[float]
    false_alarm_peak: float

    def hits(self, static_target=-5.0, adaptive_target=-20.0, tol=0.0, quiet_below=0.35) -> bool:
        if self.static_detection is None or self.adaptive_detection is None:
            return False
        return (
            abs(self.static_detection - static_target) <= tol
            and abs(self.adaptive_detection - adaptive_target) <= tol
            and self.false_alarm_peak < quiet_below
        )


def _raw(name: str) -> dict:
    return json.loads((DATA_DIR / f"{name}.json").read_text())


def _with_slopes(raw: dict, latency_slope: float, lag_slope: float) -> Scenario:
    raw = copy.deepcopy(raw)
    for inj in raw["injections"]:
        if inj["kind"] == "metric_ramp":
            metric = inj["params"]["metric"]
            if metric == "latency":
                inj["params"]["slope"] = latency_slope
            elif metric == "replication_lag":
                inj["params"]["slope"] = lag_slope
    return Scenario.from_dict(raw)


def _priors(p: float) -> dict:
    return {SWITCHOVER: {"m7": p, "m5": p}, "m11": {"m7": p, "m5": p}, "m5": {"m7": p}}


def evaluate(prior: float, latency_slope: float, lag_slope: float) -> CalibrationPoint:
    cfg = default_config()
    seq = [_with_slopes(_raw(n), latency_slope, lag_slope) for n in SEQUENCE]

    static = Simulator(build_persona(cfg, priors=_priors(prior)), cfg.services)
    static_run = static.simulate(seq[-1], Strategy.STATIC_BAYESIAN)

    adaptive = Simulator(build_persona(cfg, priors=_priors(prior)), cfg.services)
    runs = adaptive.run_sequence(seq, Strategy.ADAPTIVE_BAYESIAN)

    quiet = Simulator(build_persona(cfg, priors=_priors(prior)), cfg.services)
    fa = quiet.simulate(_with_slopes(_raw("false_alarm"), latency_slope, lag_slope), Strategy.STATIC_BAYESIAN)
    peak = max(p for _, p in fa.posterior_series())

    return CalibrationPoint(
        prior,
        latency_slope,
        lag_slope,
        static_run.metrics.detection_time,
        runs[-1].metrics.detection_time,
        runs[-1].first_crossing(0.3, "m11"),
        peak,
    )


def search(
    priors: Iterable[float],
    latency_slopes: Iterable[float],
    lag_slopes: Iterable[float],
    **target,
) -> List[CalibrationPoint]:
    """Evaluate the full grid and return the points that hit the targets."""
    return [
        pt
        for pt in (evaluate(*combo) for combo in itertools.product(priors, latency_slopes, lag_slopes))
        if pt.hits(**target)
    ]
