"""scikit-learn compatible front end for the adaptive Noisy-OR arbiter.

``fit``/``partial_fit`` consume failure logs (rows of ``service, t``) and
learn conditionals online; ``predict_proba`` scores degradation indicator
rows; ``predict`` turns a row sequence into hysteresis-filtered verdicts.

Examples
--------
>>> arb = AdaptiveArbiter(services=["m7", "m5", "m11"], csg=("m11",),
...                       priors={"SO": {"m7": 0.17, "m5": 0.17}})
>>> arb = arb.fit([["m7", 110], ["m5", 120], ["m11", 150]], switchovers=[150])
>>> round(float(arb.predict_proba([[1, 1, 0]])[0, 1]), 3)
0.679
"""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cascade import CascadeDetector, CascadeWindowConfig, FailureEvent
from .inference import EvidenceVector, InferenceConfig, aggregate, bayesian_update
from .learner import SWITCHOVER, CptStore, LearnerConfig, OnlineCptLearner
from .policy import Decision, Thresholds, decide_sequence


def check_failure_log(X) -> list:
    """Validate ``(service, t)`` rows and return them as FailureEvents, time-ordered."""
    arr = np.asarray(X, dtype=object)
    if arr.size == 0:
        return []
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"failure log must have shape (n, 2), got {arr.shape}")
    try:
        events = [FailureEvent(str(s), float(t)) for s, t in arr]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad failure log row: {exc}") from exc
    if any(b.t < a.t for a, b in zip(events, events[1:])):
        raise ValueError("failure log must be sorted by timestamp")
    return events


class AdaptiveArbiter(ClassifierMixin, BaseEstimator):
    """Predictive switchover arbiter.

    Parameters
    ----------
    services : sequence of str
        Column order of the degradation indicator matrix.
    priors : mapping, optional
        Expert priors ``{target: {source: p}}`` installed before learning.
    csg : tuple of str
        Critical services; cascades into them train ``P(SO | source)``.
    alpha_base, n_req : learning-rate schedule.
    cascade_window : float
        Seconds within which a later failure counts as a cascade.
    base_prior : float
        Leak probability of the Noisy-OR.
    c_fp, c_fn : float
        Misclassification costs defining the decision threshold.
    delta : float
        Half-width of the hysteresis band.
    target : str
        Node whose posterior is scored.
    """

    def __init__(
        self,
        services: Sequence[str] = (),
        priors: Optional[Mapping] = None,
        csg: tuple = (),
        alpha_base: float = 0.7,
        n_req: int = 10,
        cascade_window: float = 60.0,
        base_prior: float = 0.05,
        c_fp: float = 3.0,
        c_fn: float = 7.0,
        delta: float = 0.05,
        target: str = SWITCHOVER,
    ):
        self.services = services
        self.priors = priors
        self.csg = csg
        self.alpha_base = alpha_base
        self.n_req = n_req
        self.cascade_window = cascade_window
        self.base_prior = base_prior
        self.c_fp = c_fp
        self.c_fn = c_fn
        self.delta = delta
        self.target = target

    def _init_state(self):
        self.cpts_ = CptStore()
        if self.priors:
            self.cpts_.seed_priors(self.priors)
        self.cascades_ = CascadeDetector(CascadeWindowConfig(self.cascade_window))
        self.learner_ = OnlineCptLearner(
            self.cpts_, LearnerConfig(self.alpha_base, self.n_req), self.csg
        )
        self.thresholds_ = Thresholds.from_costs(self.c_fp, self.c_fn, self.delta)
        self.inference_ = InferenceConfig(self.base_prior)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(self.services)

    def fit(self, X, y=None, switchovers=None):
        """Learn from a failure log, starting again from the priors.

        ``switchovers`` lists times at which a switchover was confirmed
        necessary; failures shortly before them train ``P(SO | service)``.
        """
        self._init_state()
        return self.partial_fit(X, y, switchovers)

    def partial_fit(self, X, y=None, switchovers=None):
        if not hasattr(self, "cpts_"):
            self._init_state()
        events = check_failure_log(X)
        confirms = sorted(float(t) for t in (switchovers if switchovers is not None else ()))
        by_time = defaultdict(lambda: ([], 0))
        for e in events:
            by_time[e.t][0].append(e)
        for t in confirms:
            by_time[t] = (by_time[t][0], by_time[t][1] + 1)
        # same-timestamp batches: failures, then confirmations, then learning
        for t in sorted(by_time):
            failures, n_confirm = by_time[t]
            obs = []
            for event in failures:
                obs.extend(self.cascades_.record_failure(event))
            credited = []
            for _ in range(n_confirm):
                credited.extend(self.cascades_.confirm_switchover(t))
            updates = self.learner_.apply_cascades(obs, self.cascades_)
            done = {src for src, tgt, _ in updates if tgt == SWITCHOVER}
            self.learner_.apply_confirmation(credited, self.cascades_, skip=done)
        return self

    def _check_X(self, X):
        check_is_fitted(self, "cpts_")
        X = check_array(X, dtype=float, ensure_min_features=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return X

    def predict_proba(self, X, likelihood_ratios=None):
        """Posterior ``[P(no switchover), P(switchover)]`` per indicator row.

        ``likelihood_ratios`` optionally gives one positive evidence
        multiplier per row.
        """
        X = self._check_X(X)
        if likelihood_ratios is None:
            lr = np.ones(len(X))
        else:
            lr = np.asarray(likelihood_ratios, dtype=float).reshape(-1)
            if lr.shape[0] != X.shape[0] or np.any(lr <= 0):
                raise ValueError("likelihood_ratios must be positive, one per row")
        out = np.empty((X.shape[0], 2))
        for i, row in enumerate(X):
            degraded = [s for s, flag in zip(self.services, row) if flag > 0]
            p_eff, _, _ = aggregate(degraded, self.cpts_, self.target, self.base_prior)
            post = bayesian_update(p_eff, EvidenceVector((("row", lr[i]),)))
            out[i] = (1.0 - post, post)
        return out

    def predict(self, X, likelihood_ratios=None):
        """Hysteresis verdicts, treating rows as consecutive ticks (1 = switchover)."""
        proba = self.predict_proba(X, likelihood_ratios)[:, 1]
        verdicts = decide_sequence(proba, self.thresholds_)
        return np.array([int(v is Decision.SWITCHOVER) for v in verdicts])

    def cpt_table(self) -> dict:
        check_is_fitted(self, "cpts_")
        return self.cpts_.to_dict()

