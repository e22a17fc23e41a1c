"""Per-persona arbitration chain: telemetry, cascades, learning, inference, policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .cascade import CascadeDetector, CascadeObservation, CascadeWindowConfig, FailureEvent
from .inference import (
    EvidenceVector,
    InferenceConfig,
    RiskAssessment,
    evidence_from_telemetry,
    predict,
)
from .learner import SWITCHOVER, CptStore, LearnerConfig, OnlineCptLearner
from .policy import DecisionState, Thresholds, decide
from .telemetry import DegradationReport, SiteBaseline, TelemetrySample, TelemetryStore

FAILURE_METRIC = "failure"


@dataclass(frozen=True)
class SwitchoverLabel:
    """Confirmed need for a switchover: a hard failure or an operator action."""

    t: float
    service: Optional[str] = None
    source: str = "failure"


@dataclass
class TickResult:
    t: float
    assessments: Dict[str, RiskAssessment]
    state: DecisionState
    observations: List[CascadeObservation] = field(default_factory=list)
    updates: List[Tuple[str, str, float]] = field(default_factory=list)

    @property
    def risk(self) -> RiskAssessment:
        return self.assessments[SWITCHOVER]


class ArbiterPipeline:
    """One persona's full decision chain.

    Parameters
    ----------
    baselines : mapping of metric -> SiteBaseline
    cpts : CptStore
        Learned conditionals, seeded from priors or a snapshot.
    csg : iterable of str
        Critical services whose cascades also train ``P(SO | source)``.
    learn : bool
        Apply online CPT updates. ``False`` gives the static model.
    assess_window : float
        Lookback in seconds for degradation and evidence.
    targets : sequence of str
        Extra per-service targets evaluated alongside ``SO`` (reporting only).
    """

    def __init__(
        self,
        baselines: Mapping[str, SiteBaseline],
        cpts: Optional[CptStore] = None,
        csg: Iterable[str] = (),
        learn: bool = True,
        learner_cfg: LearnerConfig = LearnerConfig(),
        cascade_cfg: CascadeWindowConfig = CascadeWindowConfig(),
        inference_cfg: InferenceConfig = InferenceConfig(),
        thresholds: Thresholds = Thresholds(),
        assess_window: float = 1.0,
        targets: Sequence[str] = (),
        telemetry_log=None,
        cascade_log=None,
    ):
        self.baselines = dict(baselines)
        self.cpts = cpts if cpts is not None else CptStore()
        self.csg = frozenset(csg)
        self.learn = learn
        self.learner = OnlineCptLearner(self.cpts, learner_cfg, self.csg)
        self.inference_cfg = inference_cfg
        self.thresholds = thresholds
        self.assess_window = assess_window
        self.targets = tuple(targets)
        self.store = TelemetryStore(log_path=telemetry_log)
        self.cascades = CascadeDetector(cascade_cfg, log_path=cascade_log)
        self.state = DecisionState()
        self.failed: Dict[str, float] = {}
        self._pending_obs: List[CascadeObservation] = []
        self._pending_credit: List[str] = []
        # operation counter used by complexity checks
        self.ops = 0

    def ingest(self, sample: TelemetrySample) -> None:
        self.ops += 1
        self.store.ingest(sample)

    def record_failure(self, service: str, t: float) -> List[CascadeObservation]:
        self.ops += 1
        obs = self.cascades.record_failure(FailureEvent(service, t))
        self.failed.setdefault(service, t)
        self._pending_obs.extend(obs)
        return obs

    def confirm_switchover(self, label: SwitchoverLabel) -> List[str]:
        self.ops += 1
        exclude = (label.service,) if label.service else ()
        credited = self.cascades.confirm_switchover(label.t, exclude)
        self._pending_credit.extend(credited)
        return credited

    def recover(self, service: str) -> None:
        self.failed.pop(service, None)

    def handle(self, event) -> None:
        if isinstance(event, TelemetrySample):
            self.ingest(event)
        elif isinstance(event, FailureEvent):
            self.record_failure(event.service, event.t)
        elif isinstance(event, SwitchoverLabel):
            self.confirm_switchover(event)
        else:
            raise TypeError(f"unsupported pipeline event {event!r}")

    def learn_step(self) -> List[Tuple[str, str, float]]:
        obs, credit = self._pending_obs, self._pending_credit
        self._pending_obs, self._pending_credit = [], []
        if not self.learn:
            return []
        updates = self.learner.apply_cascades(obs, self.cascades)
        so_done = {src for src, tgt, _ in updates if tgt == SWITCHOVER}
        updates += self.learner.apply_confirmation(credit, self.cascades, skip=so_done)
        return updates

    def report(self, now: float) -> DegradationReport:
        report = self.store.assess_degradation(now, self.baselines, self.assess_window)
        for service in self.failed:
            if service not in report:
                report.add(service, FAILURE_METRIC, float("inf"))
        return report

    def evidence(self, now: float) -> EvidenceVector:
        return evidence_from_telemetry(
            self.store, now, self.baselines, self.assess_window, self.inference_cfg
        )

    def assess(self, now: float, targets: Optional[Sequence[str]] = None) -> Dict[str, RiskAssessment]:
        report = self.report(now)
        evidence = self.evidence(now)
        out = {}
        for target in (SWITCHOVER,) + tuple(targets if targets is not None else self.targets):
            risk = predict(report, self.cpts, evidence, self.inference_cfg, target)
            self.ops += risk.folds
            out[target] = risk
        return out

    def step(self, now: float, emit: bool = True) -> TickResult:
        """Learn from buffered events, then assess and (optionally) decide.

        With ``emit=False`` the decision state is frozen, as when the
        quorum has no leader.
        """
        obs = list(self._pending_obs)
        updates = self.learn_step()
        assessments = self.assess(now)
        if emit:
            self.state = decide(assessments[SWITCHOVER].posterior, self.state, self.thresholds, now)
        return TickResult(now, assessments, self.state, obs, updates)

    def prune(self, now: float) -> int:
        return self.cascades.prune(now)

    def new_episode(self) -> None:
        """Reset per-episode state; learned CPTs and cascade counters persist."""
        self.store = TelemetryStore(log_path=self.store.log_path)
        self.cascades.new_episode()
        self.state = DecisionState()
        self.failed.clear()
        self._pending_obs.clear()
        self._pending_credit.clear()

    def touched_keys(self) -> set:
        keys = {("telemetry",) + k for k in self.store.keys()}
        keys |= {("cpt",) + k for k in self.cpts.touched}
        keys |= {("failure", s) for s in self.cascades.n_failures}
        return keys
