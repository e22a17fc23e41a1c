"""Deterministic fault-injection scenarios for comparing arbitration strategies.

A scenario is a tick-driven script of injections (metric ramps, service
failures, heartbeat loss, operator switchovers, recoveries) replayed
against one persona. Reactive strategies wait for a heartbeat timeout;
Bayesian strategies switch over once the posterior clears the hysteresis
band.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cascade import CascadeObservation
from .exceptions import ConfigError
from .learner import SWITCHOVER, CptStore, load_priors
from .pipeline import ArbiterPipeline, SwitchoverLabel
from .policy import Decision, Thresholds
from .quorum import Persona, PersonaConfig, load_registry
from .telemetry import SiteBaseline, TelemetrySample, Tier, load_baselines

DEFAULT_EXECUTION = 30.0
DATA_DIR = resources.files("geoha") / "data"
BUNDLED_SCENARIOS = ("event1", "event2", "event3", "false_alarm", "user_so")
METRIC_TIERS = {
    "latency": Tier.APPLICATION,
    "replication_lag": Tier.APPLICATION,
    "packet_loss": Tier.NETWORK,
    "cpu": Tier.NODE,
}


class Strategy(str, Enum):
    REACTIVE_15 = "reactive15"
    REACTIVE_5 = "reactive5"
    STATIC_BAYESIAN = "static"
    ADAPTIVE_BAYESIAN = "adaptive"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            try:
                return cls[str(value).upper()]
            except KeyError:
                raise ConfigError(f"unknown strategy {value!r}") from None

    @property
    def timeout(self) -> Optional[float]:
        return {self.REACTIVE_15: 15.0, self.REACTIVE_5: 5.0}.get(self)

    @property
    def bayesian(self) -> bool:
        return self.timeout is None

    @property
    def label(self) -> str:
        return {
            self.REACTIVE_15: "Reactive (15s)",
            self.REACTIVE_5: "Reactive (5s)",
            self.STATIC_BAYESIAN: "Static Bayesian",
            self.ADAPTIVE_BAYESIAN: "Adaptive Bayesian",
        }[self]


BASELINE_STRATEGY = Strategy.REACTIVE_15


class InjectionKind(str, Enum):
    METRIC_RAMP = "metric_ramp"
    SERVICE_FAILURE = "service_failure"
    HEARTBEAT_LOSS = "heartbeat_loss"
    USER_SWITCHOVER = "user_switchover"
    RECOVERY = "recovery"


@dataclass(frozen=True)
class Injection:
    time: float
    kind: InjectionKind
    service: Optional[str] = None
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", InjectionKind(self.kind))
        if self.time < 0:
            raise ConfigError(f"injection time must be >= 0, got {self.time}")
        if self.kind is not InjectionKind.USER_SWITCHOVER and not self.service:
            raise ConfigError(f"{self.kind.value} injection needs a service")
        if self.kind is InjectionKind.METRIC_RAMP:
            for key in ("metric", "slope"):
                if key not in self.params:
                    raise ConfigError(f"metric_ramp on {self.service} missing {key!r}")

    def to_dict(self) -> dict:
        d = {"time": self.time, "kind": self.kind.value, "service": self.service}
        if self.params:
            d["params"] = dict(self.params)
        return d


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    injections: Tuple[Injection, ...] = ()
    seed: int = 0
    tick: float = 1.0
    execution_time: float = DEFAULT_EXECUTION
    strategy: Strategy = Strategy.ADAPTIVE_BAYESIAN

    def __post_init__(self):
        object.__setattr__(self, "injections", tuple(self.injections))
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        times = [inj.time for inj in self.injections]
        if times != sorted(times):
            raise ConfigError(f"{self.name}: injections must be sorted by time")
        if times and self.duration < times[-1]:
            raise ConfigError(f"{self.name}: duration {self.duration} ends before last injection")
        if not self.tick > 0 or self.execution_time < 0:
            raise ConfigError(f"{self.name}: tick must be > 0 and execution_time >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            injections = tuple(
                Injection(
                    float(i["time"]), i["kind"], i.get("service"), dict(i.get("params", {}))
                )
                for i in d.get("injections", [])
            )
            return cls(
                name=d["name"],
                duration=float(d["duration"]),
                injections=injections,
                seed=int(d.get("seed", 0)),
                tick=float(d.get("tick", 1.0)),
                execution_time=float(d.get("execution_time", DEFAULT_EXECUTION)),
                strategy=d.get("strategy", Strategy.ADAPTIVE_BAYESIAN),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed scenario: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "tick": self.tick,
            "duration": self.duration,
            "execution_time": self.execution_time,
            "strategy": self.strategy.value,
            "injections": [i.to_dict() for i in self.injections],
        }

    @property
    def hard_failure_time(self) -> Optional[float]:
        times = [i.time for i in self.injections if i.kind is InjectionKind.HEARTBEAT_LOSS]
        return times[0] if times else None

    @property
    def onset_time(self) -> Optional[float]:
        kinds = (InjectionKind.METRIC_RAMP, InjectionKind.SERVICE_FAILURE)
        times = [i.time for i in self.injections if i.kind in kinds]
        return times[0] if times else None


def load_scenario(source: Union[str, Path, dict]) -> Scenario:
    """Load a scenario from a dict, a JSON path, or a bundled fixture name."""
    if isinstance(source, dict):
        return Scenario.from_dict(source)
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED_SCENARIOS:
        path = Path(str(DATA_DIR / f"{source}.json"))
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {source}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {source}: {exc}") from exc
    return Scenario.from_dict(raw)


# event-kind ordering for timestamp ties
KIND_PRIORITY = {
    "injection": 0,
    "inference": 1,
    "decision": 2,
    "switchover_start": 3,
    "switchover_complete": 3,
}


@dataclass(frozen=True)
class TimelineEvent:
    t: float
    kind: str
    payload: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "kind": self.kind, "payload": self.payload}, sort_keys=True)


class EventTimeline:
    def __init__(self, events: Sequence[TimelineEvent] = ()):
        self._events: List[Tuple[float, int, int, TimelineEvent]] = []
        for e in events:
            self.add(e.t, e.kind, e.payload)

    def add(self, t: float, kind: str, payload: Optional[dict] = None) -> TimelineEvent:
        if kind not in KIND_PRIORITY:
            raise ValueError(f"unknown timeline event kind {kind!r}")
        event = TimelineEvent(float(t), kind, payload or {})
        self._events.append((event.t, KIND_PRIORITY[kind], len(self._events), event))
        self._events.sort(key=lambda x: x[:3])
        return event

    def __iter__(self) -> Iterator[TimelineEvent]:
        return (e for *_, e in self._events)

    def __len__(self) -> int:
        return len(self._events)

    def of_kind(self, kind: str) -> List[TimelineEvent]:
        return [e for e in self if e.kind == kind]

    def first(self, kind: str) -> Optional[TimelineEvent]:
        return next((e for e in self if e.kind == kind), None)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self)


@dataclass(frozen=True)
class SwitchoverMetrics:
    detected: bool
    detection_time: Optional[float] = None
    execution_time: Optional[float] = None
    total_so: Optional[float] = None
    mttfd: Optional[float] = None
    improvement_pct: Optional[float] = None

    @classmethod
    def not_detected(cls) -> "SwitchoverMetrics":
        return cls(False)


def compute_metrics(
    timeline: EventTimeline,
    hard_failure_t: Optional[float],
    degradation_onset_t: Optional[float],
    baseline_total: Optional[float],
) -> SwitchoverMetrics:
    """Detection lag/lead, downtime and MTTFD for the first switchover.

    Downtime counts only time after the hard failure: a switchover that
    completes before the failure costs nothing, and one that starts after
    it costs the detection delay plus execution.
    """
    start = timeline.first("switchover_start")
    complete = timeline.first("switchover_complete")
    if start is None or complete is None:
        return SwitchoverMetrics.not_detected()
    detect_t, done_t = start.t, complete.t
    execution = done_t - detect_t
    mttfd = None if degradation_onset_t is None else detect_t - degradation_onset_t
    if hard_failure_t is None:
        return SwitchoverMetrics(True, None, execution, None, mttfd, None)
    detection = detect_t - hard_failure_t
    if detect_t < hard_failure_t:
        total = max(hard_failure_t, done_t) - max(hard_failure_t, detect_t)
    else:
        total = detect_t + execution - hard_failure_t
    improvement = None
    if baseline_total:
        improvement = 100.0 * (baseline_total - total) / baseline_total
    return SwitchoverMetrics(True, detection, execution, total, mttfd, improvement)


@dataclass
class ScenarioRun:
    scenario: Scenario
    strategy: Strategy
    timeline: EventTimeline
    metrics: SwitchoverMetrics
    posterior_rows: List[dict] = field(default_factory=list)
    decisions: List[dict] = field(default_factory=list)
    cascades: List[CascadeObservation] = field(default_factory=list)

    def __iter__(self):
        yield self.timeline
        yield self.metrics

    def posterior_series(self, target: str = SWITCHOVER) -> List[Tuple[float, float]]:
        return [(r["t"], r["posterior"]) for r in self.posterior_rows if r["target"] == target]

    def first_crossing(self, threshold: float, target: str = SWITCHOVER) -> Optional[float]:
        for t, p in self.posterior_series(target):
            if p > threshold:
                return t
        return None


@dataclass
class _Ramp:
    start: float
    slope: float
    target: float

    def value(self, base: float, t: float) -> float:
        v = base + self.slope * (t - self.start)
        return min(v, self.target) if self.slope >= 0 else max(v, self.target)


def _validate(scenario: Scenario, persona: Persona, services: Dict[str, List[str]]) -> None:
    baselines = persona.pipeline.baselines
    for metric in {m for ms in services.values() for m in ms}:
        if metric not in baselines:
            raise ConfigError(f"no baseline for metric {metric!r}")
    for inj in scenario.injections:
        if inj.service is None:
            continue
        if inj.service not in services:
            raise ConfigError(f"{scenario.name}: unknown service {inj.service!r}")
        if inj.kind is InjectionKind.METRIC_RAMP:
            metric = inj.params["metric"]
            if metric not in baselines:
                raise ConfigError(f"{scenario.name}: no baseline for metric {metric!r}")
            if metric not in services[inj.service]:
                raise ConfigError(f"{scenario.name}: {inj.service} does not emit {metric!r}")


class Simulator:
    """Runs scenarios against a persona.

    Parameters
    ----------
    persona : Persona
        Provides the pipeline and quorum. Its CPT store is mutated by
        adaptive runs.
    services : dict
        Service catalog, ``{service: [metric, ...]}``; every listed stream
        emits one sample per tick.
    noise : float
        Relative Gaussian jitter on healthy readings, drawn from the
        scenario's seeded generator.
    """

    def __init__(self, persona: Persona, services: Dict[str, List[str]], noise: float = 0.0):
        self.persona = persona
        self.services = {k: list(v) for k, v in services.items()}
        self.noise = noise
        persona.pipeline.targets = tuple(self.services)

    @property
    def pipeline(self) -> ArbiterPipeline:
        return self.persona.pipeline

    def simulate(self, scenario: Scenario, strategy=None) -> ScenarioRun:
        strategy = Strategy.parse(strategy or scenario.strategy)
        _validate(scenario, self.persona, self.services)
        pipe = self.pipeline
        pipe.learn = strategy is Strategy.ADAPTIVE_BAYESIAN
        pipe.new_episode()
        rng = np.random.default_rng(scenario.seed)
        baselines = pipe.baselines
        targets = (SWITCHOVER,) + tuple(self.services)
        th = pipe.thresholds

        timeline = EventTimeline()
        run = ScenarioRun(scenario, strategy, timeline, SwitchoverMetrics.not_detected())
        ramps: Dict[Tuple[str, str], _Ramp] = {}
        hard_failure: Optional[float] = None
        start: Optional[float] = None
        prev_post: Optional[float] = None
        pending = list(scenario.injections)
        n_ticks = int(math.floor(scenario.duration / scenario.tick + 1e-9))

        def begin_switchover(t: float, cause: str) -> None:
            nonlocal start
            start = t
            timeline.add(t, "switchover_start", {"cause": cause})
            timeline.add(t + scenario.execution_time, "switchover_complete", {"cause": cause})

        for k in range(n_ticks + 1):
            t = round(k * scenario.tick, 9)
            while pending and pending[0].time <= t:
                inj = pending.pop(0)
                timeline.add(inj.time, "injection", inj.to_dict())
                if inj.kind is InjectionKind.METRIC_RAMP:
                    p = inj.params
                    ramps[(inj.service, p["metric"])] = _Ramp(
                        inj.time, float(p["slope"]), float(p.get("target", math.inf))
                    )
                elif inj.kind is InjectionKind.SERVICE_FAILURE:
                    run.cascades.extend(pipe.record_failure(inj.service, inj.time))
                elif inj.kind is InjectionKind.HEARTBEAT_LOSS:
                    hard_failure = inj.time if hard_failure is None else hard_failure
                    pipe.confirm_switchover(SwitchoverLabel(inj.time, inj.service, "heartbeat"))
                elif inj.kind is InjectionKind.USER_SWITCHOVER:
                    pipe.confirm_switchover(SwitchoverLabel(inj.time, inj.service, "user"))
                    if start is None:
                        begin_switchover(inj.time, "user")
                elif inj.kind is InjectionKind.RECOVERY:
                    for key in [key for key in ramps if key[0] == inj.service]:
                        del ramps[key]
                    pipe.recover(inj.service)

            for service, metrics in self.services.items():
                for metric in metrics:
                    base = baselines[metric].baseline_value
                    ramp = ramps.get((service, metric))
                    if ramp is not None:
                        value = ramp.value(base, t)
                    elif self.noise:
                        value = max(0.0, base * (1.0 + self.noise * rng.standard_normal()))
                    else:
                        value = base
                    pipe.ingest(
                        TelemetrySample(service, metric, value, t, METRIC_TIERS.get(metric, Tier.APPLICATION))
                    )

            if strategy.bayesian:
                emit = self.persona.quorum.leader is not None
                result = pipe.step(t, emit=emit)
                for target in targets:
                    risk = result.assessments[target]
                    run.posterior_rows.append(
                        {
                            "t": t,
                            "target": target,
                            "p_eff": risk.p_eff,
                            "posterior": risk.posterior,
                            "contributors": ";".join(s for s, _ in risk.contributing),
                        }
                    )
                post = result.risk.posterior
                for edge, name in ((th.upper, "upper"), (th.lower, "lower")):
                    if prev_post is not None and (prev_post > edge) != (post > edge):
                        timeline.add(
                            t,
                            "inference",
                            {"edge": name, "threshold": edge, "posterior": post,
                             "direction": "up" if post > edge else "down"},
                        )
                prev_post = post
                if emit:
                    run.decisions.append(
                        {"t": t, "posterior": post, "decision": result.state.decision.value}
                    )
                    if result.state.changed:
                        timeline.add(
                            t, "decision",
                            {"decision": result.state.decision.value, "posterior": post},
                        )
                    if result.state.decision is Decision.SWITCHOVER and start is None:
                        begin_switchover(t, "posterior")
            else:
                pipe.learn_step()
                if (
                    hard_failure is not None
                    and start is None
                    and t >= hard_failure + strategy.timeout
                ):
                    run.decisions.append({"t": t, "posterior": None, "decision": Decision.SWITCHOVER.value})
                    timeline.add(t, "decision", {"decision": Decision.SWITCHOVER.value, "cause": "heartbeat_timeout"})
                    begin_switchover(t, "heartbeat_timeout")
            pipe.prune(t)

        # late cascades observed on the final tick still train the model
        pipe.learn_step()
        baseline_total = BASELINE_STRATEGY.timeout + scenario.execution_time
        run.metrics = compute_metrics(timeline, hard_failure, scenario.onset_time, baseline_total)
        return run

    def run_sequence(self, scenarios: Sequence[Scenario], strategy=None) -> List[ScenarioRun]:
        return [self.simulate(s, strategy) for s in scenarios]


def run_scenario(scenario: Scenario, persona: Persona, services=None, strategy=None):
    """Run one scenario; returns ``(timeline, metrics)``."""
    sim = Simulator(persona, services or default_services())
    run = sim.simulate(scenario, strategy)
    return run.timeline, run.metrics


def run_sequence(scenarios: Sequence[Scenario], persona: Persona, services=None, strategy=None) -> List[SwitchoverMetrics]:
    sim = Simulator(persona, services or default_services())
    return [r.metrics for r in sim.run_sequence(scenarios, strategy)]


# ----------------------------------------------------------------------
# persona construction and bundled fixtures


def default_registry_path() -> Path:
    return Path(str(DATA_DIR / "personas.json"))


def default_config() -> PersonaConfig:
    return load_registry(default_registry_path())[0]


def default_services() -> Dict[str, List[str]]:
    return default_config().services


def build_persona(
    cfg: Optional[PersonaConfig] = None,
    cpt_in=None,
    priors=None,
    baselines=None,
    thresholds: Thresholds = Thresholds(),
    **pipeline_kw,
) -> Persona:
    """Instantiate a persona from a registry entry.

    ``cpt_in`` (snapshot path or :class:`CptStore`) takes precedence over
    priors; explicit ``priors``/``baselines`` override the registry files.
    """
    cfg = cfg or default_config()
    base_src = baselines if baselines is not None else cfg.baselines
    if base_src is None:
        raise ConfigError(f"persona {cfg.persona_id}: no baselines configured")
    base: Dict[str, SiteBaseline] = load_baselines(base_src)
    if isinstance(cpt_in, CptStore):
        cpts = cpt_in.snapshot()
    elif cpt_in is not None:
        cpts = CptStore.load(cpt_in)
    else:
        cpts = CptStore()
        prior_src = priors if priors is not None else cfg.priors
        if prior_src is not None:
            cpts.seed_priors(load_priors(prior_src))
    cpts.touched.clear()
    pipe = ArbiterPipeline(base, cpts, csg=cfg.csg, thresholds=thresholds, **pipeline_kw)
    if cpt_in is not None and not isinstance(cpt_in, CptStore):
        counts = Path(str(cpt_in) + ".counts.json")
        if counts.exists():
            pipe.cascades.load_counts(json.loads(counts.read_text()))
    return Persona(cfg.persona_id, pipe, resource_quota=cfg.quota)


def build_simulator(cfg: Optional[PersonaConfig] = None, **kw) -> Simulator:
    cfg = cfg or default_config()
    return Simulator(build_persona(cfg, **kw), cfg.services, cfg.noise)


def save_state(persona: Persona, path) -> None:
    """Write the CPT snapshot plus a sidecar holding cascade counters."""
    path = Path(path)
    persona.pipeline.cpts.save(path)
    Path(str(path) + ".counts.json").write_text(
        json.dumps(persona.pipeline.cascades.counts(), indent=2, sort_keys=True) + "\n"
    )


def bundled_sequence() -> List[Scenario]:
    return [load_scenario(name) for name in ("event1", "event2", "event3")]


# ----------------------------------------------------------------------
# artifact serialization

METRICS_HEADER = ("strategy", "event", "detection_s", "execution_s", "total_s", "improvement_pct")
POSTERIOR_HEADER = ("t", "target", "p_eff", "posterior", "contributors")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}" if not float(x).is_integer() else f"{x:.1f}"
    return str(x)


def metrics_csv(rows: Sequence[Tuple[Strategy, str, SwitchoverMetrics]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for strategy, event, m in rows:
        w.writerow(
            [strategy.value, event, _fmt(m.detection_time), _fmt(m.execution_time),
             _fmt(m.total_so), "" if m.improvement_pct is None else f"{m.improvement_pct:.1f}"]
        )
    return buf.getvalue()


def posterior_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POSTERIOR_HEADER)
    for r in rows:
        w.writerow([_fmt(r["t"]), r["target"], f"{r['p_eff']:.6f}", f"{r['posterior']:.6f}", r["contributors"]])
    return buf.getvalue()


def decisions_jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def metrics_dict(m: SwitchoverMetrics) -> dict:
    return asdict(m)
