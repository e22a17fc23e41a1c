"""Noisy-OR risk aggregation followed by an odds-form evidence update."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

from .exceptions import ConfigError, ContractViolation
from .learner import SWITCHOVER, CptStore
from .telemetry import DegradationReport, SiteBaseline, TelemetryStore, normalize

DEFAULT_BASE_PRIOR = 0.05
DEFAULT_SLOPE = 2.0
RATIO_FLOOR = 0.2
RATIO_CEIL = 5.0


@dataclass(frozen=True)
class InferenceConfig:
    base_prior: float = DEFAULT_BASE_PRIOR
    slope: float = DEFAULT_SLOPE
    ratio_floor: float = RATIO_FLOOR
    ratio_ceil: float = RATIO_CEIL

    def __post_init__(self):
        if not 0 < self.base_prior < 1:
            raise ConfigError("base_prior must lie in (0, 1)")
        if not 0 < self.ratio_floor <= 1 <= self.ratio_ceil:
            raise ConfigError("likelihood clamp must bracket 1.0")


@dataclass(frozen=True)
class EvidenceVector:
    items: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple((str(m), float(r)) for m, r in self.items))
        for metric, ratio in self.items:
            if not ratio > 0 or not math.isfinite(ratio):
                raise ContractViolation(f"likelihood ratio for {metric} must be finite and > 0")

    @property
    def likelihood(self) -> float:
        return math.prod(r for _, r in self.items)

    @classmethod
    def neutral(cls, metrics: Iterable[str] = ()) -> "EvidenceVector":
        return cls(tuple((m, 1.0) for m in metrics))


@dataclass
class RiskAssessment:
    target: str
    p_eff: float
    posterior: float
    contributing: List[Tuple[str, float]] = field(default_factory=list)
    folds: int = 0


def _check_probability(p: float, what: str = "probability") -> None:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"{what} {p} outside [0, 1]")


def noisy_or(base: float, conditionals: Iterable[float]) -> float:
    """Probability that at least one independent cause fires."""
    _check_probability(base, "base prior")
    survive = 1.0 - base
    for p in conditionals:
        _check_probability(p, "conditional")
        survive *= 1.0 - p
    return 1.0 - survive


def bayesian_update(p_eff: float, evidence: EvidenceVector) -> float:
    """Scale the prior odds by the product of likelihood ratios."""
    _check_probability(p_eff, "p_eff")
    if p_eff in (0.0, 1.0):
        return p_eff
    lik = evidence.likelihood
    num = p_eff * lik
    post = num / (num + (1.0 - p_eff))
    return min(1.0, max(0.0, post))


def likelihood_ratio(normalized: float, threshold: float, cfg: InferenceConfig = InferenceConfig()) -> float:
    """Map a normalized reading to a bounded likelihood ratio.

    Exactly 1.0 at the degradation threshold, ``exp(slope * excess)``
    elsewhere, clamped to ``[ratio_floor, ratio_ceil]``.
    """
    exponent = cfg.slope * (normalized - threshold)
    # avoid overflow before clamping
    exponent = max(min(exponent, 50.0), -50.0)
    return min(cfg.ratio_ceil, max(cfg.ratio_floor, math.exp(exponent)))


def evidence_from_telemetry(
    store: TelemetryStore,
    now: float,
    baselines: Mapping[str, SiteBaseline],
    window: float,
    cfg: InferenceConfig = InferenceConfig(),
) -> EvidenceVector:
    """One likelihood ratio per stream, from its newest reading in the window."""
    items = []
    for (service, metric), sample in store.latest(now, window).items():
        baseline = baselines.get(metric)
        if baseline is None:
            continue
        ratio = likelihood_ratio(normalize(sample, baseline), baseline.degrade_threshold, cfg)
        items.append((f"{service}.{metric}", ratio))
    return EvidenceVector(tuple(items))


def aggregate(
    degraded: Sequence[str], cpts: CptStore, target: str, base_prior: float
) -> Tuple[float, List[Tuple[str, float]], int]:
    """Noisy-OR fold of ``P(target | s)`` over degraded services.

    Services without a learned entry are skipped. Returns ``(p_eff,
    contributing, folds)`` where ``folds`` counts visited services.
    """
    p_eff = base_prior
    contributing = []
    folds = 0
    for service in degraded:
        folds += 1
        p_cond = cpts.probability(target, service)
        if p_cond is None:
            continue
        p_eff = 1.0 - (1.0 - p_eff) * (1.0 - p_cond)
        contributing.append((service, p_cond))
    return p_eff, contributing, folds


def predict(
    report: DegradationReport,
    cpts: CptStore,
    evidence: Optional[EvidenceVector] = None,
    cfg: InferenceConfig = InferenceConfig(),
    target: str = SWITCHOVER,
) -> RiskAssessment:
    p_eff, contributing, folds = aggregate(
        report.degraded_services, cpts, target, cfg.base_prior
    )
    posterior = bayesian_update(p_eff, evidence or EvidenceVector())
    return RiskAssessment(target, p_eff, posterior, contributing, folds)
