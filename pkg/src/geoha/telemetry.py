"""Multi-tier telemetry store with site-normalized degradation assessment.

Samples are kept per ``(service, metric)`` stream in a bounded in-memory
buffer and, optionally, mirrored to an append-only JSON Lines log.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from .exceptions import ConfigError, ContractViolation, MonotonicityError

DEFAULT_HORIZON = 3600.0


class Tier(str, Enum):
    NODE = "node"
    NETWORK = "network"
    APPLICATION = "application"
    CSG = "csg"


@dataclass(frozen=True)
class TelemetrySample:
    service: str
    metric: str
    value: float
    t: float
    tier: Tier = Tier.APPLICATION

    def __post_init__(self):
        if not isinstance(self.tier, Tier):
            try:
                object.__setattr__(self, "tier", Tier(self.tier))
            except ValueError:
                raise ContractViolation(f"unknown telemetry tier {self.tier!r}") from None
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ContractViolation(f"timestamp must be finite and >= 0, got {self.t!r}")
        if not math.isfinite(self.value):
            raise ContractViolation(f"sample value must be finite, got {self.value!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "service": self.service,
                "metric": self.metric,
                "value": float(self.value),
                "t": float(self.t),
                "tier": self.tier.value,
            }
        )

    @classmethod
    def from_dict(cls, d: Mapping) -> "TelemetrySample":
        return cls(
            service=str(d["service"]),
            metric=str(d["metric"]),
            value=float(d["value"]),
            t=float(d["t"]),
            tier=Tier(d.get("tier", Tier.APPLICATION.value)),
        )


@dataclass(frozen=True)
class SiteBaseline:
    """Deployment-scale reference for one metric.

    ``degrade_threshold`` is a ratio to ``baseline_value``: a reading is
    degraded once ``value / baseline_value`` exceeds it.
    """

    metric: str
    baseline_value: float
    degrade_threshold: float

    def __post_init__(self):
        if not self.baseline_value > 0:
            raise ConfigError(f"{self.metric}: baseline_value must be > 0")
        if not self.degrade_threshold > 0:
            raise ConfigError(f"{self.metric}: degrade_threshold must be > 0")


@dataclass
class DegradationReport:
    degraded_services: List[str] = field(default_factory=list)
    evidence: Dict[str, List[Tuple[str, float]]] = field(default_factory=dict)

    def __contains__(self, service: str) -> bool:
        return service in self.evidence

    def add(self, service: str, metric: str, normalized: float) -> None:
        if service not in self.evidence:
            self.degraded_services.append(service)
            self.evidence[service] = []
        self.evidence[service].append((metric, normalized))


def load_baselines(source: Union[str, Path, Mapping]) -> Dict[str, SiteBaseline]:
    """Read ``{metric: {"baseline_value": .., "degrade_threshold": ..}}``."""
    if isinstance(source, Mapping):
        raw = source
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read baselines {source}: {exc}") from exc
    try:
        return {
            metric: SiteBaseline(
                metric, float(spec["baseline_value"]), float(spec["degrade_threshold"])
            )
            for metric, spec in raw.items()
        }
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed baseline entry: {exc}") from exc


def normalize(sample: TelemetrySample, baseline: SiteBaseline) -> float:
    """Scale-free ratio of a reading to its site baseline."""
    if sample.metric != baseline.metric:
        raise ConfigError(
            f"baseline for {baseline.metric!r} applied to metric {sample.metric!r}"
        )
    return sample.value / baseline.baseline_value


class TelemetryStore:
    """Per-persona telemetry buffer.

    Parameters
    ----------
    horizon : float
        Seconds of history retained per stream, measured back from the
        stream's newest sample.
    log_path : path-like, optional
        When given, every accepted sample is appended to this JSONL file.
    """

    def __init__(self, horizon: float = DEFAULT_HORIZON, log_path=None):
        if not horizon > 0:
            raise ConfigError("horizon must be > 0")
        self.horizon = horizon
        self.log_path = Path(log_path) if log_path is not None else None
        self._streams: Dict[Tuple[str, str], deque] = {}
        self._times: Dict[Tuple[str, str], deque] = {}

    def __len__(self) -> int:
        return sum(len(s) for s in self._streams.values())

    @property
    def services(self) -> List[str]:
        seen = dict.fromkeys(svc for svc, _ in self._streams)
        return list(seen)

    def keys(self):
        return set(self._streams)

    def ingest(self, sample: TelemetrySample) -> bool:
        key = (sample.service, sample.metric)
        times = self._times.get(key)
        if times and sample.t < times[-1]:
            raise MonotonicityError(
                f"{key}: sample at t={sample.t} precedes stream head t={times[-1]}"
            )
        if times is None:
            times = self._times[key] = deque()
            self._streams[key] = deque()
        stream = self._streams[key]
        stream.append(sample)
        times.append(sample.t)
        cutoff = sample.t - self.horizon
        while times and times[0] < cutoff:
            times.popleft()
            stream.popleft()
        if self.log_path is not None:
            with self.log_path.open("a") as fh:
                fh.write(sample.to_json() + "\n")
        return True

    def extend(self, samples: Iterable[TelemetrySample]) -> int:
        n = 0
        for sample in samples:
            self.ingest(sample)
            n += 1
        return n

    def _stream_window(self, key, start: float, end: float) -> List[TelemetrySample]:
        times = list(self._times[key])
        lo, hi = bisect_left(times, start), bisect_right(times, end)
        stream = self._streams[key]
        return [stream[i] for i in range(lo, hi)]

    def query_window(self, service, start: float, end: float) -> List[TelemetrySample]:
        """Samples with ``start <= t <= end``, ordered by timestamp.

        ``service=None`` queries every service.
        """
        if start > end:
            raise ContractViolation(f"window start {start} > end {end}")
        out: List[TelemetrySample] = []
        for key in self._streams:
            if service is None or key[0] == service:
                out.extend(self._stream_window(key, start, end))
        # stable: per-stream order is preserved for equal timestamps
        out.sort(key=lambda s: s.t)
        return out

    def latest(self, now: float, window: float) -> Dict[Tuple[str, str], TelemetrySample]:
        """Newest sample of each stream inside ``[now - window, now]``."""
        out = {}
        for key in self._streams:
            samples = self._stream_window(key, now - window, now)
            if samples:
                out[key] = samples[-1]
        return out

    def assess_degradation(
        self, now: float, baselines: Mapping[str, SiteBaseline], window: float
    ) -> DegradationReport:
        """Flag every service with a reading above its threshold in the window.

        Services are listed in the order their streams were first seen, and
        the comparison is strict: a ratio equal to the threshold is healthy.
        Metrics without a baseline are ignored.
        """
        if not window > 0:
            raise ContractViolation("window must be > 0")
        report = DegradationReport()
        for key in self._streams:
            service, metric = key
            baseline = baselines.get(metric)
            if baseline is None:
                continue
            for sample in self._stream_window(key, now - window, now):
                ratio = normalize(sample, baseline)
                if ratio > baseline.degrade_threshold:
                    report.add(service, metric, ratio)
        return report


def read_log(path) -> List[TelemetrySample]:
    with Path(path).open() as fh:
        return [TelemetrySample.from_dict(json.loads(line)) for line in fh if line.strip()]


def replay(path, store: Optional[TelemetryStore] = None) -> TelemetryStore:
    store = store if store is not None else TelemetryStore()
    store.extend(read_log(path))
    return store
