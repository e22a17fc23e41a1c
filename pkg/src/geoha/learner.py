"""Adaptive-rate online updates of the learned conditional probability tables."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from .cascade import CascadeDetector, CascadeObservation
from .exceptions import ConfigError, ContractViolation

SWITCHOVER = "SO"

# retention weight approached at full confidence
_MATURE_RATE = 0.9
_MAX_CONFIDENCE = 0.95


@dataclass(frozen=True)
class LearnerConfig:
    alpha_base: float = 0.7
    n_req: int = 10

    def __post_init__(self):
        if not 0 <= self.alpha_base < _MATURE_RATE:
            raise ConfigError(f"alpha_base must lie in [0, 0.9), got {self.alpha_base}")
        if int(self.n_req) != self.n_req or self.n_req < 1:
            raise ConfigError(f"n_req must be a positive integer, got {self.n_req}")


@dataclass(frozen=True)
class CptEntry:
    source: str
    target: str
    probability: float
    n_obs: int = 0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ContractViolation(
                f"P({self.target}|{self.source})={self.probability} outside [0, 1]"
            )
        if self.n_obs < 0:
            raise ContractViolation("n_obs must be >= 0")


def adaptive_rate(n_obs: int, cfg: LearnerConfig = LearnerConfig()) -> float:
    """Retention weight for the old probability.

    Starts at ``alpha_base`` for a new edge and blends toward 0.9 as the
    edge accumulates observations, capped at 95% confidence.
    """
    if n_obs < 0:
        raise ContractViolation("n_obs must be >= 0")
    c = min(_MAX_CONFIDENCE, n_obs / cfg.n_req)
    return cfg.alpha_base * (1 - c) + _MATURE_RATE * c


def update_cpt(entry: CptEntry, observed_ratio: float, cfg: LearnerConfig = LearnerConfig()) -> CptEntry:
    if not 0.0 <= observed_ratio <= 1.0:
        raise ContractViolation(f"observed ratio {observed_ratio} outside [0, 1]")
    alpha = adaptive_rate(entry.n_obs, cfg)
    p = alpha * entry.probability + (1 - alpha) * observed_ratio
    # guard against rounding just past the unit interval
    p = min(1.0, max(0.0, p))
    return replace(entry, probability=p, n_obs=entry.n_obs + 1)


class CptStore:
    """``target -> source -> CptEntry`` mapping.

    Absent entries are meaningful: inference skips them rather than
    inventing a conditional.
    """

    def __init__(self):
        self._tables: Dict[str, Dict[str, CptEntry]] = {}
        self.touched: set = set()

    def __len__(self) -> int:
        return sum(len(t) for t in self._tables.values())

    def __iter__(self) -> Iterator[CptEntry]:
        for target in sorted(self._tables):
            for source in sorted(self._tables[target]):
                yield self._tables[target][source]

    def __eq__(self, other) -> bool:
        return isinstance(other, CptStore) and self.to_dict() == other.to_dict()

    def get(self, target: str, source: str) -> Optional[CptEntry]:
        return self._tables.get(target, {}).get(source)

    def probability(self, target: str, source: str) -> Optional[float]:
        entry = self.get(target, source)
        return None if entry is None else entry.probability

    def put(self, entry: CptEntry) -> None:
        self._tables.setdefault(entry.target, {})[entry.source] = entry
        self.touched.add((entry.target, entry.source))

    def targets(self) -> List[str]:
        return sorted(self._tables)

    def seed_priors(self, prior_map: Mapping) -> None:
        """Install expert priors with ``n_obs = 0``.

        Accepts either ``{(source, target): p}`` or the nested
        ``{target: {source: p}}`` form used by prior files.
        """
        for key, value in prior_map.items():
            if isinstance(value, Mapping):
                pairs = [((source, key), p) for source, p in value.items()]
            else:
                source, target = key
                pairs = [((source, target), value)]
            for (source, target), p in pairs:
                p = float(p)
                if not 0.0 <= p <= 1.0:
                    raise ConfigError(f"prior P({target}|{source})={p} outside [0, 1]")
                self.put(CptEntry(source, target, p, 0))

    def snapshot(self) -> "CptStore":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            target: {
                source: {"p": e.probability, "n_obs": e.n_obs}
                for source, e in sorted(self._tables[target].items())
            }
            for target in sorted(self._tables)
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CptStore":
        store = cls()
        for target, row in data.items():
            for source, cell in row.items():
                store.put(CptEntry(source, target, float(cell["p"]), int(cell["n_obs"])))
        store.touched.clear()
        return store

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CptStore":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read CPT snapshot {path}: {exc}") from exc


def load_priors(source: Union[str, Path, Mapping]) -> Dict[str, Dict[str, float]]:
    if isinstance(source, Mapping):
        return {t: dict(row) for t, row in source.items()}
    try:
        return json.loads(Path(source).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read priors {source}: {exc}") from exc


class OnlineCptLearner:
    """Turns cascade observations into CPT updates.

    Parameters
    ----------
    store : CptStore
        Table to update in place.
    cfg : LearnerConfig
    csg : iterable of str
        Critical services. A cascade into one of them also refreshes the
        source's switchover conditional ``P(SO | source)``.
    initial_probability : float
        Starting belief for an edge with no prior; zero means "no evidence yet".
    """

    def __init__(
        self,
        store: CptStore,
        cfg: LearnerConfig = LearnerConfig(),
        csg: Iterable[str] = (),
        initial_probability: float = 0.0,
    ):
        self.store = store
        self.cfg = cfg
        self.csg = frozenset(csg)
        self.initial_probability = initial_probability

    def _refresh(self, source: str, target: str, ratio: float) -> CptEntry:
        entry = self.store.get(target, source) or CptEntry(
            source, target, self.initial_probability, 0
        )
        new = update_cpt(entry, ratio, self.cfg)
        self.store.put(new)
        return new

    def apply_cascades(
        self, observations: Iterable[CascadeObservation], db: CascadeDetector
    ) -> List[Tuple[str, str, float]]:
        updated = []
        so_done = set()
        for obs in observations:
            new = self._refresh(obs.source, obs.target, db.cascade_ratio(obs.source, obs.target))
            updated.append((obs.source, obs.target, new.probability))
            if obs.target in self.csg and obs.source not in so_done:
                so_done.add(obs.source)
                new = self._refresh(obs.source, SWITCHOVER, db.switchover_ratio(obs.source))
                updated.append((obs.source, SWITCHOVER, new.probability))
        return updated

    def apply_confirmation(
        self, sources: Iterable[str], db: CascadeDetector, skip: Iterable[str] = ()
    ) -> List[Tuple[str, str, float]]:
        """Refresh ``P(SO | source)`` for services credited by a switchover label."""
        skip = set(skip)
        updated = []
        for source in sources:
            if source in skip:
                continue
            new = self._refresh(source, SWITCHOVER, db.switchover_ratio(source))
            updated.append((source, SWITCHOVER, new.probability))
        return updated


def apply_cascades(
    observations: Iterable[CascadeObservation],
    db: CascadeDetector,
    store: CptStore,
    cfg: LearnerConfig = LearnerConfig(),
    csg: Iterable[str] = (),
) -> List[Tuple[str, str, float]]:
    return OnlineCptLearner(store, cfg, csg).apply_cascades(observations, db)
