"""Three-member arbitration quorum and multiplexed arbiter personas.

Leadership follows a fixed priority among live members (arbiter first,
then the active cluster, then the standby) so runs are reproducible.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from .exceptions import ConfigError, QuorumLostError
from .learner import CptStore
from .pipeline import ArbiterPipeline


class MemberId(str, Enum):
    ARBITER = "ARBITER"
    ACTIVE = "ACTIVE"
    STANDBY = "STANDBY"


class Role(str, Enum):
    LEADER = "LEADER"
    FOLLOWER = "FOLLOWER"
    DOWN = "DOWN"


PRIORITY: Tuple[MemberId, ...] = (MemberId.ARBITER, MemberId.ACTIVE, MemberId.STANDBY)


@dataclass(frozen=True)
class Member:
    id: MemberId
    alive: bool = True
    role: Role = Role.FOLLOWER
    term: int = 0


@dataclass(frozen=True)
class QuorumState:
    members: Tuple[Member, ...] = tuple(Member(m) for m in PRIORITY)
    leader: Optional[MemberId] = None
    term: int = 0

    def member(self, mid) -> Member:
        mid = MemberId(mid)
        for m in self.members:
            if m.id == mid:
                return m
        raise KeyError(mid)

    @property
    def alive(self) -> List[MemberId]:
        return [m.id for m in self.members if m.alive]

    @property
    def has_quorum(self) -> bool:
        return len(self.alive) >= 2

    def _with(self, member: Member) -> "QuorumState":
        return replace(
            self, members=tuple(member if m.id == member.id else m for m in self.members)
        )


def elect(state: QuorumState, exclude: Iterable = ()) -> QuorumState:
    """Pick the highest-priority live member as leader and bump the term.

    Members in ``exclude`` are passed over when any other live member can
    lead; a rejoining member uses this to come back as a follower.
    """
    alive = state.alive
    if len(alive) < 2:
        raise QuorumLostError(f"only {len(alive)} member(s) alive")
    exclude = {MemberId(x) for x in exclude}
    candidates = [m for m in PRIORITY if m in alive and m not in exclude] or [
        m for m in PRIORITY if m in alive
    ]
    leader = candidates[0]
    term = state.term + 1
    members = tuple(
        replace(m, role=Role.LEADER if m.id == leader else Role.FOLLOWER, term=term)
        if m.alive
        else m
        for m in state.members
    )
    return QuorumState(members, leader, term)


def fail_member(state: QuorumState, mid) -> QuorumState:
    member = state.member(mid)
    if not member.alive:
        return state
    state = state._with(replace(member, alive=False, role=Role.DOWN))
    if state.has_quorum:
        if state.leader == member.id:
            return elect(replace(state, leader=None))
        return state
    # minority side: nobody may lead
    members = tuple(replace(m, role=Role.FOLLOWER) if m.alive else m for m in state.members)
    return replace(state, members=members, leader=None)


def rejoin(state: QuorumState, mid) -> QuorumState:
    member = state.member(mid)
    if member.alive:
        return state
    state = state._with(replace(member, alive=True, role=Role.FOLLOWER, term=state.term))
    if state.leader is None and state.has_quorum:
        return elect(state, exclude=(member.id,))
    return state


def bootstrap() -> QuorumState:
    return elect(QuorumState())


@dataclass
class Persona:
    """Isolated arbitration state machine for one Geo-HA domain.

    Events wait in ``inbox`` and at most ``resource_quota`` of them are
    consumed per tick; the rest roll over.
    """

    persona_id: str
    pipeline: ArbiterPipeline
    quorum: QuorumState = field(default_factory=bootstrap)
    resource_quota: int = 100
    inbox: Deque = field(default_factory=deque)
    snapshot: Optional[CptStore] = None
    member_cpts: Dict[MemberId, CptStore] = field(default_factory=dict)

    def __post_init__(self):
        if self.resource_quota < 1:
            raise ConfigError("resource_quota must be >= 1")
        if self.snapshot is None:
            self.snapshot = self.pipeline.cpts.snapshot()

    def submit(self, *events) -> None:
        self.inbox.extend(events)

    def fail(self, mid) -> None:
        self.quorum = fail_member(self.quorum, mid)
        self.member_cpts.pop(MemberId(mid), None)

    def rejoin(self, mid) -> None:
        was_alive = self.quorum.member(mid).alive
        self.quorum = rejoin(self.quorum, mid)
        if not was_alive:
            self.member_cpts[MemberId(mid)] = self.snapshot.snapshot()

    def checkpoint(self) -> None:
        self.snapshot = self.pipeline.cpts.snapshot()


def step_personas(personas: List[Persona], tick: float) -> List[dict]:
    """Advance every persona by one tick in ``persona_id`` order.

    Returns one decision record per persona whose quorum has a leader;
    personas without quorum keep their last decision and emit nothing.
    """
    logs = []
    for persona in sorted(personas, key=lambda p: p.persona_id):
        budget = persona.resource_quota
        while persona.inbox and budget > 0:
            persona.pipeline.handle(persona.inbox.popleft())
            budget -= 1
        leader = persona.quorum.leader
        result = persona.pipeline.step(tick, emit=leader is not None)
        if leader is None:
            continue
        logs.append(
            {
                "persona": persona.persona_id,
                "t": tick,
                "leader": leader.value,
                "term": persona.quorum.term,
                "posterior": result.risk.posterior,
                "decision": result.state.decision.value,
                "deferred": len(persona.inbox),
            }
        )
    return logs


@dataclass(frozen=True)
class PersonaConfig:
    """Registry entry describing how to build one persona."""

    persona_id: str
    quota: int = 100
    baselines: Optional[str] = None
    priors: Optional[str] = None
    cpt_snapshot: Optional[str] = None
    services: Dict[str, List[str]] = field(default_factory=dict)
    csg: Tuple[str, ...] = ()
    noise: float = 0.0


def load_registry(path) -> List[PersonaConfig]:
    """Parse a persona registry; relative paths resolve against its folder."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read persona registry {path}: {exc}") from exc
    entries = raw["personas"] if isinstance(raw, dict) else raw
    out = []
    for e in entries:
        def resolve(key):
            v = e.get(key)
            if v is None:
                return None
            p = Path(v)
            return str(p if p.is_absolute() else path.parent / p)

        try:
            out.append(
                PersonaConfig(
                    persona_id=str(e["persona_id"]),
                    quota=int(e.get("quota", 100)),
                    baselines=resolve("baselines"),
                    priors=resolve("priors"),
                    cpt_snapshot=resolve("cpt_snapshot"),
                    services={k: list(v) for k, v in e.get("services", {}).items()},
                    csg=tuple(e.get("csg", ())),
                    noise=float(e.get("noise", 0.0)),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"persona registry entry missing {exc}") from exc
    ids = [c.persona_id for c in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate persona_id in registry")
    return out
