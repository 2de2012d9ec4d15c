"""The four-element knowledge container: States, Actions, Experiences, Networks.

Containers are immutable. Every operation returns a new :class:`KnowledgeDNA`;
invariant breaches that an operation would introduce are raised, while
:func:`validate` reports breaches in an existing container as data.
"""

from __future__ import annotations

import math
import re
import uuid
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    ActionNotAvailable,
    DanglingAction,
    DuplicateId,
    DuplicateKey,
    DuplicateName,
    SchemaLocked,
    SchemaMismatch,
    ShapeMismatch,
    UnknownAction,
    UnknownState,
)
from .neural import DEFAULT_FRAMEWORK, NetworkSpec

FORMAT_VERSION = 1


@dataclass(frozen=True)
class StateDef:
    id: int
    label: str
    available_actions: tuple[int, ...] = ()
    terminal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "available_actions", tuple(sorted(int(a) for a in self.available_actions)))


@dataclass(frozen=True)
class ActionDef:
    id: int
    label: str


@dataclass(frozen=True)
class Experience:
    """One recorded movement ``(s, a, r, s_next)`` and its merge key."""

    s: int
    a: int
    r: float
    s_next: int
    episode: int = 0
    step: int = 0
    source: str = ""

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.source, self.episode, self.step)


@dataclass(frozen=True)
class NetworkMeta:
    name: str
    spec: NetworkSpec
    framework: str = DEFAULT_FRAMEWORK


@dataclass(frozen=True)
class Violation:
    kind: str
    offending_id: object
    message: str


def _freeze_meta(m: Mapping[str, str] | None) -> Mapping[str, str]:
    return MappingProxyType({str(k): str(v) for k, v in (m or {}).items()})


@dataclass(frozen=True)
class KnowledgeDNA:
    container_id: str
    metadata: Mapping[str, str] = field(default_factory=dict)
    states: tuple[StateDef, ...] = ()
    actions: tuple[ActionDef, ...] = ()
    experiences: tuple[Experience, ...] = ()
    networks: tuple[NetworkMeta, ...] = ()
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "metadata", _freeze_meta(self.metadata))
        for name in ("states", "actions", "experiences", "networks"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def canonical(self) -> tuple:
        """Collections in their canonical orders (the on-disk order)."""
        return (
            tuple(sorted(self.states, key=lambda s: s.id)),
            tuple(sorted(self.actions, key=lambda a: a.id)),
            tuple(sorted(self.experiences, key=lambda e: e.key)),
            tuple(sorted(self.networks, key=lambda n: n.name)),
        )

    def __eq__(self, other):
        # value equality ignores storage order of the four collections
        if not isinstance(other, KnowledgeDNA):
            return NotImplemented
        return (
            self.container_id == other.container_id
            and self.format_version == other.format_version
            and dict(self.metadata) == dict(other.metadata)
            and self.canonical() == other.canonical()
        )

    __hash__ = None

    def state(self, sid: int) -> StateDef:
        for s in self.states:
            if s.id == sid:
                return s
        raise UnknownState(f"unknown state {sid}")

    def network(self, name: str) -> NetworkMeta:
        for n in self.networks:
            if n.name == name:
                return n
        raise KeyError(name)

    def with_metadata(self, **updates: str) -> "KnowledgeDNA":
        md = dict(self.metadata)
        md.update(updates)
        return replace(self, metadata=md)


def new_container(metadata: Mapping[str, str] | None = None, container_id: str | None = None) -> KnowledgeDNA:
    return KnowledgeDNA(container_id=container_id or uuid.uuid4().hex, metadata=dict(metadata or {}))


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

def _schema_errors(states: Iterable[StateDef], actions: Iterable[ActionDef]) -> list[Violation]:
    out = []
    seen_a = set()
    for a in actions:
        if a.id in seen_a:
            out.append(Violation("DuplicateId", a.id, f"action id {a.id} repeated"))
        if a.id < 0:
            out.append(Violation("DuplicateId", a.id, "action ids must be non-negative"))
        if not a.label:
            out.append(Violation("EmptyLabel", a.id, f"action {a.id} has empty label"))
        seen_a.add(a.id)
    seen_s = set()
    for s in states:
        if s.id in seen_s:
            out.append(Violation("DuplicateId", s.id, f"state id {s.id} repeated"))
        if s.id < 0:
            out.append(Violation("DuplicateId", s.id, "state ids must be non-negative"))
        seen_s.add(s.id)
        for a in s.available_actions:
            if a not in seen_a:
                out.append(Violation("DanglingAction", s.id, f"state {s.id} lists unknown action {a}"))
        if s.terminal and s.available_actions:
            out.append(Violation("TerminalWithActions", s.id, f"terminal state {s.id} has actions"))
        if not s.terminal and not s.available_actions:
            out.append(Violation("NoActions", s.id, f"non-terminal state {s.id} has no actions"))
    return out


_SCHEMA_EXC = {"DuplicateId": DuplicateId, "DanglingAction": DanglingAction}


def define_schema(c: KnowledgeDNA, states: Iterable[StateDef], actions: Iterable[ActionDef]) -> KnowledgeDNA:
    if c.experiences or c.networks:
        raise SchemaLocked("schema cannot change once experiences or networks are stored")
    states = tuple(sorted(states, key=lambda s: s.id))
    actions = tuple(sorted(actions, key=lambda a: a.id))
    errs = _schema_errors(states, actions)
    if errs:
        first = errs[0]
        raise _SCHEMA_EXC.get(first.kind, ValueError)(first.message)
    return replace(c, states=states, actions=actions)


def same_schema(a: KnowledgeDNA, b: KnowledgeDNA) -> bool:
    return tuple(sorted(a.states, key=lambda s: s.id)) == tuple(sorted(b.states, key=lambda s: s.id)) and tuple(
        sorted(a.actions, key=lambda x: x.id)
    ) == tuple(sorted(b.actions, key=lambda x: x.id))


# --------------------------------------------------------------------------
# experiences and networks
# --------------------------------------------------------------------------

def _experience_error(states: Mapping[int, StateDef], action_ids, e: Experience):
    if e.s not in states:
        return UnknownState, f"experience {e.key}: unknown state {e.s}"
    if e.s_next not in states:
        return UnknownState, f"experience {e.key}: unknown next state {e.s_next}"
    if e.a not in action_ids:
        return UnknownAction, f"experience {e.key}: unknown action {e.a}"
    if e.a not in states[e.s].available_actions:
        return ActionNotAvailable, f"experience {e.key}: action {e.a} not available in state {e.s}"
    if not math.isfinite(e.r):
        return ValueError, f"experience {e.key}: non-finite reward"
    if e.episode < 0 or e.step < 0:
        return ValueError, f"experience {e.key}: negative episode/step"
    return None


def record_experiences(c: KnowledgeDNA, es: Iterable[Experience]) -> KnowledgeDNA:
    """Append many experiences at once; all-or-nothing."""
    states = {s.id: s for s in c.states}
    action_ids = {a.id for a in c.actions}
    keys = {e.key for e in c.experiences}
    new = []
    for e in es:
        err = _experience_error(states, action_ids, e)
        if err:
            raise err[0](err[1])
        if e.key in keys:
            raise DuplicateKey(f"experience key {e.key} already present")
        keys.add(e.key)
        new.append(e)
    return replace(c, experiences=c.experiences + tuple(new))


def record_experience(c: KnowledgeDNA, e: Experience) -> KnowledgeDNA:
    return record_experiences(c, (e,))


def _shape_problem(c: KnowledgeDNA, n: NetworkMeta) -> str | None:
    spec = n.spec
    if spec.n_inputs != len(c.states) or spec.n_outputs != len(c.actions):
        return (
            f"network {n.name!r} is {spec.n_inputs}->{spec.n_outputs}, "
            f"container has {len(c.states)} states / {len(c.actions)} actions"
        )
    return None


def attach_network(c: KnowledgeDNA, n: NetworkMeta) -> KnowledgeDNA:
    if any(m.name == n.name for m in c.networks):
        raise DuplicateName(f"network name {n.name!r} already used")
    problem = _shape_problem(c, n)
    if problem:
        raise ShapeMismatch(problem)
    return replace(c, networks=c.networks + (n,))


def replace_network(c: KnowledgeDNA, n: NetworkMeta) -> KnowledgeDNA:
    """Swap the network stored under ``n.name`` (shape-checked)."""
    if not any(m.name == n.name for m in c.networks):
        raise KeyError(n.name)
    problem = _shape_problem(c, n)
    if problem:
        raise ShapeMismatch(problem)
    return replace(c, networks=tuple(n if m.name == n.name else m for m in c.networks))


# --------------------------------------------------------------------------
# merge
# --------------------------------------------------------------------------

_SUFFIX = re.compile(r"^(.*)#(\d+)$")


def base_name(name: str) -> str:
    m = _SUFFIX.match(name)
    return m.group(1) if m else name


def _net_content(n: NetworkMeta):
    return (base_name(n.name), n.framework, n.spec)


def merge(a: KnowledgeDNA, b: KnowledgeDNA) -> KnowledgeDNA:
    """Union of two same-schema containers.

    Experiences are deduplicated by ``(source, episode, step)`` (``a`` wins on
    a key clash) and sorted by that key. A network of ``b`` whose base name,
    framework and parameters equal one already kept is dropped; otherwise a
    name clash is resolved with the lowest free ``name#k`` (k >= 2).
    """
    if not same_schema(a, b):
        raise SchemaMismatch("containers have different state/action schemas")
    exps: dict = {}
    for e in a.experiences + b.experiences:
        exps.setdefault(e.key, e)
    experiences = tuple(exps[k] for k in sorted(exps))

    kept: list[NetworkMeta] = []
    names: set[str] = set()
    for n in a.networks + b.networks:
        content = _net_content(n)
        if any(_net_content(k) == content for k in kept):
            continue
        name = n.name
        if name in names:
            base = base_name(name)
            k = 2
            while f"{base}#{k}" in names:
                k += 1
            name = f"{base}#{k}"
        names.add(name)
        kept.append(replace(n, name=name) if name != n.name else n)

    md = dict(b.metadata)
    md.update(a.metadata)
    return KnowledgeDNA(
        container_id=uuid.uuid4().hex,
        metadata=md,
        states=tuple(sorted(a.states, key=lambda s: s.id)),
        actions=tuple(sorted(a.actions, key=lambda x: x.id)),
        experiences=experiences,
        networks=tuple(sorted(kept, key=lambda n: n.name)),
    )


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate(c: KnowledgeDNA) -> list[Violation]:
    out = []
    if c.format_version != FORMAT_VERSION:
        out.append(Violation("UnsupportedVersion", c.format_version, f"format_version must be {FORMAT_VERSION}"))
    out.extend(_schema_errors(c.states, c.actions))
    states = {s.id: s for s in c.states}
    action_ids = {a.id for a in c.actions}
    keys = set()
    for e in c.experiences:
        err = _experience_error(states, action_ids, e)
        if err:
            kind = err[0].__name__ if err[0] is not ValueError else "BadExperience"
            out.append(Violation(kind, e.key, err[1]))
        if e.key in keys:
            out.append(Violation("DuplicateKey", e.key, f"experience key {e.key} repeated"))
        keys.add(e.key)
    names = set()
    for n in c.networks:
        if n.name in names:
            out.append(Violation("DuplicateName", n.name, f"network name {n.name!r} repeated"))
        names.add(n.name)
        problem = _shape_problem(c, n)
        if problem:
            out.append(Violation("ShapeMismatch", n.name, problem))
    return out
