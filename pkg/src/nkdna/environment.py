"""Deterministic discrete environments and the bundled 8-block maze."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .container import ActionDef, StateDef
from .errors import (
    ActionNotAvailable,
    ParseError,
    SchemaError,
    TerminalState,
    UnknownReference,
    UnknownState,
)

ENV_FORMAT = "nkdna-env/1"
DEFAULT_MAZE_NAME = "default-maze"


@dataclass(frozen=True)
class Transition:
    s_next: int
    r: float
    done: bool


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    states: tuple[StateDef, ...]
    actions: tuple[ActionDef, ...]
    transitions: Mapping[tuple[int, int], int]
    rewards: Mapping[tuple[int, int], float]
    start: int
    terminals: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(sorted(self.states, key=lambda s: s.id)))
        object.__setattr__(self, "actions", tuple(sorted(self.actions, key=lambda a: a.id)))
        object.__setattr__(self, "transitions", MappingProxyType(dict(self.transitions)))
        object.__setattr__(self, "rewards", MappingProxyType({k: float(v) for k, v in self.rewards.items()}))
        object.__setattr__(self, "terminals", frozenset(self.terminals))
        object.__setattr__(self, "_by_id", {s.id: s for s in self.states})

    def __eq__(self, other):
        if not isinstance(other, EnvironmentSpec):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and dict(self.transitions) == dict(other.transitions)
            and dict(self.rewards) == dict(other.rewards)
            and self.start == other.start
            and self.terminals == other.terminals
        )

    __hash__ = None

    @property
    def state_ids(self) -> list[int]:
        return [s.id for s in self.states]

    @property
    def action_ids(self) -> list[int]:
        return [a.id for a in self.actions]

    def state(self, s: int) -> StateDef:
        try:
            return self._by_id[s]
        except KeyError:
            raise UnknownState(f"unknown state {s}") from None


def available_actions(env: EnvironmentSpec, s: int) -> list[int]:
    return list(env.state(s).available_actions)


def step(env: EnvironmentSpec, s: int, a: int) -> Transition:
    sd = env.state(s)
    if sd.terminal:
        raise TerminalState(f"state {s} is terminal")
    if a not in sd.available_actions:
        raise ActionNotAvailable(f"action {a} not available in state {s}")
    s_next = env.transitions[(s, a)]
    return Transition(s_next, env.rewards[(s, a)], s_next in env.terminals)


def default_maze() -> EnvironmentSpec:
    """Eight blocks on a 3x3 grid with the bottom-right cell missing.

    ::

        1 2 3
        4 5 6
        7 8

    ``go-to-k`` moves to an orthogonally adjacent block ``k``. Start is 1,
    block 8 is terminal, and entering 8 pays 1.0 (every other move pays 0).
    """
    pos = {k: divmod(k - 1, 3) for k in range(1, 9)}
    cell = {rc: k for k, rc in pos.items()}
    transitions, rewards, states = {}, {}, []
    for k in range(1, 9):
        r, c = pos[k]
        nbrs = sorted(cell[(r + dr, c + dc)] for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)) if (r + dr, c + dc) in cell)
        terminal = k == 8
        if not terminal:
            for n in nbrs:
                transitions[(k, n)] = n
                rewards[(k, n)] = 1.0 if n == 8 else 0.0
        states.append(StateDef(k, f"block-{k}", () if terminal else tuple(nbrs), terminal))
    actions = [ActionDef(k, f"go-to-{k}") for k in range(1, 9)]
    return EnvironmentSpec(tuple(states), tuple(actions), transitions, rewards, 1, frozenset({8}))


# --------------------------------------------------------------------------
# JSON document format
# --------------------------------------------------------------------------

def _expect_keys(obj, keys: tuple[str, ...], path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    for k in obj:
        if k not in keys:
            raise SchemaError(f"{path}.{k}", "unknown key")
    for k in keys:
        if k not in obj:
            raise SchemaError(f"{path}.{k}", "missing key")


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise SchemaError(path, "expected a non-negative integer")
    return v


def _str(v, path: str) -> str:
    if not isinstance(v, str) or not v:
        raise SchemaError(path, "expected a non-empty string")
    return v


def load_environment(document: bytes) -> EnvironmentSpec:
    try:
        doc = json.loads(document.decode("utf-8") if isinstance(document, bytes) else document)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"environment document is not valid JSON: {exc}") from exc

    _expect_keys(doc, ("format", "states", "actions", "start", "transitions"), "$")
    if doc["format"] != ENV_FORMAT:
        raise SchemaError("$.format", f"expected {ENV_FORMAT!r}")
    for key in ("states", "actions", "transitions"):
        if not isinstance(doc[key], list):
            raise SchemaError(f"$.{key}", "expected an array")

    raw_states = {}
    for i, st in enumerate(doc["states"]):
        p = f"$.states[{i}]"
        _expect_keys(st, ("id", "label", "terminal"), p)
        sid = _int(st["id"], p + ".id")
        if sid in raw_states:
            raise SchemaError(p + ".id", f"duplicate state id {sid}")
        if not isinstance(st["terminal"], bool):
            raise SchemaError(p + ".terminal", "expected a boolean")
        raw_states[sid] = (_str(st["label"], p + ".label"), st["terminal"])

    actions = {}
    for i, ac in enumerate(doc["actions"]):
        p = f"$.actions[{i}]"
        _expect_keys(ac, ("id", "label"), p)
        aid = _int(ac["id"], p + ".id")
        if aid in actions:
            raise SchemaError(p + ".id", f"duplicate action id {aid}")
        actions[aid] = ActionDef(aid, _str(ac["label"], p + ".label"))

    transitions, rewards = {}, {}
    for i, tr in enumerate(doc["transitions"]):
        p = f"$.transitions[{i}]"
        _expect_keys(tr, ("from", "action", "to", "reward"), p)
        s = _int(tr["from"], p + ".from")
        a = _int(tr["action"], p + ".action")
        t = _int(tr["to"], p + ".to")
        r = tr["reward"]
        if isinstance(r, bool) or not isinstance(r, (int, float)) or not math.isfinite(r):
            raise SchemaError(p + ".reward", "expected a finite number")
        for what, ref, pool in (("from", s, raw_states), ("action", a, actions), ("to", t, raw_states)):
            if ref not in pool:
                raise UnknownReference(f"{p}.{what}: unknown id {ref}")
        if raw_states[s][1]:
            raise SchemaError(p + ".from", f"terminal state {s} cannot have transitions")
        if (s, a) in transitions:
            raise SchemaError(p, f"duplicate transition for ({s}, {a})")
        transitions[(s, a)] = t
        rewards[(s, a)] = float(r)

    states = []
    for sid, (label, term) in raw_states.items():
        avail = tuple(sorted(a for (s, a) in transitions if s == sid))
        if not term and not avail:
            raise SchemaError(f"$.states[id={sid}]", "non-terminal state has no transitions")
        states.append(StateDef(sid, label, avail, term))

    start = _int(doc["start"], "$.start")
    if start not in raw_states:
        raise UnknownReference(f"$.start: unknown state {start}")
    if raw_states[start][1]:
        raise SchemaError("$.start", "start state must not be terminal")
    terminals = frozenset(sid for sid, (_, term) in raw_states.items() if term)
    return EnvironmentSpec(tuple(states), tuple(actions.values()), transitions, rewards, start, terminals)


def dump_environment(env: EnvironmentSpec) -> bytes:
    doc = {
        "format": ENV_FORMAT,
        "states": [{"id": s.id, "label": s.label, "terminal": s.terminal} for s in env.states],
        "actions": [{"id": a.id, "label": a.label} for a in env.actions],
        "start": env.start,
        "transitions": [
            {"from": s, "action": a, "to": env.transitions[(s, a)], "reward": env.rewards[(s, a)]}
            for (s, a) in sorted(env.transitions)
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def bundled_maze_document() -> bytes:
    return resources.files("nkdna").joinpath("data/default_maze.json").read_bytes()


def resolve_environment(ref: str | Path) -> EnvironmentSpec:
    """Load ``ref`` from disk, or the bundled maze for ``"default-maze"``."""
    if str(ref) == DEFAULT_MAZE_NAME:
        return load_environment(bundled_maze_document())
    return load_environment(Path(ref).read_bytes())
