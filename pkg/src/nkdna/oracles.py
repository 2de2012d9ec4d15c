"""Exact solvers used to check learned knowledge."""

from __future__ import annotations

from collections import deque
from typing import Mapping

from .environment import EnvironmentSpec
from .errors import ActionNotAvailable, MissingState, Unreachable

QTable = dict  # (state, action) -> value, legal pairs only


def bfs_shortest_path(env: EnvironmentSpec, start: int, goal: int) -> tuple[int, list[int]]:
    """Fewest-steps path from ``start`` to ``goal``.

    Neighbours are expanded in ascending state-id order, so among equally
    short paths the lexicographically smallest state sequence is returned.
    Raises :class:`Unreachable` when no path exists.
    """
    for s in (start, goal):
        env.state(s)
    parent = {start: None}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if s == goal:
            break
        sd = env.state(s)
        for nxt in sorted({env.transitions[(s, a)] for a in sd.available_actions}):
            if nxt not in parent:
                parent[nxt] = s
                queue.append(nxt)
    if goal not in parent:
        raise Unreachable(f"state {goal} is unreachable from {start}")
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return len(path) - 1, path


def value_iteration(env: EnvironmentSpec, gamma: float, tol: float = 1e-9, max_iter: int = 100_000) -> QTable:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    pairs = sorted(env.transitions)
    avail = {s.id: s.available_actions for s in env.states}
    q = {p: 0.0 for p in pairs}
    for _ in range(max_iter):
        new = {}
        for s, a in pairs:
            s2 = env.transitions[(s, a)]
            future = 0.0 if s2 in env.terminals else max(q[(s2, b)] for b in avail[s2])
            new[(s, a)] = env.rewards[(s, a)] + gamma * future
        change = max((abs(new[p] - q[p]) for p in pairs), default=0.0)
        q = new
        if change < tol:
            return q
    raise RuntimeError("value iteration did not converge")


def state_values(q: QTable) -> dict[int, float]:
    v: dict[int, float] = {}
    for (s, _), val in q.items():
        v[s] = max(v.get(s, val), val)
    return v


def greedy_from_q(q: QTable, env: EnvironmentSpec) -> dict[int, int]:
    """Argmax action per non-terminal state, ties to the lowest action id."""
    return {
        s.id: max(s.available_actions, key=lambda a: (q[(s.id, a)], -a))
        for s in env.states
        if not s.terminal
    }


def bellman_residual(q: QTable, env: EnvironmentSpec, gamma: float) -> float:
    avail = {s.id: s.available_actions for s in env.states}
    worst = 0.0
    for (s, a), val in q.items():
        s2 = env.transitions[(s, a)]
        future = 0.0 if s2 in env.terminals else max(q[(s2, b)] for b in avail[s2])
        worst = max(worst, abs(env.rewards[(s, a)] + gamma * future - val))
    return worst


def policy_agreement(p: Mapping[int, int], q: QTable, env: EnvironmentSpec, atol: float = 1e-9) -> float:
    """Fraction of non-terminal states where ``p`` picks a value-maximising action."""
    nonterminal = [s for s in env.states if not s.terminal]
    hits = 0
    for s in nonterminal:
        if s.id not in p:
            raise MissingState(f"policy has no action for state {s.id}")
        a = p[s.id]
        if (s.id, a) not in q:
            raise ActionNotAvailable(f"policy action {a} is not legal in state {s.id}")
        best = max(q[(s.id, b)] for b in s.available_actions)
        hits += q[(s.id, a)] >= best - atol
    return hits / len(nonterminal) if nonterminal else 1.0
