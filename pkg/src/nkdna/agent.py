"""Q-learning agent that turns exploration of an environment into a container.

Every movement is stored as an :class:`~nkdna.container.Experience`. After
each step the Q-network gets one masked-MSE SGD update on the transition just
taken and one on a uniform replay batch drawn from all stored transitions.
Bellman targets come from the current network (no frozen target copy).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .container import (
    Experience,
    KnowledgeDNA,
    NetworkMeta,
    attach_network,
    define_schema,
    new_container,
    record_experiences,
    replace_network,
)
from .environment import EnvironmentSpec, dump_environment, step
from .errors import (
    MissingNetwork,
    NoActions,
    SchemaMismatch,
    ShapeMismatch,
    UnknownState,
    UnsupportedFramework,
)
from .neural import DEFAULT_FRAMEWORK, NetworkSpec, init_network, kernels

QNET = "q-net"
_ID_NAMESPACE = uuid.UUID("6c1f0d5e-8a3b-4c2e-9f11-2b7d4e5a9c30")


@dataclass(frozen=True)
class HyperParams:
    gamma: float = 0.9
    lr: float = 0.05
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # None: decay over 80% of ``episodes``
    epsilon_decay_episodes: int | None = None
    episodes: int = 500
    max_steps_per_episode: int = 100
    batch_size: int = 16
    seed: int = 0
    hidden: tuple[int, ...] = (16,)
    activations: tuple[str, ...] = ("tanh", "linear")

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "activations", tuple(self.activations))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        if self.epsilon_decay_episodes is not None and self.epsilon_decay_episodes < 1:
            raise ValueError("epsilon_decay_episodes must be positive")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.max_steps_per_episode < 1:
            raise ValueError("max_steps_per_episode must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if len(self.activations) != len(self.hidden) + 1:
            raise ValueError("need one activation per layer (hidden layers + output)")

    @property
    def decay_episodes(self) -> int:
        if self.epsilon_decay_episodes is not None:
            return self.epsilon_decay_episodes
        return max(1, round(0.8 * self.episodes))

    def epsilon_at(self, episode: int) -> float:
        frac = min(1.0, episode / self.decay_episodes)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        d["activations"] = list(self.activations)
        return d


@dataclass(frozen=True)
class Trajectory:
    experiences: tuple[Experience, ...]
    reached_terminal: bool


# --------------------------------------------------------------------------
# encoding and action choice
# --------------------------------------------------------------------------

def encode_state(s: int, state_ids: Sequence[int]) -> np.ndarray:
    """One-hot vector over ``state_ids`` (sorted) with a 1 at ``s``."""
    ids = sorted(state_ids)
    try:
        i = ids.index(s)
    except ValueError:
        raise UnknownState(f"unknown state {s}") from None
    x = np.zeros(len(ids))
    x[i] = 1.0
    return x


def q_values(net: NetworkSpec, s: int, state_ids: Sequence[int]) -> np.ndarray:
    if net.n_inputs != len(state_ids):
        raise ShapeMismatch(f"network expects {net.n_inputs} inputs, environment has {len(state_ids)} states")
    x = encode_state(s, state_ids)
    return kernels.get_backend().forward_batch(net.pack(), net.sizes_array(), net.act_codes(), x[None, :])[0]


def select_action(
    qvals,
    available: Sequence[int],
    epsilon: float,
    rng: np.random.Generator,
    action_ids: Sequence[int] | None = None,
) -> int:
    """Epsilon-greedy choice among ``available``.

    ``qvals[j]`` scores ``action_ids[j]`` (default: action id ``j``). The
    greedy branch breaks ties towards the lowest action id.
    """
    if len(available) == 0:
        raise NoActions("no available actions")
    if rng.random() < epsilon:
        return int(available[rng.integers(len(available))])
    if action_ids is None:
        pos = {a: a for a in available}
    else:
        index = {a: j for j, a in enumerate(action_ids)}
        pos = {a: index[a] for a in available}
    return int(max(sorted(available), key=lambda a: (qvals[pos[a]], -a)))


def sample_indices(n: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    if batch_size >= n:
        return np.arange(n)
    return rng.choice(n, size=batch_size, replace=False)


def replay_sample(experiences: Sequence[Experience], batch_size: int, rng: np.random.Generator) -> list[Experience]:
    return [experiences[i] for i in sample_indices(len(experiences), batch_size, rng)]


# --------------------------------------------------------------------------
# index tables and replay storage
# --------------------------------------------------------------------------

class _Tables:
    """Dense index views of an environment for the training loop."""

    def __init__(self, env: EnvironmentSpec):
        self.state_ids = env.state_ids
        self.action_ids = env.action_ids
        self.sidx = {s: i for i, s in enumerate(self.state_ids)}
        self.aidx = {a: j for j, a in enumerate(self.action_ids)}
        nS, nA = len(self.state_ids), len(self.action_ids)
        self.onehot = np.eye(nS)
        self.avail = np.zeros((nS, nA), dtype=bool)
        for s in env.states:
            for a in s.available_actions:
                self.avail[self.sidx[s.id], self.aidx[a]] = True
        self.terminal = np.array([s.terminal for s in env.states], dtype=bool)
        self.available = {s.id: list(s.available_actions) for s in env.states}

    def check(self, net: NetworkSpec) -> None:
        if net.n_inputs != len(self.state_ids) or net.n_outputs != len(self.action_ids):
            raise ShapeMismatch(
                f"network {net.n_inputs}->{net.n_outputs} does not fit "
                f"{len(self.state_ids)} states / {len(self.action_ids)} actions"
            )


class ReplayMemory:
    """Append-only transition store in index form, for vectorised batches."""

    def __init__(self, env: EnvironmentSpec, experiences: Sequence[Experience] = ()):
        self.tables = _Tables(env)
        self._n = 0
        cap = max(256, len(experiences))
        self._s = np.empty(cap, dtype=np.int64)
        self._a = np.empty(cap, dtype=np.int64)
        self._sn = np.empty(cap, dtype=np.int64)
        self._r = np.empty(cap)
        for e in experiences:
            self.add(e)

    def __len__(self) -> int:
        return self._n

    def add(self, e: Experience) -> None:
        if self._n == self._s.shape[0]:
            for name in ("_s", "_a", "_sn", "_r"):
                old = getattr(self, name)
                new = np.empty(old.shape[0] * 2, dtype=old.dtype)
                new[: self._n] = old[: self._n]
                setattr(self, name, new)
        t = self.tables
        i = self._n
        self._s[i] = t.sidx[e.s]
        self._a[i] = t.aidx[e.a]
        self._sn[i] = t.sidx[e.s_next]
        self._r[i] = e.r
        self._n += 1

    def batch(self, idx: np.ndarray):
        return self._s[idx], self._a[idx], self._r[idx], self._sn[idx]


def _batch_targets(k, params, sizes, acts, tables: _Tables, r, sn, gamma):
    q_next = k.forward_batch(params, sizes, acts, tables.onehot[sn])
    masked = np.where(tables.avail[sn], q_next, -np.inf)
    best = np.where(tables.terminal[sn], 0.0, masked.max(axis=1, initial=-np.inf))
    best = np.where(np.isfinite(best), best, 0.0)
    return r + gamma * best


def _sgd_step(k, params, sizes, acts, tables: _Tables, s, a, r, sn, gamma, lr):
    targets = _batch_targets(k, params, sizes, acts, tables, r, sn, gamma)
    B, nA = s.shape[0], len(tables.action_ids)
    T = np.zeros((B, nA))
    M = np.zeros((B, nA), dtype=bool)
    rows = np.arange(B)
    T[rows, a] = targets
    M[rows, a] = True
    _, g = k.grad_batch(params, sizes, acts, tables.onehot[s], T, M)
    params -= lr * g


def bellman_target(e: Experience, net: NetworkSpec, env: EnvironmentSpec, gamma: float, terminal: bool | None = None) -> float:
    """``r`` at a terminal transition, else ``r + gamma * max_a' Q(s_next, a')``."""
    if terminal is None:
        terminal = e.s_next in env.terminals
    if terminal:
        return float(e.r)
    tables = _Tables(env)
    tables.check(net)
    q = q_values(net, e.s_next, tables.state_ids)
    avail = [tables.aidx[a] for a in tables.available[e.s_next]]
    return float(e.r + gamma * max(q[j] for j in avail))


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def run_episode(
    env: EnvironmentSpec,
    net: NetworkSpec,
    hp: HyperParams,
    epsilon: float,
    rng: np.random.Generator,
    *,
    memory: ReplayMemory | None = None,
    episode: int = 0,
    source: str = "",
) -> tuple[Trajectory, NetworkSpec]:
    if memory is None:
        memory = ReplayMemory(env)
    tables = memory.tables
    tables.check(net)
    k = kernels.get_backend()
    params = net.pack()
    sizes, acts = net.sizes_array(), net.act_codes()

    experiences = []
    s = env.start
    done = False
    for t in range(hp.max_steps_per_episode):
        si = tables.sidx[s]
        q = k.forward_batch(params, sizes, acts, tables.onehot[si : si + 1])[0]
        a = select_action(q, tables.available[s], epsilon, rng, tables.action_ids)
        tr = step(env, s, a)
        e = Experience(s, a, tr.r, tr.s_next, episode, t, source)
        experiences.append(e)
        memory.add(e)

        one = np.array([si])
        _sgd_step(
            k, params, sizes, acts, tables,
            one, np.array([tables.aidx[a]]), np.array([tr.r]), np.array([tables.sidx[tr.s_next]]),
            hp.gamma, hp.lr,
        )
        idx = sample_indices(len(memory), hp.batch_size, rng)
        bs, ba, br, bsn = memory.batch(idx)
        _sgd_step(k, params, sizes, acts, tables, bs, ba, br, bsn, hp.gamma, hp.lr)

        s = tr.s_next
        if tr.done:
            done = True
            break
    return Trajectory(tuple(experiences), done), net.unpack(params)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat()


def _run_id(env: EnvironmentSpec, hp: HyperParams) -> str:
    blob = hashlib.sha256(dump_environment(env)).hexdigest() + json.dumps(hp.to_dict(), sort_keys=True)
    return uuid.uuid5(_ID_NAMESPACE, blob).hex


def _training_rng(seed: int) -> np.random.Generator:
    # distinct stream from the one init_network draws from
    return np.random.default_rng([seed, 1])


def _train_loop(env, net, hp, memory, source, first_episode):
    rng = _training_rng(hp.seed)
    new = []
    for i in range(hp.episodes):
        traj, net = run_episode(
            env, net, hp, hp.epsilon_at(i), rng, memory=memory, episode=first_episode + i, source=source
        )
        new.extend(traj.experiences)
    return net, new


def train(env: EnvironmentSpec, hp: HyperParams = HyperParams(), metadata: dict | None = None) -> KnowledgeDNA:
    """Explore ``env`` for ``hp.episodes`` episodes and return the knowledge.

    The container id (which is also every experience's ``source``) is derived
    from the environment and hyperparameters, so equal inputs give equal
    output apart from the ``created-at`` stamp.
    """
    md = {"created-at": _timestamp(), "trainer": "nkdna.q-learning", "hyperparams": json.dumps(hp.to_dict(), sort_keys=True)}
    md.update(metadata or {})
    md["episodes"] = str(hp.episodes)
    c = define_schema(new_container(md, container_id=_run_id(env, hp)), env.states, env.actions)
    sizes = [len(env.states), *hp.hidden, len(env.actions)]
    net = init_network(sizes, hp.activations, seed=hp.seed)
    net, experiences = _train_loop(env, net, hp, ReplayMemory(env), c.container_id, 0)
    c = record_experiences(c, experiences)
    return attach_network(c, NetworkMeta(QNET, net))


def stored_qnet(dna: KnowledgeDNA, name: str = QNET) -> NetworkSpec:
    try:
        meta = dna.network(name)
    except KeyError:
        raise MissingNetwork(f"container has no network named {name!r}") from None
    if meta.framework != DEFAULT_FRAMEWORK:
        raise UnsupportedFramework(f"network {name!r} uses framework {meta.framework!r}; only {DEFAULT_FRAMEWORK!r} can run")
    return meta.spec


def check_env_schema(dna: KnowledgeDNA, env: EnvironmentSpec) -> None:
    if tuple(sorted(dna.states, key=lambda s: s.id)) != env.states or tuple(sorted(dna.actions, key=lambda a: a.id)) != env.actions:
        raise SchemaMismatch("container schema does not match the environment")


def continue_training(dna: KnowledgeDNA, env: EnvironmentSpec, hp: HyperParams) -> KnowledgeDNA:
    """Resume learning from the stored ``q-net``.

    Stored experiences (all sources) seed the replay memory; new episodes are
    numbered after the last episode recorded under this container's id.
    """
    check_env_schema(dna, env)
    net = stored_qnet(dna)
    own = [e.episode for e in dna.experiences if e.source == dna.container_id]
    first = max(own) + 1 if own else 0
    memory = ReplayMemory(env, dna.experiences)
    net, experiences = _train_loop(env, net, hp, memory, dna.container_id, first)
    out = record_experiences(dna, experiences)
    out = replace_network(out, NetworkMeta(QNET, net, DEFAULT_FRAMEWORK))
    total = int(dna.metadata.get("episodes", first or 0)) + hp.episodes
    return out.with_metadata(**{"resumed-at": _timestamp(), "episodes": str(total)})


# --------------------------------------------------------------------------
# using the knowledge
# --------------------------------------------------------------------------

def greedy_policy(net: NetworkSpec, env: EnvironmentSpec) -> dict[int, int]:
    tables = _Tables(env)
    tables.check(net)
    q = kernels.get_backend().forward_batch(net.pack(), net.sizes_array(), net.act_codes(), tables.onehot)
    policy = {}
    for s in env.states:
        if s.terminal:
            continue
        row = q[tables.sidx[s.id]]
        policy[s.id] = max(s.available_actions, key=lambda a: (row[tables.aidx[a]], -a))
    return policy


def greedy_path(net: NetworkSpec, env: EnvironmentSpec, max_steps: int = 100) -> tuple[list[int], bool]:
    """Follow the greedy policy from ``env.start``.

    Stops at a terminal state, after ``max_steps`` moves, or as soon as a
    state repeats (a deterministic policy would loop forever). Returns the
    visited states and whether a terminal was reached.
    """
    policy = greedy_policy(net, env)
    path = [env.start]
    seen = {env.start}
    s = env.start
    for _ in range(max_steps):
        if s in env.terminals:
            return path, True
        s = env.transitions[(s, policy[s])]
        path.append(s)
        if s in seen:
            return path, False
        seen.add(s)
    return path, s in env.terminals
