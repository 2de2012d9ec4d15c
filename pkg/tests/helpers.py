"""Builders for random but valid containers, shared by several test modules."""

import numpy as np

from nkdna.container import (
    Experience,
    NetworkMeta,
    attach_network,
    define_schema,
    new_container,
    record_experiences,
)
from nkdna.environment import default_maze
from nkdna.neural import init_network

MAZE = default_maze()
SOURCES = ("alpha", "beta", "gamma")
NET_NAMES = ("q-net", "aux")


def maze_container(metadata=None, container_id=None):
    return define_schema(new_container(metadata or {}, container_id), MAZE.states, MAZE.actions)


def random_experiences(rng, n, sources=SOURCES, episodes=4, steps=6):
    """Up to ``n`` experiences with keys drawn from a small pool, so
    different containers overlap."""
    legal = sorted(MAZE.transitions)
    seen, out = set(), []
    for _ in range(n):
        key = (str(rng.choice(sources)), int(rng.integers(episodes)), int(rng.integers(steps)))
        if key in seen:
            continue
        seen.add(key)
        # record content depends on the key only: equal keys => equal records
        code = SOURCES.index(key[0]) + 3 * key[1] + 5 * key[2]
        s, a = legal[code % len(legal)]
        r = float(code % 7) / 7.0
        out.append(Experience(s, a, r, MAZE.transitions[(s, a)], key[1], key[2], key[0]))
    return out


def random_container(rng, n_exp=None, n_nets=None, seed_pool=3):
    c = maze_container({"origin": str(int(rng.integers(3)))})
    n_exp = int(rng.integers(0, 20)) if n_exp is None else n_exp
    c = record_experiences(c, random_experiences(rng, n_exp))
    n_nets = int(rng.integers(0, 3)) if n_nets is None else n_nets
    for name in list(NET_NAMES)[:n_nets]:
        # a small seed pool makes identical networks show up in different containers
        spec = init_network([8, 4, 8], ["tanh", "linear"], seed=int(rng.integers(seed_pool)))
        c = attach_network(c, NetworkMeta(name, spec))
    return c


def experience_keys(c):
    return {e.key for e in c.experiences}


def network_names(c):
    return {n.name for n in c.networks}


def random_net(rng, max_layers=3, max_width=16, acts=("tanh", "linear")):
    n_layers = int(rng.integers(1, max_layers + 1))
    sizes = [int(w) for w in rng.integers(1, max_width + 1, size=n_layers + 1)]
    activations = [str(a) for a in rng.choice(acts, size=n_layers)]
    return init_network(sizes, activations, seed=int(rng.integers(2**31)))


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))
