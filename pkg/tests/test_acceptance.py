"""Exit criteria for the package; tolerances are fixed here, not calibrated.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

import nkdna.agent as agent_mod
from helpers import (
    MAZE,
    experience_keys,
    maze_container,
    network_names,
    random_container,
    random_net,
    rel_err,
)
from nkdna.agent import HyperParams, continue_training, greedy_path, greedy_policy, stored_qnet, train
from nkdna.container import merge
from nkdna.errors import DigestMismatch
from nkdna.neural import backprop, finite_diff
from nkdna.oracles import bfs_shortest_path, greedy_from_q, policy_agreement, value_iteration
from nkdna.persistence import deserialize, serialize

SEEDS = range(20)
BFS_LEN = bfs_shortest_path(MAZE, MAZE.start, 8)[0]


def path_len_ok(net):
    path, reached = greedy_path(net, MAZE)
    return reached and len(path) - 1 == BFS_LEN


@pytest.fixture(scope="module")
def default_runs():
    t0 = time.perf_counter()
    runs = {seed: train(MAZE, HyperParams(seed=seed)) for seed in SEEDS}
    return runs, time.perf_counter() - t0


def test_criterion_1_maze_optimality(default_runs, record_property):
    runs, elapsed = default_runs
    hits = sum(path_len_ok(stored_qnet(c)) for c in runs.values())
    record_property("detail", f"{hits}/20 seeds reach goal in {BFS_LEN} steps; {elapsed:.1f}s")
    assert BFS_LEN == 3
    assert hits >= 19
    assert elapsed < 60.0


def test_criterion_2_oracle_q_star(record_property):
    q = value_iteration(MAZE, 0.9, 1e-9)
    a, b = q[(7, 8)], q[(1, 2)]
    agree = policy_agreement(greedy_from_q(q, MAZE), q, MAZE)
    record_property("detail", f"Q*(7,go-to-8)={a!r} Q*(1,go-to-2)={b!r} self-agreement={agree}")
    assert abs(a - 1.0) <= 1e-9
    assert abs(b - 0.81) <= 1e-9
    assert agree == 1.0


def test_criterion_3_gradient_correctness(record_property):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        net = random_net(rng, max_layers=3, max_width=16)
        x, t = rng.normal(size=net.n_inputs), rng.normal(size=net.n_outputs)
        mask = rng.random(net.n_outputs) < 0.5
        mask[int(rng.integers(net.n_outputs))] = True
        worst = max(worst, rel_err(backprop(net, x, t, mask).flat(), finite_diff(net, x, t, mask, h=1e-5).flat()))
    record_property("detail", f"max relative deviation {worst:.2e} over 100 nets")
    assert worst <= 1e-6


def _payload_span(blob):
    start = blob.index(b'"payload":') + len(b'"payload":')
    return start, len(blob) - 1


def _mutation_detected(blob, pos):
    mutated = bytearray(blob)
    mutated[pos] ^= 0x20
    try:
        deserialize(bytes(mutated))
    except DigestMismatch:
        return True
    return False


def test_criterion_4_persistence_round_trip(record_property):
    rng = np.random.default_rng(4)
    containers = [train(MAZE, HyperParams(seed=s, episodes=15)) for s in range(5)]
    containers += [random_container(rng) for _ in range(45)]
    mutations = 0
    for i, c in enumerate(containers):
        blob = serialize(c)
        assert serialize(c) == blob
        assert deserialize(blob) == c
        start, end = _payload_span(blob)
        if i < 5:
            positions = rng.choice(np.arange(start, end), size=300, replace=False)
        else:
            positions = range(start, end)  # every payload byte
        for pos in positions:
            assert _mutation_detected(blob, int(pos)), f"container {i}: byte {pos} mutation undetected"
            mutations += 1
    record_property("detail", f"50 containers round-trip; {mutations} single-byte mutations all DigestMismatch")


def test_criterion_5_merge_algebra(record_property):
    rng = np.random.default_rng(5)
    empty = maze_container()

    def same(a, b):
        return experience_keys(a) == experience_keys(b) and network_names(a) == network_names(b)

    cases = 250
    for _ in range(cases):
        x, y, z = (random_container(rng) for _ in range(3))
        assert same(merge(x, empty), x)
        assert same(merge(x, x), x)
        assert same(merge(x, y), merge(y, x))
        assert same(merge(merge(x, y), z), merge(x, merge(y, z)))
    record_property("detail", f"identity/idempotence/commutativity/associativity on {cases} random triples")


def test_criterion_6a_reused_knowledge_solves_immediately(default_runs, record_property):
    runs, _ = default_runs
    hits = 0
    for c in runs.values():
        imported = deserialize(serialize(c))
        resumed = continue_training(imported, MAZE, HyperParams(episodes=0))
        hits += path_len_ok(stored_qnet(resumed))
    record_property("detail", f"reused containers: {hits}/20 optimal after 0 extra episodes")
    assert hits >= 19


def test_criterion_6b_fresh_25_episode_agent_falls_short(record_property):
    fails = sum(not path_len_ok(stored_qnet(train(MAZE, HyperParams(seed=s, episodes=25)))) for s in SEEDS)
    record_property("detail", f"fresh 25-episode agents failing the bar: {fails}/20 (need > 10)")
    assert fails > 10


def test_criterion_7_experience_completeness(monkeypatch, record_property):
    steps = {"n": 0}
    real_step = agent_mod.step

    def counting_step(env, s, a):
        steps["n"] += 1
        return real_step(env, s, a)

    monkeypatch.setattr(agent_mod, "step", counting_step)
    runs = [HyperParams(seed=s, episodes=e) for s, e in ((0, 0), (1, 1), (2, 40), (3, 200))]
    runs.append(HyperParams(seed=4, episodes=30, max_steps_per_episode=3))
    total = 0
    for hp in runs:
        steps["n"] = 0
        c = train(MAZE, hp)
        assert len(c.experiences) == steps["n"]
        episodes = {}
        for e in c.experiences:
            episodes.setdefault(e.episode, []).append(e)
        for exps in episodes.values():
            assert all(a.s_next == b.s for a, b in zip(exps, exps[1:]))
            assert [e.step for e in exps] == list(range(len(exps)))
        total += steps["n"]
    record_property("detail", f"{len(runs)} runs, {total} env steps == stored experiences, chains intact")


def test_greedy_policy_matches_value_iteration_at_convergence(default_runs):
    runs, _ = default_runs
    q = value_iteration(MAZE, 0.9, 1e-9)
    agree = [policy_agreement(greedy_policy(stored_qnet(c), MAZE), q, MAZE) for c in runs.values()]
    assert sum(a == 1.0 for a in agree) >= 19
