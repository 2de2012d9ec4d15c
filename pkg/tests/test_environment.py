import json

import pytest

from nkdna.environment import (
    Transition,
    available_actions,
    bundled_maze_document,
    default_maze,
    dump_environment,
    load_environment,
    resolve_environment,
    step,
)
from nkdna.errors import ActionNotAvailable, ParseError, SchemaError, TerminalState, UnknownReference, UnknownState

# grid adjacency written out by hand: 1 2 3 / 4 5 6 / 7 8
ADJ = {1: [2, 4], 2: [1, 3, 5], 3: [2, 6], 4: [1, 5, 7], 5: [2, 4, 6, 8], 6: [3, 5], 7: [4, 8], 8: []}


@pytest.fixture
def maze():
    return default_maze()


def test_default_maze_facts(maze):
    assert len(maze.states) == 8
    assert maze.start == 1 and maze.terminals == {8}
    assert {s.id: list(s.available_actions) for s in maze.states} == ADJ
    assert [a.label for a in maze.actions] == [f"go-to-{k}" for k in range(1, 9)]


def test_reward_only_on_entering_goal(maze):
    for (s, a), s_next in maze.transitions.items():
        assert maze.rewards[(s, a)] == (1.0 if s_next == 8 else 0.0)


def test_available_actions(maze):
    assert available_actions(maze, 1) == [2, 4]
    assert available_actions(maze, 5) == [2, 4, 6, 8]
    assert available_actions(maze, 8) == []
    with pytest.raises(UnknownState):
        available_actions(maze, 0)


def test_step(maze):
    assert step(maze, 1, 2) == Transition(2, 0.0, False)
    assert step(maze, 7, 8) == Transition(8, 1.0, True)
    with pytest.raises(ActionNotAvailable):
        step(maze, 1, 7)
    with pytest.raises(TerminalState):
        step(maze, 8, 5)


def test_step_is_pure(maze):
    assert all(step(maze, s, a) == step(maze, s, a) for (s, a) in maze.transitions)


def test_closure(maze):
    ids = set(maze.state_ids)
    assert all(s_next in ids for s_next in maze.transitions.values())


def test_bundled_document_matches_constructor():
    assert load_environment(bundled_maze_document()) == default_maze()
    assert resolve_environment("default-maze") == default_maze()


def test_round_trip_through_document(maze):
    assert load_environment(dump_environment(maze)) == maze


def _doc():
    return json.loads(dump_environment(default_maze()))


def test_unknown_reference():
    doc = _doc()
    doc["transitions"][0]["to"] = 99
    with pytest.raises(UnknownReference):
        load_environment(json.dumps(doc).encode())


def test_truncated_document():
    with pytest.raises(ParseError):
        load_environment(dump_environment(default_maze())[:100])


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.update(extra=1), "$.extra"),
        (lambda d: d.pop("start"), "$.start"),
        (lambda d: d["states"][0].update(colour="red"), "$.states[0].colour"),
        (lambda d: d.update(format="nkdna-env/2"), "$.format"),
        (lambda d: d["transitions"][0].update(reward="high"), "$.transitions[0].reward"),
        (lambda d: d.update(start=8), "$.start"),
    ],
)
def test_schema_errors_name_the_path(mutate, path):
    doc = _doc()
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        load_environment(json.dumps(doc).encode())
    assert info.value.path == path


def test_transition_out_of_terminal_rejected():
    doc = _doc()
    doc["transitions"].append({"from": 8, "action": 5, "to": 5, "reward": 0.0})
    with pytest.raises(SchemaError):
        load_environment(json.dumps(doc).encode())
