"""nkdna command line: train, solve, inspect, merge, verify, gradcheck.

Exit codes: 0 success, 1 usage error, 2 validation/verification failure,
3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import agent, container, oracles, persistence
from .environment import resolve_environment
from .errors import FormatError, InvalidContainer, NKDNAError, SchemaMismatch
from .neural import backprop, finite_diff, init_network

OK, USAGE, INVALID, IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class Result:
    """What a command reports; rendered as text or as one JSON document."""

    code: int = OK
    lines: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_env(ref):
    try:
        return resolve_environment(ref)
    except OSError as exc:
        raise CommandFailed(IO, f"cannot read environment {ref}: {exc}") from None
    except NKDNAError as exc:
        raise CommandFailed(IO, f"invalid environment {ref}: {type(exc).__name__}: {exc}") from None


def _load_dna(path, check=True):
    try:
        return persistence.load(path, check=check)
    except OSError as exc:
        raise CommandFailed(IO, f"cannot read {path}: {exc}") from None
    except FormatError as exc:
        raise CommandFailed(IO, f"{path}: {type(exc).__name__}: {exc}") from None
    except InvalidContainer as exc:
        raise CommandFailed(INVALID, f"{path}: {exc}") from None


def _save_dna(c, path):
    try:
        persistence.save(c, path)
    except OSError as exc:
        raise CommandFailed(IO, f"cannot write {path}: {exc}") from None


def _hp_from_args(args) -> agent.HyperParams:
    try:
        return agent.HyperParams(
            gamma=args.gamma,
            lr=args.lr,
            epsilon_start=args.epsilon_start,
            epsilon_end=args.epsilon_end,
            epsilon_decay_episodes=args.epsilon_decay_episodes,
            episodes=args.episodes,
            max_steps_per_episode=args.max_steps,
            batch_size=args.batch_size,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _path_summary(net, env, max_steps):
    path, reached = agent.greedy_path(net, env, max_steps)
    return path, reached, len(path) - 1


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_train(args) -> Result:
    if args.show_defaults:
        d = agent.HyperParams().to_dict()
        return Result(lines=[f"{k} = {v}" for k, v in d.items()], data={"defaults": d})
    if not args.out:
        raise UsageError("train requires --out")
    hp = _hp_from_args(args)
    env = _load_env(args.env)
    dna = agent.train(env, hp, metadata={"domain": str(args.env)})
    _save_dna(dna, args.out)
    path, reached, length = _path_summary(agent.stored_qnet(dna), env, hp.max_steps_per_episode)
    return Result(
        lines=[
            f"episodes={hp.episodes} experiences={len(dna.experiences)} "
            f"greedy_path_length={length if reached else 'unreached'} out={args.out}"
        ],
        data={
            "episodes": hp.episodes,
            "experiences": len(dna.experiences),
            "greedy_path": path,
            "reached_terminal": reached,
            "greedy_path_length": length if reached else None,
            "out": str(args.out),
        },
    )


def _checked_net(dna, env, name):
    try:
        agent.check_env_schema(dna, env)
        return agent.stored_qnet(dna, name)
    except NKDNAError as exc:
        raise CommandFailed(INVALID, f"{type(exc).__name__}: {exc}") from None


def cmd_solve(args) -> Result:
    dna = _load_dna(args.dna)
    env = _load_env(args.env)
    net = _checked_net(dna, env, args.network)
    path, reached, length = _path_summary(net, env, args.max_steps)
    text = " -> ".join(str(s) for s in path)
    line = f"path: {text} (length {length})" if reached else f"path: {text} ... terminal not reached"
    return Result(
        code=OK if reached else INVALID,
        lines=[line],
        data={"path": path, "length": length, "reached_terminal": reached},
    )


def cmd_inspect(args) -> Result:
    dna = _load_dna(args.dna, check=False)
    violations = container.validate(dna)
    data = {
        "container_id": dna.container_id,
        "states": len(dna.states),
        "actions": len(dna.actions),
        "experiences": len(dna.experiences),
        "networks": len(dna.networks),
        "network_names": [n.name for n in dna.networks],
        "metadata": dict(dna.metadata),
        "violations": [{"kind": v.kind, "id": str(v.offending_id), "message": v.message} for v in violations],
    }
    lines = [
        f"container {dna.container_id}",
        f"states={data['states']} actions={data['actions']} experiences={data['experiences']} networks={data['networks']}",
    ]
    if violations:
        lines.append(f"{len(violations)} violation(s):")
        lines += [f"  {v.kind} [{v.offending_id}] {v.message}" for v in violations]
        data["fingerprint"] = None
    else:
        data["fingerprint"] = persistence.fingerprint(dna)
        lines.append(f"fingerprint {data['fingerprint']}")
    return Result(code=INVALID if violations else OK, lines=lines, data=data)


def cmd_merge(args) -> Result:
    a = _load_dna(args.a)
    b = _load_dna(args.b)
    try:
        merged = container.merge(a, b)
    except SchemaMismatch as exc:
        raise CommandFailed(INVALID, f"SchemaMismatch: {exc}") from None
    _save_dna(merged, args.out)
    fp = persistence.fingerprint(merged)
    return Result(
        lines=[f"experiences={len(merged.experiences)} networks={len(merged.networks)} out={args.out}", f"fingerprint {fp}"],
        data={
            "experiences": len(merged.experiences),
            "networks": len(merged.networks),
            "network_names": [n.name for n in merged.networks],
            "fingerprint": fp,
            "out": str(args.out),
        },
    )


def cmd_verify(args) -> Result:
    if not 0.0 <= args.gamma < 1.0:
        raise UsageError("--gamma must lie in [0, 1)")
    dna = _load_dna(args.dna)
    env = _load_env(args.env)
    net = _checked_net(dna, env, args.network)
    q = oracles.value_iteration(env, args.gamma)
    ratio = oracles.policy_agreement(agent.greedy_policy(net, env), q, env)
    bfs_len = {}
    for goal in sorted(env.terminals):
        try:
            bfs_len[goal] = oracles.bfs_shortest_path(env, env.start, goal)[0]
        except NKDNAError:
            pass
    best = min(bfs_len.values()) if bfs_len else None
    path, reached, length = _path_summary(net, env, args.max_steps)
    # the greedy walk must match the BFS distance of the terminal it reached
    target = bfs_len.get(path[-1]) if reached else None
    passed = ratio == 1.0 and reached and target == length
    return Result(
        code=OK if passed else INVALID,
        lines=[
            f"policy_agreement={ratio:.6f}",
            f"greedy_path_length={length if reached else 'unreached'} bfs_path_length={target if target is not None else best}",
            "PASS" if passed else "FAIL",
        ],
        data={
            "policy_agreement": ratio,
            "greedy_path": path,
            "greedy_path_length": length if reached else None,
            "bfs_path_length": target if target is not None else best,
            "passed": passed,
        },
    )


def gradcheck(cases: int, seed: int) -> float:
    """Max relative backprop-vs-central-difference error over random nets."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(cases):
        n_layers = int(rng.integers(1, 4))
        sizes = [int(w) for w in rng.integers(1, 17, size=n_layers + 1)]
        acts = [str(a) for a in rng.choice(["tanh", "linear"], size=n_layers)]
        net = init_network(sizes, acts, seed=int(rng.integers(2**31)))
        x = rng.normal(size=sizes[0])
        target = rng.normal(size=sizes[-1])
        mask = rng.random(sizes[-1]) < 0.5
        mask[int(rng.integers(sizes[-1]))] = True
        bp = backprop(net, x, target, mask).flat()
        fd = finite_diff(net, x, target, mask, h=1e-5).flat()
        worst = max(worst, float(np.max(np.abs(bp - fd) / (1.0 + np.abs(fd)))))
    return worst


def cmd_gradcheck(args) -> Result:
    if args.cases < 1:
        raise UsageError("--cases must be positive")
    worst = gradcheck(args.cases, args.seed)
    ok = worst <= 1e-6
    return Result(
        code=OK if ok else INVALID,
        lines=[f"cases={args.cases} seed={args.seed} max_relative_error={worst:.3e} {'PASS' if ok else 'FAIL'}"],
        data={"cases": args.cases, "seed": args.seed, "max_relative_error": worst, "passed": ok},
    )


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    d = agent.HyperParams()
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="print one JSON result document")
    common.add_argument("--seed", type=int, default=d.seed)

    p = _Parser(prog="nkdna", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train a Q-network and write a container")
    t.add_argument("--env", default="default-maze", help="environment JSON path or 'default-maze'")
    t.add_argument("--out")
    t.add_argument("--episodes", type=int, default=d.episodes)
    t.add_argument("--gamma", type=float, default=d.gamma)
    t.add_argument("--lr", type=float, default=d.lr)
    t.add_argument("--epsilon-start", type=float, default=d.epsilon_start)
    t.add_argument("--epsilon-end", type=float, default=d.epsilon_end)
    t.add_argument("--epsilon-decay-episodes", type=int, default=None)
    t.add_argument("--max-steps", type=int, default=d.max_steps_per_episode)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--show-defaults", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", parents=[common], help="walk the greedy policy of a container")
    s.add_argument("dna")
    s.add_argument("--env", default="default-maze")
    s.add_argument("--network", default=agent.QNET)
    s.add_argument("--max-steps", type=int, default=d.max_steps_per_episode)
    s.set_defaults(func=cmd_solve)

    i = sub.add_parser("inspect", parents=[common], help="summarise and validate a container")
    i.add_argument("dna")
    i.set_defaults(func=cmd_inspect)

    m = sub.add_parser("merge", parents=[common], help="merge two same-schema containers")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_merge)

    v = sub.add_parser("verify", parents=[common], help="compare a container against exact oracles")
    v.add_argument("dna")
    v.add_argument("--env", default="default-maze")
    v.add_argument("--gamma", type=float, default=d.gamma)
    v.add_argument("--network", default=agent.QNET)
    v.add_argument("--max-steps", type=int, default=d.max_steps_per_episode)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gradcheck", parents=[common], help="backprop vs finite differences")
    g.add_argument("--cases", type=int, default=100)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    want_json = "--json" in (sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        result = args.func(args)
    except UsageError as exc:
        result = Result(code=USAGE, data={"error": str(exc)})
        print(f"usage error: {exc}", file=sys.stderr)
    except CommandFailed as exc:
        result = Result(code=exc.code, data={"error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)

    if want_json:
        print(json.dumps({"exit_code": result.code, **result.data}, indent=2))
    else:
        for line in result.lines:
            print(line)
    return result.code


if __name__ == "__main__":
    sys.exit(main())
