"""Command-line interface: run training, inspect Q-tables, serve the
gateway, and replay persisted traces.

Exit codes: 0 success, 1 scenario/file validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .engine import run_training
from .gateway import serve
from .persist import (
    ReplayError,
    load_qtable,
    load_trace,
    replay_trace,
    save_qtable,
    save_report,
    save_trace,
)
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario).with_overrides(
        episodes=args.episodes, seed=args.seed
    )
    result = run_training(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_qtable(result.qtable, out / "qtable.json")
    save_trace(result, scenario, out / "trace.json")
    save_report(result.report, out / "report.json")
    report = result.report
    print(f"scenario: {scenario.name}")
    print(f"episodes: {len(result.traces)}  final_epsilon: {report.final_epsilon:.6f}")
    if report.alignment_rates is not None:
        converged = (
            f"episode {report.convergence_episode}"
            if report.convergence_episode is not None
            else "not reached"
        )
        print(f"alignment: {report.alignment_rates[-1]:.3f}  convergence: {converged}")
    print(f"wrote qtable.json, trace.json, report.json to {out}")
    return EXIT_OK


def _parse_state_option(text: str) -> dict[str, str]:
    assignment: dict[str, str] = {}
    for token in text.split(","):
        dev, sep, label = token.partition("=")
        if not sep or not dev or not label:
            raise ScenarioError(f"--state expects KEY=VAL[,KEY=VAL...], got {text!r}")
        assignment[dev.strip()] = label.strip()
    return assignment


def _cmd_inspect(args: argparse.Namespace) -> int:
    q = load_qtable(args.qtable)
    if args.state:
        state = q.space.state(_parse_state_option(args.state))
        row = q.row(state)
        print(f"state {state.key} (index {q.space.encode_state(state)})")
        order = np.argsort(-row, kind="stable")
        for idx in order:
            marker = "*" if idx == int(np.argmax(row)) else " "
            print(f" {marker} {q.vocab.decode_action(int(idx)).name:<30} {row[int(idx)]: .6f}")
        return EXIT_OK
    nonzero = int(np.count_nonzero(q.values))
    print(f"devices: {', '.join(d.id for d in q.space.devices)}")
    print(f"table: {q.shape[0]} states x {q.shape[1]} actions, {nonzero} nonzero cells")
    if nonzero:
        flat = np.abs(q.values).reshape(-1)
        for idx in np.argsort(-flat, kind="stable")[:5]:
            s_idx, a_idx = divmod(int(idx), q.shape[1])
            if q.values[s_idx, a_idx] == 0.0:
                break
            state = q.space.decode_state(s_idx)
            action = q.vocab.decode_action(a_idx)
            print(f"  Q[{state.key}][{action.name}] = {q.values[s_idx, a_idx]:.6f}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    server = serve(scenario, port=args.port, host=args.host)
    print(f"serving {scenario.name} on {server.base_url}", flush=True)
    try:
        while True:
            server._thread.join(timeout=1.0)  # type: ignore[union-attr]
            if server._thread is None or not server._thread.is_alive():
                break
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    trace = load_trace(args.trace)
    q = replay_trace(trace)
    episodes = len(trace["episodes"])
    updates = sum(len(s["events"]) for e in trace["episodes"] for s in e["steps"])
    print(
        f"replayed {updates} updates over {episodes} episodes: "
        f"final table matches ({q.shape[0]}x{q.shape[1]})"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="habitq",
        description="Q-learning smart-home adaptation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a training scenario to completion")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--episodes", type=int, default=None, help="override episode count")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--out", default="out", help="output directory (default: ./out)")
    p_run.set_defaults(handler=_cmd_run)

    p_inspect = sub.add_parser("inspect", help="summarize a saved Q-table")
    p_inspect.add_argument("qtable", help="Q-table JSON file")
    p_inspect.add_argument("--state", default=None, help="row to dump, as KEY=VAL,KEY=VAL")
    p_inspect.set_defaults(handler=_cmd_inspect)

    p_serve = sub.add_parser("serve", help="serve the HTTP gateway for a scenario")
    p_serve.add_argument("scenario", help="scenario JSON file")
    p_serve.add_argument("--port", type=int, default=8000, help="port (0 = ephemeral)")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.set_defaults(handler=_cmd_serve)

    p_replay = sub.add_parser("replay", help="replay a trace file and verify it")
    p_replay.add_argument("trace", help="trace JSON file")
    p_replay.set_defaults(handler=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ScenarioError, ReplayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
