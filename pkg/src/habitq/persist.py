"""Persistence: Q-table files, append-only trace files, and trace replay.

Both file kinds carry a world manifest (devices with their label alphabets,
action names in index order) so they are self-describing and can be checked
against a scenario before use. Serialization is deterministic: same run, same
bytes. A trace file embeds the final Q-table values, so replaying its update
log is an end-to-end integrity check that needs no other file.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .engine import StepRecord, TrainingReport, TrainingResult
from .learning import LearningParams, QTable, RewardConfig, RewardEvent, q_update
from .scenario import Scenario
from .world import ActionRecord, ActionVocabulary, DeviceSpec, StateSpace

QTABLE_FORMAT = "habitq-qtable/1"
TRACE_FORMAT = "habitq-trace/1"


class ReplayError(ValueError):
    """A persisted trace does not replay to its recorded Q-values."""


def _dump(data: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return data


def world_manifest(space: StateSpace, vocab: ActionVocabulary) -> dict:
    return {
        "devices": [{"id": d.id, "states": list(d.states)} for d in space.devices],
        "actions": list(vocab.names()),
    }


def world_from_manifest(manifest: Mapping[str, Any]) -> tuple[StateSpace, ActionVocabulary]:
    devices = [DeviceSpec(d["id"], tuple(d["states"])) for d in manifest["devices"]]
    space = StateSpace(devices)
    actions = [ActionRecord.parse(name) for name in manifest["actions"]]
    for action in actions:
        for dev, label in action.targets:
            space._check_label(dev, label)
    vocab = ActionVocabulary.build(actions)
    if list(vocab.names()) != list(manifest["actions"]):
        raise ValueError("manifest actions are not in canonical vocabulary order")
    return space, vocab


def _check_manifest_matches(
    space: StateSpace, vocab: ActionVocabulary, scenario: Scenario, path: str | Path
) -> None:
    ours = world_manifest(scenario.space, scenario.vocab)
    theirs = world_manifest(space, vocab)
    if ours != theirs:
        raise ValueError(
            f"{path}: manifest does not match scenario {scenario.name!r} "
            "(devices, labels, or action vocabulary differ)"
        )


def save_qtable(q: QTable, path: str | Path) -> None:
    """Manifest plus row-major values; terminal rows are implicit (all zero)."""
    _dump(
        {
            "format": QTABLE_FORMAT,
            **world_manifest(q.space, q.vocab),
            "values": [float(v) for v in q.values.reshape(-1)],
        },
        path,
    )


def load_qtable(path: str | Path, scenario: Scenario | None = None) -> QTable:
    data = _load(path)
    if data.get("format") != QTABLE_FORMAT:
        raise ValueError(f"{path}: not a Q-table file (format {data.get('format')!r})")
    space, vocab = world_from_manifest(data)
    if scenario is not None:
        _check_manifest_matches(space, vocab, scenario, path)
    values = data.get("values")
    expected = space.cardinality * len(vocab)
    if not isinstance(values, list) or len(values) != expected:
        raise ValueError(
            f"{path}: expected {expected} values for a "
            f"{space.cardinality}x{len(vocab)} table, got {len(values) if isinstance(values, list) else 'none'}"
        )
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values):
        raise ValueError(f"{path}: Q-table values must all be finite numbers")
    q = QTable(space, vocab)
    q.values[:] = np.asarray(values, dtype=np.float64).reshape(q.shape)
    return q


def _state_dict(state) -> dict[str, str]:
    return state.as_dict()


def _step_to_dict(rec: StepRecord) -> dict:
    return {
        "step": rec.step,
        "state": _state_dict(rec.state),
        "plan_action": rec.plan_action.name,
        "source": rec.source.value,
        "chosen_action": rec.chosen_action.name,
        "draw": rec.draw,
        "events": [
            {
                "action": upd.action.name,
                "reward": upd.reward,
                "before": upd.before,
                "after": upd.after,
                "next_state": _state_dict(upd.next_state),
            }
            for upd in rec.updates
        ],
        "next_state": _state_dict(rec.next_state),
    }


def save_trace(result: TrainingResult, scenario: Scenario, path: str | Path) -> None:
    _dump(
        {
            "format": TRACE_FORMAT,
            "scenario": scenario.name,
            "seed": scenario.seed,
            "params": {
                "alpha": scenario.params.alpha,
                "gamma": scenario.params.gamma,
                "epsilon0": scenario.params.epsilon0,
                "rho": scenario.params.rho,
                "rewards": {
                    "r_plan": scenario.params.rewards.r_plan,
                    "r_match": scenario.params.rewards.r_match,
                    "r_override_pos": scenario.params.rewards.r_override_pos,
                    "r_override_neg": scenario.params.rewards.r_override_neg,
                },
            },
            **world_manifest(scenario.space, scenario.vocab),
            "episodes": [
                {
                    "episode": trace.episode,
                    "epsilon": trace.epsilon,
                    "steps": [_step_to_dict(rec) for rec in trace.steps],
                }
                for trace in result.traces
            ],
            "final_qtable": [float(v) for v in result.qtable.values.reshape(-1)],
        },
        path,
    )


def save_report(report: TrainingReport, path: str | Path) -> None:
    _dump(report.to_dict(), path)


def load_trace(path: str | Path) -> dict:
    data = _load(path)
    if data.get("format") != TRACE_FORMAT:
        raise ValueError(f"{path}: not a trace file (format {data.get('format')!r})")
    return data


def replay_trace(trace: Mapping[str, Any]) -> QTable:
    """Re-apply every recorded update to a fresh table and verify each
    recorded before/after value and the embedded final table exactly."""
    space, vocab = world_from_manifest(trace)
    p = trace["params"]
    params = LearningParams(
        alpha=p["alpha"],
        gamma=p["gamma"],
        epsilon0=p["epsilon0"],
        rho=p["rho"],
        rewards=RewardConfig(**p["rewards"]),
    )
    q = QTable(space, vocab)
    for episode in trace["episodes"]:
        for step in episode["steps"]:
            state = space.state(step["state"])
            for ev in step["events"]:
                event = RewardEvent(state, ActionRecord.parse(ev["action"]), ev["reward"])
                update = q_update(q, event, params)
                if update.before != ev["before"] or update.after != ev["after"]:
                    raise ReplayError(
                        f"episode {episode['episode']} step {step['step']} "
                        f"action {ev['action']}: replayed "
                        f"{update.before}->{update.after}, recorded "
                        f"{ev['before']}->{ev['after']}"
                    )
    final = np.asarray(trace["final_qtable"], dtype=np.float64).reshape(q.shape)
    if not np.array_equal(q.values, final):
        raise ReplayError("replayed Q-table differs from the recorded final table")
    return q
