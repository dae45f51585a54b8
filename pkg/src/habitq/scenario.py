"""Scenario files: one JSON document fixes the world, the plan rules, the
user oracle, the learning parameters, and the seed for a whole run.

Loading is strict: every device, label, and action referenced anywhere in the
file must validate against the declared world, and all rule findings are
promoted to errors. The action vocabulary is closed here (plan-rule actions,
oracle preferences, and noop) so nothing encountered later can fail to encode.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .learning import (
    CollaborativeOracle,
    FeedbackProvider,
    GreedyFromQOracle,
    LearningParams,
    RewardConfig,
    ScriptedOracle,
    UniformRandomOracle,
    UserOracle,
)
from .planner import PlanRule, validate_rules
from .world import ActionRecord, ActionVocabulary, DeviceSpec, JointState, StateSpace

ORACLE_TYPES = ("scripted", "greedy", "random", "collaborative")
DEFAULT_COLLABORATIVE_TIMEOUT = 30.0


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message: str, findings: list[str] | None = None):
        self.findings = findings or []
        if self.findings:
            message = message + "\n  - " + "\n  - ".join(self.findings)
        super().__init__(message)


class UnattendedFeedback:
    """Stand-in channel for runs with no feedback surface attached: every
    request falls back to the plan immediately instead of idling out."""

    def request(self, state, plan_action, options, timeout):
        return None


@dataclass
class OracleSpec:
    """Declarative oracle configuration; concrete oracles are built per run
    so a gateway can supply the live feedback channel."""

    type: str
    preferences: dict[JointState, ActionRecord] = field(default_factory=dict)
    default: ActionRecord | None = None
    timeout: float = DEFAULT_COLLABORATIVE_TIMEOUT
    # extra selectable actions, mainly so collaborative users can pick
    # behavior no plan rule would ever induce
    actions: list[ActionRecord] = field(default_factory=list)

    def referenced_actions(self) -> list[ActionRecord]:
        referenced = list(self.preferences.values())
        if self.default is not None:
            referenced.append(self.default)
        referenced.extend(self.actions)
        return referenced

    def build(self, channel: FeedbackProvider | None = None) -> UserOracle:
        if self.type == "scripted":
            return ScriptedOracle(self.preferences, self.default)
        if self.type == "greedy":
            return GreedyFromQOracle()
        if self.type == "random":
            return UniformRandomOracle()
        if self.type == "collaborative":
            return CollaborativeOracle(channel or UnattendedFeedback(), self.timeout)
        raise ScenarioError(f"unknown oracle type {self.type!r}")


@dataclass
class Scenario:
    name: str
    space: StateSpace
    rules: tuple[PlanRule, ...]
    oracle_spec: OracleSpec
    vocab: ActionVocabulary
    initial_state: JointState
    steps_per_episode: int
    episodes: int
    params: LearningParams
    seed: int

    def build_oracle(self, channel: FeedbackProvider | None = None) -> UserOracle:
        return self.oracle_spec.build(channel)

    def with_overrides(self, episodes: int | None = None, seed: int | None = None) -> "Scenario":
        updated = self
        if episodes is not None:
            if episodes < 1:
                raise ScenarioError(f"episodes must be >= 1, got {episodes}")
            updated = dataclasses.replace(updated, episodes=episodes)
        if seed is not None:
            updated = dataclasses.replace(updated, seed=seed)
        return updated


def _parse_action(value: Any, space: StateSpace, where: str, findings: list[str]) -> ActionRecord | None:
    """Action from either a canonical name string or a device→label object."""
    try:
        if isinstance(value, str):
            action = ActionRecord.parse(value)
        elif isinstance(value, Mapping):
            action = ActionRecord.from_targets(value)
        else:
            findings.append(f"{where}: action must be a name or a device->label object")
            return None
        for dev, label in action.targets:
            space._check_label(dev, label)
        return action
    except (ValueError, KeyError) as exc:
        findings.append(f"{where}: {exc}")
        return None


def _parse_pairs(value: Any, where: str, findings: list[str]) -> dict[str, str] | None:
    if not isinstance(value, Mapping) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in value.items()
    ):
        findings.append(f"{where}: expected an object of device -> label strings")
        return None
    return dict(value)


def _parse_params(data: Mapping[str, Any], findings: list[str]) -> LearningParams:
    known = {"alpha", "gamma", "epsilon0", "rho", "rewards"}
    for key in data:
        if key not in known:
            findings.append(f"params: unknown key {key!r}")
    reward_data = data.get("rewards", {})
    known_rewards = {"r_plan", "r_match", "r_override_pos", "r_override_neg"}
    for key in reward_data:
        if key not in known_rewards:
            findings.append(f"params.rewards: unknown key {key!r}")
    try:
        rewards = RewardConfig(
            **{k: float(v) for k, v in reward_data.items() if k in known_rewards}
        )
        return LearningParams(
            alpha=float(data.get("alpha", 0.5)),
            gamma=float(data.get("gamma", 0.9)),
            epsilon0=float(data.get("epsilon0", 0.1)),
            rho=float(data.get("rho", 0.9)),
            rewards=rewards,
        )
    except (TypeError, ValueError) as exc:
        findings.append(f"params: {exc}")
        return LearningParams()


def _parse_oracle(
    data: Mapping[str, Any], space: StateSpace, findings: list[str]
) -> OracleSpec:
    kind = data.get("type")
    if kind not in ORACLE_TYPES:
        findings.append(f"oracle: type must be one of {ORACLE_TYPES}, got {kind!r}")
        return OracleSpec(type="greedy")
    spec = OracleSpec(type=kind)
    for i, entry in enumerate(data.get("actions", [])):
        action = _parse_action(entry, space, f"oracle.actions[{i}]", findings)
        if action is not None:
            spec.actions.append(action)
    if kind == "scripted":
        for i, entry in enumerate(data.get("preferences", [])):
            where = f"oracle.preferences[{i}]"
            if not isinstance(entry, Mapping) or "state" not in entry or "action" not in entry:
                findings.append(f"{where}: expected an object with 'state' and 'action'")
                continue
            pairs = _parse_pairs(entry["state"], f"{where}.state", findings)
            if pairs is None:
                continue
            try:
                state = space.state(pairs)
            except ValueError as exc:
                findings.append(f"{where}.state: {exc}")
                continue
            action = _parse_action(entry["action"], space, f"{where}.action", findings)
            if action is None:
                continue
            if state in spec.preferences:
                findings.append(f"{where}: duplicate preference for state {state.key}")
                continue
            spec.preferences[state] = action
        if "default" in data:
            spec.default = _parse_action(data["default"], space, "oracle.default", findings)
        if spec.default is None and "default" not in data:
            for state in space.all_states():
                if state not in spec.preferences:
                    findings.append(
                        f"oracle: scripted preferences are not total (missing {state.key}) "
                        "and no default is set"
                    )
                    break
    elif kind == "collaborative":
        timeout = data.get("timeout_seconds", DEFAULT_COLLABORATIVE_TIMEOUT)
        if not isinstance(timeout, (int, float)) or timeout <= 0:
            findings.append(f"oracle: timeout_seconds must be positive, got {timeout!r}")
        else:
            spec.timeout = float(timeout)
    return spec


def scenario_from_dict(data: Mapping[str, Any], name_hint: str = "scenario") -> Scenario:
    """Build and fully validate a Scenario from parsed JSON."""
    findings: list[str] = []
    known = {
        "name", "devices", "rules", "oracle", "initial_state",
        "steps_per_episode", "episodes", "params", "seed",
    }
    for key in data:
        if key not in known:
            findings.append(f"unknown top-level key {key!r}")

    devices_data = data.get("devices")
    if not isinstance(devices_data, Mapping) or not devices_data:
        raise ScenarioError("scenario needs a nonempty 'devices' object of id -> label list")
    specs = []
    for dev_id, labels in devices_data.items():
        try:
            specs.append(DeviceSpec(dev_id, tuple(labels)))
        except (TypeError, ValueError) as exc:
            findings.append(f"devices.{dev_id}: {exc}")
    if findings:
        raise ScenarioError("invalid scenario", findings)
    space = StateSpace(specs)

    rules: list[PlanRule] = []
    for i, entry in enumerate(data.get("rules", [])):
        where = f"rules[{i}]"
        if not isinstance(entry, Mapping):
            findings.append(f"{where}: expected an object")
            continue
        match = _parse_pairs(entry.get("match", {}), f"{where}.match", findings)
        nxt = _parse_pairs(entry.get("next", {}), f"{where}.next", findings)
        priority = entry.get("priority", 0)
        if not isinstance(priority, int):
            findings.append(f"{where}.priority: expected an integer")
            continue
        if match is None or nxt is None:
            continue
        rules.append(PlanRule.create(match, nxt, priority))

    validation = validate_rules(rules, space)
    findings.extend(validation.findings)

    oracle_spec = _parse_oracle(data.get("oracle", {"type": "greedy"}), space, findings)

    initial_data = _parse_pairs(data.get("initial_state", {}), "initial_state", findings)
    initial_state = None
    if initial_data is not None:
        try:
            initial_state = space.state(initial_data)
        except ValueError as exc:
            findings.append(f"initial_state: {exc}")

    steps = data.get("steps_per_episode", 1)
    episodes = data.get("episodes", 1)
    if not isinstance(steps, int) or steps < 1:
        findings.append(f"steps_per_episode must be an integer >= 1, got {steps!r}")
    if not isinstance(episodes, int) or episodes < 1:
        findings.append(f"episodes must be an integer >= 1, got {episodes!r}")

    params = _parse_params(data.get("params", {}), findings)

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        findings.append(f"seed must be an integer, got {seed!r}")

    if findings or initial_state is None:
        raise ScenarioError("invalid scenario", findings)

    vocab = ActionVocabulary.build(
        list(validation.induced_actions) + oracle_spec.referenced_actions()
    )
    return Scenario(
        name=str(data.get("name", name_hint)),
        space=space,
        rules=tuple(rules),
        oracle_spec=oracle_spec,
        vocab=vocab,
        initial_state=initial_state,
        steps_per_episode=steps,
        episodes=episodes,
        params=params,
        seed=seed,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario file {path} must contain a JSON object")
    return scenario_from_dict(data, name_hint=path.stem)
