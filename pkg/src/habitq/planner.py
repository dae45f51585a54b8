"""Rule-based plan provider: maps each joint state to its value-aligned step.

A rule fires when its partial ``match`` assignment is a subset of the current
state; the highest-priority firing rule supplies partial ``next`` targets.
States no rule matches plan to noop, which keeps episodes total over the
state space. Validation scans the whole (desk-scale) space so ambiguous
priority ties and the full set of plan-derivable actions are known up front.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .world import ActionRecord, JointState, StateSpace


class AmbiguousPlanError(ValueError):
    """Two rules with equal top priority match the same state."""


@dataclass(frozen=True)
class PlanRule:
    """Condition/targets pair standing in for one planned adaptation."""

    match: tuple[tuple[str, str], ...]
    next: tuple[tuple[str, str], ...]
    priority: int = 0

    @classmethod
    def create(
        cls,
        match: Mapping[str, str],
        next: Mapping[str, str],
        priority: int = 0,
    ) -> "PlanRule":
        return cls(tuple(sorted(match.items())), tuple(sorted(next.items())), priority)

    def matches(self, state: JointState) -> bool:
        return all(state.get(dev) == label for dev, label in self.match)

    def next_targets(self) -> dict[str, str]:
        return dict(self.next)


@dataclass(frozen=True)
class PlanStep:
    """(state, action, next_state) triangle handed to the decision maker."""

    state: JointState
    action: ActionRecord
    next_state: JointState


def plan_for(space: StateSpace, state: JointState, rules: Sequence[PlanRule]) -> PlanStep:
    """Plan step for ``state``: highest-priority matching rule, noop if none.

    Raises AmbiguousPlanError when two matching rules tie at the top priority;
    validate_rules() reports such overlaps before any episode runs.
    """
    firing = [r for r in rules if r.matches(state)]
    if not firing:
        return PlanStep(state, ActionRecord.noop(), state)
    top = max(r.priority for r in firing)
    winners = [r for r in firing if r.priority == top]
    if len(winners) > 1:
        raise AmbiguousPlanError(
            f"{len(winners)} rules with priority {top} match state {state.key}"
        )
    next_state = space.apply_action(state, ActionRecord.from_targets(winners[0].next_targets()))
    return PlanStep(state, space.derive_action(state, next_state), next_state)


@dataclass
class RuleValidation:
    """Findings plus every action the rule set can hand to the learner."""

    findings: list[str] = field(default_factory=list)
    induced_actions: list[ActionRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


def validate_rules(rules: Sequence[PlanRule], space: StateSpace) -> RuleValidation:
    """Check rules against the space and collect the induced action set.

    Reports unknown devices/labels and equal-priority overlapping matches
    (found by exhaustive state scan). The induced actions are the rules' full
    target assignments plus every state-dependent restriction of them that
    plan_for can emit, so the closed vocabulary covers all plan actions.
    """
    report = RuleValidation()
    usable: set[int] = set()
    for i, rule in enumerate(rules):
        bad = False
        for part, pairs in (("match", rule.match), ("next", rule.next)):
            for dev, label in pairs:
                try:
                    space._check_label(dev, label)
                except ValueError as exc:
                    report.findings.append(f"rule {i} {part}: {exc}")
                    bad = True
        if not bad:
            usable.add(i)
            report.induced_actions.append(ActionRecord.from_targets(rule.next_targets()))

    seen: set[str] = {a.name for a in report.induced_actions}
    ambiguous: set[tuple[int, ...]] = set()
    for state in space.all_states():
        firing = [(i, r) for i, r in enumerate(rules) if i in usable and r.matches(state)]
        if not firing:
            continue
        top = max(r.priority for _, r in firing)
        winners = [(i, r) for i, r in firing if r.priority == top]
        if len(winners) > 1:
            key = tuple(i for i, _ in winners)
            if key not in ambiguous:
                ambiguous.add(key)
                report.findings.append(
                    f"ambiguous: rules {list(key)} share priority {top} at state {state.key}"
                )
            continue
        step_next = space.apply_action(state, ActionRecord.from_targets(winners[0][1].next_targets()))
        action = space.derive_action(state, step_next)
        if action.name not in seen:
            seen.add(action.name)
            report.induced_actions.append(action)
    return report
