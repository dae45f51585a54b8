"""Learning layer: epsilon-greedy decision maker, user-behavior prediction,
plan-versus-behavior reward shaping, and the tabular Q-update.

The layer sits between the plan provider and action execution. Early in
training (small epsilon) it follows the value-aligned plan; epsilon grows
after every episode, shifting decisions toward the predicted user behavior.
When the prediction diverges from the plan, the reward function punishes the
plan action and reinforces the user's choice, so the greedy policy converges
to the observed behavior even where it contradicts the plans.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .planner import PlanStep
from .world import ActionRecord, ActionVocabulary, JointState, StateSpace


class TerminalStateError(ValueError):
    """Update against a terminal row, which must stay all-zero."""


@dataclass(frozen=True)
class RewardConfig:
    """Reward constants: small plus for plan steps, big plus for confirmed
    behavior, and a minus/plus pair when behavior overrides the plan."""

    r_plan: float = 1.0
    r_match: float = 5.0
    r_override_pos: float = 5.0
    r_override_neg: float = -5.0

    def __post_init__(self) -> None:
        # finite rewards keep every Q-table entry finite
        for name in ("r_plan", "r_match", "r_override_pos", "r_override_neg"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"reward {name} must be finite")


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon0: float = 0.1
    rho: float = 0.9
    rewards: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:  # also excludes NaN
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError(f"epsilon0 must be in [0, 1], got {self.epsilon0}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")


class DecisionSource(enum.Enum):
    PLAN = "plan"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Decision:
    """Outcome of one epsilon-greedy branch at a step."""

    source: DecisionSource
    state: JointState
    plan_action: ActionRecord
    chosen_action: ActionRecord
    draw: float

    def __post_init__(self) -> None:
        if self.source is DecisionSource.PLAN and self.chosen_action != self.plan_action:
            raise ValueError("plan-sourced decision must choose the plan action")


@dataclass(frozen=True)
class RewardEvent:
    state: JointState
    action: ActionRecord
    reward: float


@dataclass(frozen=True)
class QUpdate:
    """One applied Q-cell update, with enough context to replay it."""

    state: JointState
    action: ActionRecord
    reward: float
    state_index: int
    action_index: int
    before: float
    after: float
    next_state: JointState
    next_state_index: int


class QTable:
    """Dense (state x action) value matrix over a closed world.

    Rows listed in ``terminal_states`` stay identically zero and reject
    updates; everything else starts at zero and stays finite.
    """

    def __init__(
        self,
        space: StateSpace,
        vocab: ActionVocabulary,
        terminal_states: Sequence[int] = (),
    ):
        self.space = space
        self.vocab = vocab
        self.values = np.zeros((space.cardinality, len(vocab)), dtype=np.float64)
        self.terminal_states = frozenset(terminal_states)
        for idx in self.terminal_states:
            if not 0 <= idx < space.cardinality:
                raise IndexError(f"terminal state index {idx} out of range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def value(self, state: JointState, action: ActionRecord) -> float:
        return float(self.values[self.space.encode_state(state), self.vocab.encode_action(action)])

    def row(self, state: JointState) -> np.ndarray:
        return self.values[self.space.encode_state(state)].copy()

    def max_value(self, state_index: int) -> float:
        """Max over the full action vocabulary at one row."""
        return float(self.values[state_index].max())


def greedy_action(q: QTable, state: JointState) -> ActionRecord:
    """Action with the maximal Q-value at ``state``; ties break toward the
    lowest action index (so an untouched row yields noop)."""
    row = q.values[q.space.encode_state(state)]
    return q.vocab.decode_action(int(np.argmax(row)))


class FeedbackProvider(Protocol):
    """Channel that can ask the user for their preferred action."""

    def request(
        self,
        state: JointState,
        plan_action: ActionRecord,
        options: Sequence[str],
        timeout: float,
    ) -> ActionRecord | None:
        """Block up to ``timeout`` seconds; None signals no answer arrived."""
        ...


class UserOracle:
    """Source of the user's preferred action for a state (behavior model)."""

    def predict(
        self,
        state: JointState,
        q: QTable,
        rng: random.Random,
        plan_action: ActionRecord | None = None,
    ) -> ActionRecord | None:
        """Preferred action, or None as the fall-back-to-plan sentinel."""
        raise NotImplementedError


class ScriptedOracle(UserOracle):
    """Fixed state→action preference table, optionally with a default."""

    def __init__(
        self,
        preferences: Mapping[JointState, ActionRecord],
        default: ActionRecord | None = None,
    ):
        self.preferences = dict(preferences)
        self.default = default

    def preference(self, state: JointState) -> ActionRecord:
        pref = self.preferences.get(state, self.default)
        if pref is None:
            raise LookupError(f"scripted oracle has no preference for state {state.key}")
        return pref

    def predict(self, state, q, rng, plan_action=None):
        return self.preference(state)


class GreedyFromQOracle(UserOracle):
    """Policy-evaluation predictor: best known action from the Q-table."""

    def predict(self, state, q, rng, plan_action=None):
        return greedy_action(q, state)


class UniformRandomOracle(UserOracle):
    """Explores by drawing uniformly over the action vocabulary."""

    def predict(self, state, q, rng, plan_action=None):
        return q.vocab.decode_action(rng.randrange(len(q.vocab)))


class CollaborativeOracle(UserOracle):
    """Asks a live feedback channel (the occupant's console/phone).

    The engine step blocks until an answer arrives or the timeout passes;
    on timeout the sentinel makes the decision degrade to the plan action.
    """

    def __init__(self, channel: FeedbackProvider, timeout: float = 30.0):
        if timeout <= 0:
            raise ValueError("collaborative timeout must be positive")
        self.channel = channel
        self.timeout = timeout

    def predict(self, state, q, rng, plan_action=None):
        plan = plan_action if plan_action is not None else ActionRecord.noop()
        return self.channel.request(state, plan, q.vocab.names(), self.timeout)


def predict(
    oracle: UserOracle,
    state: JointState,
    q: QTable,
    rng: random.Random | None = None,
    plan_action: ActionRecord | None = None,
) -> ActionRecord | None:
    return oracle.predict(state, q, rng if rng is not None else random.Random(), plan_action)


def decide(
    epsilon: float,
    rng: random.Random,
    plan: PlanStep,
    oracle: UserOracle,
    state: JointState,
    q: QTable,
) -> Decision:
    """Epsilon-greedy branch: with probability epsilon take the predicted
    (behavioral) action, otherwise the plan's action.

    A fall-back sentinel from the oracle (collaborative timeout) degrades the
    step to the plan branch, so unattended runs keep moving.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if plan.state != state:
        raise ValueError("plan step was computed for a different state")
    draw = rng.random()
    if draw < epsilon:
        predicted = oracle.predict(state, q, rng, plan_action=plan.action)
        if predicted is not None:
            return Decision(DecisionSource.PREDICTION, state, plan.action, predicted, draw)
    return Decision(DecisionSource.PLAN, state, plan.action, plan.action, draw)


def reward(decision: Decision, params: LearningParams) -> list[RewardEvent]:
    """Reward events for one decision.

    Plan-sourced steps earn the small positive reward. A prediction matching
    the plan earns the big reward. A divergent prediction produces two events,
    plan action first: a negative event that demotes the plan action, then a
    positive one that promotes the user's choice.
    """
    r = params.rewards
    if decision.source is DecisionSource.PLAN:
        return [RewardEvent(decision.state, decision.plan_action, r.r_plan)]
    if decision.chosen_action == decision.plan_action:
        return [RewardEvent(decision.state, decision.chosen_action, r.r_match)]
    return [
        RewardEvent(decision.state, decision.plan_action, r.r_override_neg),
        RewardEvent(decision.state, decision.chosen_action, r.r_override_pos),
    ]


def q_update(q: QTable, ev: RewardEvent, params: LearningParams) -> QUpdate:
    """Apply one temporal-difference update in place and report the change.

    The successor state is derived from the event's own action, and the max
    term ranges over the full action vocabulary at that successor row:

        Q(s,a) <- Q(s,a) + alpha * (R + gamma * max_a' Q(s',a') - Q(s,a))
    """
    s_idx = q.space.encode_state(ev.state)
    if s_idx in q.terminal_states:
        raise TerminalStateError(f"state {ev.state.key} is terminal; its row stays zero")
    a_idx = q.vocab.encode_action(ev.action)
    next_state = q.space.apply_action(ev.state, ev.action)
    ns_idx = q.space.encode_state(next_state)
    before = float(q.values[s_idx, a_idx])
    best_next = q.max_value(ns_idx)
    after = before + params.alpha * (ev.reward + params.gamma * best_next - before)
    q.values[s_idx, a_idx] = after
    return QUpdate(
        state=ev.state,
        action=ev.action,
        reward=ev.reward,
        state_index=s_idx,
        action_index=a_idx,
        before=before,
        after=after,
        next_state=next_state,
        next_state_index=ns_idx,
    )


def update_epsilon(epsilon: float, params: LearningParams) -> float:
    """Per-episode schedule: epsilon approaches 1 geometrically.

        eps_{k+1} = 1 - (1 - eps_k) * rho

    Monotone nondecreasing on [0, 1] with fixed point 1, so decisions shift
    from plan-following toward behavior prediction as episodes accumulate.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    return 1.0 - (1.0 - epsilon) * params.rho
