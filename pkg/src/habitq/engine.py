"""Training engine: runs episodes over a scenario and records full traces.

Each episode restarts from the scenario's initial state and executes a fixed
number of steps (fewer only if a terminal state is reached). A step is:
plan lookup, epsilon-greedy decision, reward events, one Q-update per event,
then the transition to the executed action's successor state. Epsilon is
updated once per episode. With a fixed seed and a non-collaborative oracle
the whole run is deterministic, byte for byte.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .learning import (
    Decision,
    DecisionSource,
    LearningParams,
    QTable,
    QUpdate,
    RewardEvent,
    ScriptedOracle,
    UserOracle,
    decide,
    greedy_action,
    q_update,
    reward,
    update_epsilon,
)
from .planner import PlanStep, plan_for
from .scenario import Scenario
from .world import ActionRecord, ActionVocabulary, JointState, StateSpace


class EngineError(RuntimeError):
    """Step-level failure annotated with its episode/step context."""


@dataclass(frozen=True)
class StepRecord:
    episode: int
    step: int
    epsilon: float
    state: JointState
    plan_action: ActionRecord
    source: DecisionSource
    chosen_action: ActionRecord
    draw: float
    events: tuple[RewardEvent, ...]
    updates: tuple[QUpdate, ...]
    next_state: JointState


@dataclass(frozen=True)
class EpisodeTrace:
    episode: int
    epsilon: float
    steps: tuple[StepRecord, ...]

    @property
    def cumulative_reward(self) -> float:
        return sum(ev.reward for rec in self.steps for ev in rec.events)

    def visited_states(self) -> list[JointState]:
        seen: list[JointState] = []
        for rec in self.steps:
            if rec.state not in seen:
                seen.append(rec.state)
        return seen


@dataclass
class TrainingReport:
    episode_rewards: list[float]
    alignment_rates: list[float] | None
    convergence_episode: int | None
    final_epsilon: float

    def to_dict(self) -> dict:
        return {
            "episode_rewards": self.episode_rewards,
            "alignment_rates": self.alignment_rates,
            "convergence_episode": self.convergence_episode,
            "final_epsilon": self.final_epsilon,
        }


@dataclass
class TrainingResult:
    report: TrainingReport
    qtable: QTable
    traces: list[EpisodeTrace]


@dataclass(frozen=True)
class StepContext:
    """Where the engine currently is; handed to observer hooks."""

    episode: int
    step: int
    epsilon: float
    state: JointState
    plan: PlanStep


class EngineObserver:
    """No-op hooks called in causal order; the gateway turns these into its
    wire events. Hooks run on the engine's (single) executing thread."""

    def on_step_begin(self, ctx: StepContext) -> None: ...

    def on_decision(self, ctx: StepContext, decision: Decision) -> None: ...

    def on_q_update(self, ctx: StepContext, update: QUpdate) -> None: ...

    def on_state_change(self, ctx: StepContext, state: JointState) -> None: ...

    def on_episode_end(self, trace: EpisodeTrace, epsilon_next: float) -> None: ...

    def on_run_end(self, result: TrainingResult) -> None: ...


class TrainingEngine:
    """Owns the Q-table, RNG, and episode position for one training run.

    All mutation happens through step()/run(); callers must serialize access
    themselves (the gateway funnels commands through a single lock).
    """

    def __init__(
        self,
        scenario: Scenario,
        oracle: UserOracle | None = None,
        observer: EngineObserver | None = None,
        qtable: QTable | None = None,
    ):
        self.scenario = scenario
        self.space: StateSpace = scenario.space
        self.vocab: ActionVocabulary = scenario.vocab
        self.params: LearningParams = scenario.params
        self.q = qtable if qtable is not None else QTable(self.space, self.vocab)
        if self.q.shape != (self.space.cardinality, len(self.vocab)):
            raise ValueError("provided Q-table does not match the scenario's world")
        self.oracle = oracle if oracle is not None else scenario.build_oracle()
        self.observer = observer if observer is not None else EngineObserver()
        self.rng = random.Random(scenario.seed)
        self.epsilon = scenario.params.epsilon0
        self.episode = 0
        self.step_in_episode = 0
        self.state: JointState = scenario.initial_state
        self.traces: list[EpisodeTrace] = []
        self.result: TrainingResult | None = None
        self.done = False
        self._episode_steps: list[StepRecord] = []
        self._begin_episode()

    def _is_terminal(self, state: JointState) -> bool:
        return self.space.encode_state(state) in self.q.terminal_states

    def _begin_episode(self) -> None:
        # A terminal initial state ends episodes immediately (zero steps).
        while not self.done and self._is_terminal(self.scenario.initial_state):
            self._complete_episode()
        self.state = self.scenario.initial_state
        self.step_in_episode = 0

    def _complete_episode(self) -> None:
        trace = EpisodeTrace(self.episode, self.epsilon, tuple(self._episode_steps))
        self._episode_steps = []
        self.traces.append(trace)
        epsilon_next = update_epsilon(self.epsilon, self.params)
        self.observer.on_episode_end(trace, epsilon_next)
        self.epsilon = epsilon_next
        self.episode += 1
        if self.episode >= self.scenario.episodes:
            self.done = True
            self.result = TrainingResult(
                report=compute_metrics(
                    self.traces, self.oracle, self.space, self.vocab, self.params
                ),
                qtable=self.q,
                traces=self.traces,
            )
            self.observer.on_run_end(self.result)

    def step(self) -> StepRecord:
        """Execute one decision step; finishes the episode (and possibly the
        run) when the step budget or a terminal state is reached."""
        if self.done:
            raise EngineError("training run already completed")
        episode, k, epsilon, state = self.episode, self.step_in_episode, self.epsilon, self.state
        try:
            plan = plan_for(self.space, state, self.scenario.rules)
            ctx = StepContext(episode, k, epsilon, state, plan)
            self.observer.on_step_begin(ctx)
            decision = decide(epsilon, self.rng, plan, self.oracle, state, self.q)
            self.observer.on_decision(ctx, decision)
            events = tuple(reward(decision, self.params))
            updates = []
            for ev in events:
                update = q_update(self.q, ev, self.params)
                self.observer.on_q_update(ctx, update)
                updates.append(update)
            next_state = self.space.apply_action(state, decision.chosen_action)
        except (ValueError, LookupError) as exc:
            raise EngineError(
                f"episode {episode} step {k} at state {state.key}: {exc}"
            ) from exc
        self.state = next_state
        self.observer.on_state_change(ctx, next_state)
        record = StepRecord(
            episode=episode,
            step=k,
            epsilon=epsilon,
            state=state,
            plan_action=plan.action,
            source=decision.source,
            chosen_action=decision.chosen_action,
            draw=decision.draw,
            events=events,
            updates=tuple(updates),
            next_state=next_state,
        )
        self._episode_steps.append(record)
        self.step_in_episode += 1
        if self.step_in_episode >= self.scenario.steps_per_episode or self._is_terminal(next_state):
            self._complete_episode()
            if not self.done:
                self._begin_episode()
        return record

    def run_episode(self, episode_index: int) -> EpisodeTrace:
        """Run the engine's current episode to completion."""
        if episode_index < len(self.traces):
            return self.traces[episode_index]
        if episode_index != self.episode:
            raise ValueError(
                f"engine is at episode {self.episode}, cannot run episode {episode_index}"
            )
        if self.done:
            raise EngineError("training run already completed")
        while not self.done and self.episode == episode_index:
            self.step()
        return self.traces[episode_index]

    def run(self) -> TrainingResult:
        while not self.done:
            self.step()
        assert self.result is not None
        return self.result


def run_training(
    scenario: Scenario,
    oracle: UserOracle | None = None,
    observer: EngineObserver | None = None,
) -> TrainingResult:
    """Execute all episodes of a scenario; deterministic for a fixed seed and
    non-collaborative oracles."""
    return TrainingEngine(scenario, oracle=oracle, observer=observer).run()


def compute_metrics(
    traces: Sequence[EpisodeTrace],
    oracle: UserOracle,
    space: StateSpace,
    vocab: ActionVocabulary,
    params: LearningParams,
) -> TrainingReport:
    """Report rebuilt from traces alone: the recorded reward events are
    replayed through the Q-update, so the per-episode alignment is read off
    the table exactly as it stood at each episode boundary.

    Alignment (and hence convergence) is only defined for scripted oracles.
    """
    if not traces:
        raise ValueError("compute_metrics needs at least one episode trace")
    scripted = oracle if isinstance(oracle, ScriptedOracle) else None
    replay = QTable(space, vocab)
    episode_rewards: list[float] = []
    alignment_rates: list[float] | None = [] if scripted else None
    for trace in traces:
        total = 0.0
        for rec in trace.steps:
            for ev in rec.events:
                total += ev.reward
                q_update(replay, ev, params)
        episode_rewards.append(total)
        if scripted is not None and alignment_rates is not None:
            visited = trace.visited_states()
            if visited:
                aligned = sum(
                    1 for s in visited if greedy_action(replay, s) == scripted.preference(s)
                )
                alignment_rates.append(aligned / len(visited))
            else:
                alignment_rates.append(1.0)
    convergence = None
    if alignment_rates and alignment_rates[-1] == 1.0:
        convergence = len(alignment_rates) - 1
        while convergence > 0 and alignment_rates[convergence - 1] == 1.0:
            convergence -= 1
    final_epsilon = update_epsilon(traces[-1].epsilon, params)
    return TrainingReport(
        episode_rewards=episode_rewards,
        alignment_rates=alignment_rates,
        convergence_episode=convergence,
        final_epsilon=final_epsilon,
    )
