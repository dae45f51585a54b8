from __future__ import annotations

import json

import numpy as np
import pytest

from habitq import (
    DecisionSource,
    ScenarioError,
    TrainingEngine,
    compute_metrics,
    load_scenario,
    run_training,
)
from habitq.persist import (
    ReplayError,
    load_qtable,
    load_trace,
    replay_trace,
    save_qtable,
    save_trace,
)

from conftest import base_scenario_dict


class TestLoadScenario:
    def test_minimal_file_loads_with_noop_vocabulary(self, write_scenario):
        path = write_scenario(
            {
                "devices": {"lamp": ["off", "on"]},
                "initial_state": {"lamp": "off"},
                "oracle": {"type": "greedy"},
            }
        )
        scenario = load_scenario(path)
        assert "noop" in scenario.vocab.names()
        assert scenario.steps_per_episode == 1 and scenario.episodes == 1

    def test_unknown_label_in_rule_names_rule_and_label(self, write_scenario):
        data = base_scenario_dict(
            rules=[{"match": {"lamp": "off"}, "next": {"lamp": "sideways"}, "priority": 1}]
        )
        with pytest.raises(ScenarioError, match=r"rule 0.*sideways"):
            load_scenario(write_scenario(data))

    def test_vacation_phone_fixture(self, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        assert len(scenario.space.devices) == 2
        assert len(scenario.rules) == 3
        assert scenario.oracle_spec.type == "scripted"
        assert scenario.vocab.names() == (
            "noop",
            "phone:accepted",
            "phone:declined",
            "phone:idle",
        )

    def test_parse_error_reported(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="not valid JSON"):
            load_scenario(path)

    def test_missing_file_reported(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            load_scenario(tmp_path / "absent.json")

    def test_episodes_below_one_rejected(self, write_scenario):
        with pytest.raises(ScenarioError, match="episodes"):
            load_scenario(write_scenario(base_scenario_dict(episodes=0)))

    def test_steps_below_one_rejected(self, write_scenario):
        with pytest.raises(ScenarioError, match="steps_per_episode"):
            load_scenario(write_scenario(base_scenario_dict(steps_per_episode=0)))

    def test_ambiguous_rules_promoted_to_error(self, write_scenario):
        data = base_scenario_dict(
            rules=[
                {"match": {"lamp": "off"}, "next": {"lamp": "on"}, "priority": 1},
                {"match": {"tv": "off"}, "next": {"tv": "on"}, "priority": 1},
            ]
        )
        with pytest.raises(ScenarioError, match="ambiguous"):
            load_scenario(write_scenario(data))

    def test_scripted_without_default_must_be_total(self, write_scenario):
        data = base_scenario_dict(oracle={"type": "scripted", "preferences": []})
        with pytest.raises(ScenarioError, match="not total"):
            load_scenario(write_scenario(data))

    def test_unknown_oracle_type_rejected(self, write_scenario):
        data = base_scenario_dict(oracle={"type": "telepathy"})
        with pytest.raises(ScenarioError, match="oracle"):
            load_scenario(write_scenario(data))

    def test_unknown_keys_rejected(self, write_scenario):
        with pytest.raises(ScenarioError, match="unknown top-level key"):
            load_scenario(write_scenario(base_scenario_dict(episdoes=3)))

    def test_initial_state_validated(self, write_scenario):
        data = base_scenario_dict(initial_state={"lamp": "off"})
        with pytest.raises(ScenarioError, match="missing device"):
            load_scenario(write_scenario(data))


def scripted_scenario(write_scenario, **overrides):
    return load_scenario(write_scenario(base_scenario_dict(**overrides)))


class TestRunEpisode:
    def test_epsilon_zero_forces_plan_branch(self, write_scenario):
        scenario = scripted_scenario(
            write_scenario,
            steps_per_episode=1,
            episodes=1,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 0.0, "rho": 0.9},
        )
        engine = TrainingEngine(scenario)
        trace = engine.run_episode(0)
        assert len(trace.steps) == 1
        step = trace.steps[0]
        assert step.source is DecisionSource.PLAN
        assert [ev.reward for ev in step.events] == [1.0]

    def test_epsilon_one_matching_oracle_gives_big_reward(self, write_scenario):
        # scripted oracle mirrors the single plan rule at the initial state
        data = base_scenario_dict(
            steps_per_episode=1,
            episodes=1,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 1.0, "rho": 0.9},
            oracle={
                "type": "scripted",
                "preferences": [
                    {"state": {"lamp": "off", "tv": "off"}, "action": "lamp:on"}
                ],
                "default": "noop",
            },
        )
        scenario = load_scenario(write_scenario(data))
        trace = TrainingEngine(scenario).run_episode(0)
        step = trace.steps[0]
        assert step.source is DecisionSource.PREDICTION
        assert [ev.reward for ev in step.events] == [5.0]

    def test_epsilon_one_divergent_oracle_double_update_and_executes_prediction(
        self, write_scenario
    ):
        data = base_scenario_dict(
            steps_per_episode=1,
            episodes=1,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 1.0, "rho": 0.9},
            oracle={
                "type": "scripted",
                "preferences": [
                    {"state": {"lamp": "off", "tv": "off"}, "action": "tv:mute"}
                ],
                "default": "noop",
            },
        )
        scenario = load_scenario(write_scenario(data))
        trace = TrainingEngine(scenario).run_episode(0)
        step = trace.steps[0]
        assert [ev.reward for ev in step.events] == [-5.0, 5.0]
        assert step.events[0].action.name == "lamp:on"  # plan action demoted first
        assert step.events[1].action.name == "tv:mute"
        # the environment executes the user's (predicted) action
        assert step.chosen_action.name == "tv:mute"
        assert step.next_state.as_dict() == {"lamp": "off", "tv": "mute"}

    def test_trace_chains_states_through_executed_actions(self, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path).with_overrides(episodes=10)
        result = run_training(scenario)
        for trace in result.traces:
            assert len(trace.steps) == scenario.steps_per_episode
            assert trace.steps[0].state == scenario.initial_state
            for a, b in zip(trace.steps, trace.steps[1:]):
                assert a.next_state == scenario.space.apply_action(a.state, a.chosen_action)
                assert b.state == a.next_state

    def test_wrong_episode_index_rejected(self, write_scenario):
        scenario = scripted_scenario(write_scenario)
        engine = TrainingEngine(scenario)
        with pytest.raises(ValueError, match="episode"):
            engine.run_episode(1)

    def test_terminal_state_ends_episode_early(self, write_scenario):
        from habitq import QTable

        scenario = scripted_scenario(
            write_scenario,
            steps_per_episode=5,
            episodes=2,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 0.0, "rho": 0.9},
        )
        terminal = scenario.space.encode_state(scenario.space.state({"lamp": "on", "tv": "off"}))
        q = QTable(scenario.space, scenario.vocab, terminal_states=[terminal])
        result = TrainingEngine(scenario, qtable=q).run()
        for trace in result.traces:  # the plan rule drives straight into the terminal
            assert len(trace.steps) == 1
            assert trace.steps[0].next_state.as_dict() == {"lamp": "on", "tv": "off"}
        assert not result.qtable.values[terminal].any()


class TestRunTraining:
    def test_all_plan_episode_reward_is_steps_times_r_plan(self, write_scenario):
        scenario = scripted_scenario(
            write_scenario,
            steps_per_episode=7,
            episodes=3,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 0.0, "rho": 0.9},
        )
        result = run_training(scenario)
        assert result.report.episode_rewards == [7.0, 7.0, 7.0]

    def test_epsilon_updated_between_episodes(self, write_scenario):
        scenario = scripted_scenario(write_scenario, episodes=3)
        result = run_training(scenario)
        eps = [t.epsilon for t in result.traces]
        assert eps[0] == scenario.params.epsilon0
        assert eps[1] == pytest.approx(0.19)
        assert eps[2] == pytest.approx(1.0 - 0.9 * 0.81)
        assert result.report.final_epsilon == pytest.approx(1.0 - 0.9 * 0.9**3)

    def test_same_seed_gives_identical_reports_and_traces(self, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        a, b = run_training(scenario), run_training(scenario)
        assert a.report.to_dict() == b.report.to_dict()
        assert a.traces == b.traces
        assert np.array_equal(a.qtable.values, b.qtable.values)

    def test_convergence_fixture_converges_within_30_episodes(self, vacation_scenario_path):
        result = run_training(load_scenario(vacation_scenario_path))
        assert result.report.convergence_episode is not None
        assert result.report.convergence_episode <= 30

    def test_alignment_only_reported_for_scripted_oracles(self, write_scenario):
        scenario = scripted_scenario(write_scenario, oracle={"type": "random"})
        result = run_training(scenario)
        assert result.report.alignment_rates is None
        assert result.report.convergence_episode is None


class TestComputeMetrics:
    def test_alignment_over_visited_states_only(self, write_scenario):
        scenario = scripted_scenario(
            write_scenario,
            steps_per_episode=4,
            episodes=2,
            params={"alpha": 0.5, "gamma": 0.9, "epsilon0": 0.0, "rho": 0.9},
        )
        result = run_training(scenario)
        oracle = scenario.build_oracle()
        report = compute_metrics(
            result.traces, oracle, scenario.space, scenario.vocab, scenario.params
        )
        assert report.episode_rewards == [4.0, 4.0]
        assert report.alignment_rates is not None
        assert all(0.0 <= r <= 1.0 for r in report.alignment_rates)

    def test_post_convergence_alignment_is_one(self, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        result = run_training(scenario)
        conv = result.report.convergence_episode
        assert conv is not None
        assert all(r == 1.0 for r in result.report.alignment_rates[conv:])

    def test_empty_traces_rejected(self, write_scenario):
        scenario = scripted_scenario(write_scenario)
        with pytest.raises(ValueError):
            compute_metrics([], scenario.build_oracle(), scenario.space, scenario.vocab, scenario.params)


class TestPersistence:
    def test_qtable_roundtrip_is_lossless(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        result = run_training(scenario)
        path = tmp_path / "qtable.json"
        save_qtable(result.qtable, path)
        loaded = load_qtable(path, scenario)
        assert np.array_equal(loaded.values, result.qtable.values)
        assert loaded.vocab.names() == result.qtable.vocab.names()

    def test_mismatched_scenario_rejected(self, tmp_path, vacation_scenario_path, write_scenario):
        scenario = load_scenario(vacation_scenario_path)
        result = run_training(scenario.with_overrides(episodes=2))
        path = tmp_path / "qtable.json"
        save_qtable(result.qtable, path)
        other = scripted_scenario(write_scenario)  # different devices entirely
        with pytest.raises(ValueError, match="manifest"):
            load_qtable(path, other)

    def test_non_finite_values_rejected(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path).with_overrides(episodes=2)
        result = run_training(scenario)
        path = tmp_path / "qtable.json"
        save_qtable(result.qtable, path)
        data = json.loads(path.read_text())
        data["values"][3] = float("nan")
        path.write_text(json.dumps(data))
        with pytest.raises(ValueError, match="finite"):
            load_qtable(path)

    def test_wrong_value_count_rejected(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path).with_overrides(episodes=2)
        result = run_training(scenario)
        path = tmp_path / "qtable.json"
        save_qtable(result.qtable, path)
        data = json.loads(path.read_text())
        data["values"] = data["values"][:-1]
        path.write_text(json.dumps(data))
        with pytest.raises(ValueError, match="expected"):
            load_qtable(path)

    def test_trace_replay_reproduces_final_table(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        result = run_training(scenario)
        path = tmp_path / "trace.json"
        save_trace(result, scenario, path)
        replayed = replay_trace(load_trace(path))
        assert np.array_equal(replayed.values, result.qtable.values)

    def test_tampered_trace_fails_replay(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path).with_overrides(episodes=3)
        result = run_training(scenario)
        path = tmp_path / "trace.json"
        save_trace(result, scenario, path)
        data = json.loads(path.read_text())
        data["episodes"][0]["steps"][0]["events"][0]["reward"] += 1.0
        path.write_text(json.dumps(data))
        with pytest.raises(ReplayError):
            replay_trace(load_trace(path))

    def test_trace_bytes_identical_across_runs(self, tmp_path, vacation_scenario_path):
        scenario = load_scenario(vacation_scenario_path)
        for name in ("a.json", "b.json"):
            save_trace(run_training(scenario), scenario, tmp_path / name)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
