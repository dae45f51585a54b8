"""habitq: a smart-home adaptation engine that starts from value-aligned
plans and learns, via Q-learning over user feedback, to follow the
occupant's actual behavior even where it contradicts those plans."""

from .engine import (
    EngineError,
    EngineObserver,
    EpisodeTrace,
    StepRecord,
    TrainingEngine,
    TrainingReport,
    TrainingResult,
    compute_metrics,
    run_training,
)
from .learning import (
    CollaborativeOracle,
    Decision,
    DecisionSource,
    GreedyFromQOracle,
    LearningParams,
    QTable,
    QUpdate,
    RewardConfig,
    RewardEvent,
    ScriptedOracle,
    TerminalStateError,
    UniformRandomOracle,
    UserOracle,
    decide,
    greedy_action,
    predict,
    q_update,
    reward,
    update_epsilon,
)
from .planner import AmbiguousPlanError, PlanRule, PlanStep, plan_for, validate_rules
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict
from .world import (
    ActionRecord,
    ActionVocabulary,
    DeviceSpec,
    JointState,
    StateSpace,
    build_state_space,
)

__all__ = [
    "ActionRecord",
    "ActionVocabulary",
    "AmbiguousPlanError",
    "CollaborativeOracle",
    "Decision",
    "DecisionSource",
    "DeviceSpec",
    "EngineError",
    "EngineObserver",
    "EpisodeTrace",
    "GreedyFromQOracle",
    "JointState",
    "LearningParams",
    "PlanRule",
    "PlanStep",
    "QTable",
    "QUpdate",
    "RewardConfig",
    "RewardEvent",
    "Scenario",
    "ScenarioError",
    "ScriptedOracle",
    "StateSpace",
    "StepRecord",
    "TerminalStateError",
    "TrainingEngine",
    "TrainingReport",
    "TrainingResult",
    "UniformRandomOracle",
    "UserOracle",
    "build_state_space",
    "compute_metrics",
    "decide",
    "greedy_action",
    "load_scenario",
    "plan_for",
    "predict",
    "q_update",
    "reward",
    "run_training",
    "scenario_from_dict",
    "update_epsilon",
    "validate_rules",
]

__version__ = "0.1.0"
