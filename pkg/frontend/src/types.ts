// Wire types for the gateway HTTP + event-stream API. Field names are
// bit-exact with the server payloads; the console adds nothing of its own.

export type RunPhase = "idle" | "running" | "waiting_feedback" | "done";

export type DeviceBoard = Record<string, string>;

export interface StateSnapshot {
  state: DeviceBoard;
  step: number;
  episode: number;
  epsilon: number;
}

export interface QTableSnapshot {
  states: string[];
  actions: string[];
  values: number[][];
}

export interface FeedbackPrompt {
  request_id: string;
  state: DeviceBoard;
  plan_action: string;
  actions: string[];
  deadline: number; // unix epoch seconds
  timeout_seconds: number;
}

export type RunMode = "auto" | "manual";

export interface RunStatus {
  phase: RunPhase;
  mode?: RunMode;
  pending_feedback?: FeedbackPrompt;
}

export type EventKind =
  | "state_changed"
  | "decision_made"
  | "feedback_requested"
  | "feedback_resolved"
  | "q_updated"
  | "episode_completed"
  | "run_completed";

export interface EngineEvent<T = unknown> {
  seq: number;
  kind: EventKind;
  data: T;
}

export interface DecisionMadeData {
  episode: number;
  step: number;
  state: DeviceBoard;
  epsilon: number;
  draw: number | null;
  source: "plan" | "prediction";
  plan_action: string;
  chosen_action: string | null;
}

export interface FeedbackResolvedData {
  request_id: string;
  action: string | null;
  resolution: "answered" | "timeout";
}

export interface QUpdatedData {
  episode: number;
  step: number;
  state: DeviceBoard;
  action: string;
  reward: number;
  before: number;
  after: number;
  next_state: DeviceBoard;
  state_index: number;
  action_index: number;
}

export interface StateChangedData {
  episode: number;
  step: number;
  state: DeviceBoard;
}

export interface EpisodeCompletedData {
  episode: number;
  steps: number;
  cumulative_reward: number;
  epsilon_next: number;
}

export interface TrainingReportData {
  episode_rewards: number[];
  alignment_rates: number[] | null;
  convergence_episode: number | null;
  final_epsilon: number;
}

export interface RunCompletedData {
  episodes: number;
  report: TrainingReportData;
}
