// Console view model: a pure projection of gateway snapshots and the event
// stream. Heatmap cells are set to the q_updated payload values verbatim;
// the console never does learning arithmetic of its own.

import type {
  DecisionMadeData,
  DeviceBoard,
  EngineEvent,
  EpisodeCompletedData,
  FeedbackPrompt,
  FeedbackResolvedData,
  QTableSnapshot,
  QUpdatedData,
  RunCompletedData,
  RunMode,
  RunPhase,
  RunStatus,
  StateChangedData,
  StateSnapshot,
  TrainingReportData,
} from "./types.js";

export type Connection = "connecting" | "online" | "offline";

export interface LogEntry {
  seq: number;
  kind: string;
  text: string;
}

const LOG_LIMIT = 500;

export class ConsoleModel {
  connection: Connection = "connecting";
  phase: RunPhase = "idle";
  runMode: RunMode | null = null;
  board: DeviceBoard = {};
  changedDevices: Set<string> = new Set();
  episode = 0;
  step = 0;
  epsilon = 0;
  stateLabels: string[] = [];
  actionNames: string[] = [];
  heatmap: number[][] = [];
  prompt: FeedbackPrompt | null = null;
  promptNotice: string | null = null;
  eventLog: LogEntry[] = [];
  lastSeq = -1;
  report: TrainingReportData | null = null;
  lastUpdatedCell: [number, number] | null = null;

  private visitOrder: number[] = [];

  seed(state: StateSnapshot, qtable: QTableSnapshot, status: RunStatus): void {
    this.board = { ...state.state };
    this.step = state.step;
    this.episode = state.episode;
    this.epsilon = state.epsilon;
    this.stateLabels = [...qtable.states];
    this.actionNames = [...qtable.actions];
    this.heatmap = qtable.values.map((row) => [...row]);
    this.phase = status.phase;
    this.runMode = status.mode ?? null;
    this.prompt = status.pending_feedback ?? null;
    this.connection = "online";
  }

  /** Apply one stream event. Returns false for duplicates (reconnect replay
   * overlap); throws if the stream skipped ahead, which would mean a gap in
   * the on-screen log. */
  applyEvent(event: EngineEvent): boolean {
    if (event.seq <= this.lastSeq) {
      return false;
    }
    if (event.seq !== this.lastSeq + 1) {
      throw new Error(`event gap: expected seq ${this.lastSeq + 1}, got ${event.seq}`);
    }
    this.lastSeq = event.seq;
    this.connection = "online";
    switch (event.kind) {
      case "decision_made":
        this.onDecision(event.data as DecisionMadeData);
        break;
      case "feedback_requested":
        this.prompt = event.data as FeedbackPrompt;
        this.promptNotice = null;
        this.phase = "waiting_feedback";
        break;
      case "feedback_resolved":
        this.onFeedbackResolved(event.data as FeedbackResolvedData);
        break;
      case "q_updated":
        this.onQUpdated(event.data as QUpdatedData);
        break;
      case "state_changed":
        this.onStateChanged(event.data as StateChangedData);
        break;
      case "episode_completed": {
        const data = event.data as EpisodeCompletedData;
        this.epsilon = data.epsilon_next;
        this.episode = data.episode + 1;
        this.step = 0;
        break;
      }
      case "run_completed": {
        const data = event.data as RunCompletedData;
        this.report = data.report;
        this.phase = "done";
        break;
      }
    }
    this.pushLog(event);
    return true;
  }

  markOffline(): void {
    this.connection = "offline";
  }

  promptExpired(): void {
    this.prompt = null;
    this.promptNotice = "timed out, plan action used";
  }

  /** Heatmap row order: visited states first (in first-visit order). */
  rowOrder(): number[] {
    const rest = this.stateLabels
      .map((_, index) => index)
      .filter((index) => !this.visitOrder.includes(index));
    return [...this.visitOrder, ...rest];
  }

  /** Largest |Q| on the board, for the signed color scale centered at 0. */
  maxAbs(): number {
    let max = 0;
    for (const row of this.heatmap) {
      for (const value of row) {
        max = Math.max(max, Math.abs(value));
      }
    }
    return max;
  }

  private onDecision(data: DecisionMadeData): void {
    this.episode = data.episode;
    this.step = data.step;
    this.epsilon = data.epsilon;
    if (this.phase === "idle") {
      this.phase = "running";
    }
  }

  private onFeedbackResolved(data: FeedbackResolvedData): void {
    this.prompt = null;
    this.promptNotice =
      data.resolution === "timeout" ? "timed out, plan action used" : null;
    if (this.phase === "waiting_feedback") {
      this.phase = "running";
    }
  }

  private onQUpdated(data: QUpdatedData): void {
    const row = this.heatmap[data.state_index];
    if (row) {
      row[data.action_index] = data.after; // verbatim from the gateway
    }
    this.lastUpdatedCell = [data.state_index, data.action_index];
    if (!this.visitOrder.includes(data.state_index)) {
      this.visitOrder.push(data.state_index);
    }
  }

  private onStateChanged(data: StateChangedData): void {
    this.changedDevices = new Set(
      Object.keys(data.state).filter((device) => this.board[device] !== data.state[device]),
    );
    this.board = { ...data.state };
  }

  private pushLog(event: EngineEvent): void {
    this.eventLog.push({ seq: event.seq, kind: event.kind, text: describe(event) });
    if (this.eventLog.length > LOG_LIMIT) {
      this.eventLog.splice(0, this.eventLog.length - LOG_LIMIT);
    }
  }
}

function boardText(board: DeviceBoard): string {
  return Object.entries(board)
    .map(([device, label]) => `${device}=${label}`)
    .join(", ");
}

function describe(event: EngineEvent): string {
  switch (event.kind) {
    case "decision_made": {
      const d = event.data as DecisionMadeData;
      const chosen = d.chosen_action ?? "(awaiting feedback)";
      return d.source === "plan"
        ? `plan step: ${d.plan_action}`
        : `prediction step: ${chosen} (plan was ${d.plan_action})`;
    }
    case "feedback_requested": {
      const d = event.data as FeedbackPrompt;
      return `your call: plan suggests ${d.plan_action}`;
    }
    case "feedback_resolved": {
      const d = event.data as FeedbackResolvedData;
      return d.resolution === "answered"
        ? `you chose ${d.action}`
        : "no answer in time, plan action used";
    }
    case "q_updated": {
      const d = event.data as QUpdatedData;
      const sign = d.reward >= 0 ? "+" : "";
      return `Q[${boardText(d.state)}][${d.action}] ${sign}${d.reward}: ${round(d.before)} -> ${round(d.after)}`;
    }
    case "state_changed": {
      const d = event.data as StateChangedData;
      return `state: ${boardText(d.state)}`;
    }
    case "episode_completed": {
      const d = event.data as EpisodeCompletedData;
      return `episode ${d.episode} done, reward ${round(d.cumulative_reward)}, next epsilon ${round(d.epsilon_next)}`;
    }
    case "run_completed": {
      const d = event.data as RunCompletedData;
      const convergence =
        d.report.convergence_episode === null
          ? "no convergence"
          : `converged at episode ${d.report.convergence_episode}`;
      return `run finished after ${d.episodes} episodes (${convergence})`;
    }
    default:
      return event.kind;
  }
}

function round(value: number): string {
  return (Math.round(value * 1000) / 1000).toString();
}
