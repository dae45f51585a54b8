// Live console session: seeds the view model from the REST snapshots, then
// follows the event stream, reconnecting with backoff and replaying from the
// last applied sequence number so the log never gaps or reorders.

import { GatewayClient } from "./client.js";
import { ConsoleModel } from "./model.js";

export type SessionListener = (model: ConsoleModel) => void;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class ConsoleSession {
  readonly model = new ConsoleModel();

  private controller: AbortController | null = null;
  private closed = false;
  private following: Promise<void> | null = null;

  constructor(
    readonly client: GatewayClient,
    private readonly onChange: SessionListener = () => {},
    private readonly backoffMs = 500,
  ) {}

  /** Fetch the initial snapshots and start following the event stream from
   * sequence 0 (or from the last seen sequence after a drop). */
  async connect(): Promise<void> {
    await this.seed();
    this.following = this.followEvents();
  }

  private async seed(): Promise<void> {
    for (;;) {
      try {
        const [state, qtable, status] = await Promise.all([
          this.client.state(),
          this.client.qtable(),
          this.client.status(),
        ]);
        this.model.seed(state, qtable, status);
        this.notify();
        return;
      } catch (err) {
        if (this.closed) {
          return;
        }
        this.model.markOffline();
        this.notify();
        await sleep(this.backoffMs);
      }
    }
  }

  private async followEvents(): Promise<void> {
    while (!this.closed) {
      this.controller = new AbortController();
      try {
        for await (const event of this.client.events(
          this.model.lastSeq + 1,
          this.controller.signal,
        )) {
          if (this.model.applyEvent(event)) {
            this.notify();
          }
        }
        if (this.model.phase === "done") {
          return; // server closed the stream after run_completed
        }
      } catch (err) {
        if (this.closed) {
          return;
        }
        this.model.markOffline();
        this.notify();
      }
      await sleep(this.backoffMs);
    }
  }

  /** Answer the pending prompt. On 410 the engine already fell back to the
   * plan action; the prompt is replaced by a timeout notice. */
  async answerFeedback(action: string): Promise<number> {
    const prompt = this.model.prompt;
    if (!prompt) {
      return 0;
    }
    const status = await this.client.feedback(prompt.request_id, action);
    if (status === 410) {
      this.model.promptExpired();
      this.notify();
    }
    return status;
  }

  async start(mode: "auto" | "manual"): Promise<number> {
    const status = await this.client.start(mode);
    if (status === 200) {
      this.model.runMode = mode;
      this.notify();
    }
    return status;
  }

  async stepOnce(): Promise<number> {
    const result = await this.client.step();
    return result.status;
  }

  /** Step until the episode boundary (pause-at-episode-boundary control). */
  async runEpisode(): Promise<void> {
    for (;;) {
      const result = await this.client.step();
      if (result.status !== 200) {
        return;
      }
      const kinds = result.events.map((event) => event.kind);
      if (kinds.includes("episode_completed") || kinds.includes("run_completed")) {
        return;
      }
    }
  }

  /** Resolves when the event follower has stopped (run done or closed). */
  async finished(): Promise<void> {
    await this.following;
  }

  close(): void {
    this.closed = true;
    this.controller?.abort();
  }

  private notify(): void {
    this.onChange(this.model);
  }
}
