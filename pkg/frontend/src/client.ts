// Thin typed client for the gateway REST endpoints and event stream.

import { sseEvents } from "./sse.js";
import type {
  EngineEvent,
  QTableSnapshot,
  RunStatus,
  StateSnapshot,
} from "./types.js";

export interface StepResult {
  status: number;
  events: EngineEvent[];
}

export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.url(path));
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  state(): Promise<StateSnapshot> {
    return this.getJson("/api/state");
  }

  qtable(): Promise<QTableSnapshot> {
    return this.getJson("/api/qtable");
  }

  status(): Promise<RunStatus> {
    return this.getJson("/api/run/status");
  }

  /** Returns the HTTP status; 409 means a run is already started. */
  async start(mode: "auto" | "manual"): Promise<number> {
    const resp = await fetch(this.url("/api/run/start"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mode }),
    });
    return resp.status;
  }

  /** Manual mode: one engine step. Blocks while feedback is pending. */
  async step(): Promise<StepResult> {
    const resp = await fetch(this.url("/api/run/step"), { method: "POST" });
    if (!resp.ok) {
      return { status: resp.status, events: [] };
    }
    const body = (await resp.json()) as { events: EngineEvent[] };
    return { status: resp.status, events: body.events };
  }

  /** Returns the HTTP status: 200 answered, 404 unknown, 410 expired,
   * 422 action not offered. */
  async feedback(requestId: string, action: string): Promise<number> {
    const resp = await fetch(this.url("/api/feedback"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ request_id: requestId, action }),
    });
    return resp.status;
  }

  events(fromSeq: number, signal: AbortSignal): AsyncGenerator<EngineEvent> {
    return sseEvents(this.url(`/api/events?from=${fromSeq}`), signal);
  }
}
