"""HTTP gateway: request/response API plus a server-push event stream.

The engine runs on a single worker (auto mode) or inside step requests
(manual mode); every mutating command funnels through one lock, so the
learning state only ever sees a serialized command stream. Events are
appended to an in-process log with gapless sequence numbers; any number of
subscribers can replay from a sequence number and then follow live, and a
slow subscriber never blocks the engine.

The feedback channel is the collaborative oracle's surface: a prediction
step blocks until the occupant answers (or the deadline passes, in which
case the step falls back to the plan action).
"""
from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass
from typing import Iterator, Literal

import uvicorn
from contextlib import asynccontextmanager
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .engine import (
    EngineObserver,
    EpisodeTrace,
    StepContext,
    TrainingEngine,
    TrainingResult,
)
from .learning import Decision, DecisionSource, QUpdate
from .scenario import Scenario
from .world import ActionRecord, JointState

PHASE_IDLE = "idle"
PHASE_RUNNING = "running"
PHASE_WAITING = "waiting_feedback"
PHASE_DONE = "done"


class UnknownRequestError(KeyError):
    """Feedback posted against a request id that was never issued."""


class ExpiredRequestError(KeyError):
    """Feedback posted against a request whose deadline has passed."""


class InvalidFeedbackActionError(ValueError):
    """Feedback action is not among the offered vocabulary; request stays pending."""


@dataclass(frozen=True)
class FeedbackRequest:
    """One pending ask to the occupant; at most one exists at a time."""

    request_id: str
    state: JointState
    plan_action: str
    actions: tuple[str, ...]
    deadline: float  # unix epoch seconds
    timeout_seconds: float

    def to_payload(self) -> dict:
        return {
            "request_id": self.request_id,
            "state": self.state.as_dict(),
            "plan_action": self.plan_action,
            "actions": list(self.actions),
            "deadline": self.deadline,
            "timeout_seconds": self.timeout_seconds,
        }


@dataclass(frozen=True)
class EngineEvent:
    seq: int
    kind: str
    data: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "data": self.data}

    def to_sse(self) -> str:
        body = json.dumps(self.to_dict(), sort_keys=True)
        return f"id: {self.seq}\nevent: {self.kind}\ndata: {body}\n\n"


class EventLog:
    """Append-only event list with gapless 0-based sequence numbers."""

    def __init__(self) -> None:
        self._events: list[EngineEvent] = []
        self._cond = threading.Condition()

    def append(self, kind: str, data: dict) -> EngineEvent:
        with self._cond:
            event = EngineEvent(len(self._events), kind, data)
            self._events.append(event)
            self._cond.notify_all()
            return event

    def __len__(self) -> int:
        with self._cond:
            return len(self._events)

    def get(self, seq: int, timeout: float | None = None) -> EngineEvent | None:
        """Event at ``seq``, waiting up to ``timeout`` for it to appear."""
        with self._cond:
            if seq < len(self._events):
                return self._events[seq]
            self._cond.wait(timeout)
            if seq < len(self._events):
                return self._events[seq]
            return None

    def snapshot(self) -> list[EngineEvent]:
        with self._cond:
            return list(self._events)


class GatewayFeedbackChannel:
    """Blocking bridge between the engine's collaborative oracle and HTTP.

    The engine thread calls request() and sleeps; an HTTP thread resolves it.
    Emits the step's early decision_made plus the feedback_requested and
    feedback_resolved events, in that order.
    """

    def __init__(self, host: "EngineHost"):
        self._host = host
        self._cond = threading.Condition()
        self._pending: FeedbackRequest | None = None
        self._deadline_mono = 0.0
        self._answer: ActionRecord | None = None
        self._closed: set[str] = set()
        self._cancelled = False
        self._ids = itertools.count()

    def pending(self) -> FeedbackRequest | None:
        with self._cond:
            return self._pending

    def request(self, state, plan_action, options, timeout):
        request = FeedbackRequest(
            request_id=f"fb-{next(self._ids)}",
            state=state,
            plan_action=plan_action.name,
            actions=tuple(options),
            deadline=time.time() + timeout,
            timeout_seconds=timeout,
        )
        deadline_mono = time.monotonic() + timeout
        with self._cond:
            self._pending = request
            self._deadline_mono = deadline_mono
            self._answer = None
        self._host._feedback_opened(request)
        with self._cond:
            while self._answer is None and not self._cancelled:
                remaining = deadline_mono - time.monotonic()
                if remaining <= 0:
                    break
                self._cond.wait(remaining)
            answer = self._answer
            self._pending = None
            self._answer = None
            self._closed.add(request.request_id)
        self._host._feedback_closed(request, answer)
        return answer

    def resolve(self, request_id: str, action_name: str) -> None:
        with self._cond:
            pending = self._pending
            if pending is None or pending.request_id != request_id:
                if request_id in self._closed:
                    raise ExpiredRequestError(request_id)
                raise UnknownRequestError(request_id)
            if action_name not in pending.actions:
                raise InvalidFeedbackActionError(
                    f"action {action_name!r} is not among the offered actions"
                )
            if time.monotonic() > self._deadline_mono:
                raise ExpiredRequestError(request_id)
            self._answer = ActionRecord.parse(action_name)
            self._cond.notify_all()

    def cancel(self) -> None:
        """Release a blocked engine step immediately (shutdown path)."""
        with self._cond:
            self._cancelled = True
            self._cond.notify_all()


class _HostObserver(EngineObserver):
    def __init__(self, host: "EngineHost"):
        self.host = host

    def on_step_begin(self, ctx: StepContext) -> None:
        self.host._ctx = ctx

    def on_decision(self, ctx: StepContext, decision: Decision) -> None:
        self.host._emit_decision(ctx, decision)

    def on_q_update(self, ctx: StepContext, update: QUpdate) -> None:
        self.host.log.append(
            "q_updated",
            {
                "episode": ctx.episode,
                "step": ctx.step,
                "state": update.state.as_dict(),
                "action": update.action.name,
                "reward": update.reward,
                "before": update.before,
                "after": update.after,
                "next_state": update.next_state.as_dict(),
                "state_index": update.state_index,
                "action_index": update.action_index,
            },
        )

    def on_state_change(self, ctx: StepContext, state: JointState) -> None:
        self.host.log.append(
            "state_changed",
            {"episode": ctx.episode, "step": ctx.step, "state": state.as_dict()},
        )

    def on_episode_end(self, trace: EpisodeTrace, epsilon_next: float) -> None:
        self.host.log.append(
            "episode_completed",
            {
                "episode": trace.episode,
                "steps": len(trace.steps),
                "cumulative_reward": trace.cumulative_reward,
                "epsilon_next": epsilon_next,
            },
        )

    def on_run_end(self, result: TrainingResult) -> None:
        self.host._finish(result)


class EngineHost:
    """Owns the engine, its worker thread, the event log, and the channel."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.log = EventLog()
        self.channel = GatewayFeedbackChannel(self)
        self.engine = TrainingEngine(
            scenario,
            oracle=scenario.build_oracle(channel=self.channel),
            observer=_HostObserver(self),
        )
        self._cmd = threading.Lock()
        self._phase_lock = threading.Lock()
        self._phase = PHASE_IDLE
        self._mode: str | None = None
        self._worker: threading.Thread | None = None
        self._stop = False
        self._ctx: StepContext | None = None
        self._decision_emitted_for: tuple[int, int] | None = None
        self.result: TrainingResult | None = None

    @property
    def phase(self) -> str:
        with self._phase_lock:
            return self._phase

    def _set_phase(self, phase: str) -> None:
        with self._phase_lock:
            if self._phase != PHASE_DONE:
                self._phase = phase

    # -- engine-side callbacks ------------------------------------------------

    def _emit_decision(self, ctx: StepContext, decision: Decision) -> None:
        token = (ctx.episode, ctx.step)
        if self._decision_emitted_for == token:
            self._decision_emitted_for = None
            return
        self.log.append("decision_made", self._decision_payload(ctx, decision=decision))

    def _decision_payload(self, ctx: StepContext, decision: Decision | None) -> dict:
        return {
            "episode": ctx.episode,
            "step": ctx.step,
            "state": ctx.state.as_dict(),
            "epsilon": ctx.epsilon,
            "draw": decision.draw if decision else None,
            "source": decision.source.value if decision else DecisionSource.PREDICTION.value,
            "plan_action": ctx.plan.action.name,
            "chosen_action": decision.chosen_action.name if decision else None,
        }

    def _feedback_opened(self, request: FeedbackRequest) -> None:
        # The ask happens mid-decide, so the decision_made event goes out now
        # (prediction branch, choice still open) to keep causal order.
        ctx = self._ctx
        if ctx is not None:
            self._decision_emitted_for = (ctx.episode, ctx.step)
            self.log.append("decision_made", self._decision_payload(ctx, decision=None))
        self.log.append("feedback_requested", request.to_payload())
        self._set_phase(PHASE_WAITING)

    def _feedback_closed(self, request: FeedbackRequest, answer: ActionRecord | None) -> None:
        self.log.append(
            "feedback_resolved",
            {
                "request_id": request.request_id,
                "action": answer.name if answer is not None else None,
                "resolution": "answered" if answer is not None else "timeout",
            },
        )
        self._set_phase(PHASE_RUNNING)

    def _finish(self, result: TrainingResult) -> None:
        self.result = result
        self.log.append(
            "run_completed",
            {"episodes": len(result.traces), "report": result.report.to_dict()},
        )
        with self._phase_lock:
            self._phase = PHASE_DONE

    # -- commands -------------------------------------------------------------

    def start(self, mode: str) -> None:
        with self._phase_lock:
            if self._phase != PHASE_IDLE:
                raise RuntimeError(f"run already started (phase {self._phase})")
            self._mode = mode
            self._phase = PHASE_RUNNING
        if mode == "auto":
            self._worker = threading.Thread(target=self._auto_loop, daemon=True)
            self._worker.start()

    def _auto_loop(self) -> None:
        while not self._stop and not self.engine.done:
            with self._cmd:
                if self.engine.done:
                    break
                self.engine.step()

    def step_once(self) -> list[EngineEvent]:
        """Manual mode: execute exactly one step, return its events."""
        if self._mode != "manual":
            raise RuntimeError("manual stepping requires a run started in manual mode")
        with self._cmd:
            if self.engine.done:
                raise RuntimeError("run already completed")
            first = len(self.log)
            self.engine.step()
            return self.log.snapshot()[first:]

    def feedback(self, request_id: str, action_name: str) -> None:
        self.channel.resolve(request_id, action_name)

    def shutdown(self) -> None:
        self._stop = True
        self.channel.cancel()
        worker = self._worker
        if worker is not None and worker.is_alive():
            worker.join(timeout=5)

    # -- snapshots ------------------------------------------------------------

    def state_payload(self) -> dict:
        engine = self.engine
        return {
            "state": engine.state.as_dict(),
            "step": engine.step_in_episode,
            "episode": engine.episode,
            "epsilon": engine.epsilon,
        }

    def qtable_payload(self) -> dict:
        engine = self.engine
        return {
            "states": [s.key for s in engine.space.all_states()],
            "actions": list(engine.vocab.names()),
            "values": engine.q.values.tolist(),
        }

    def status_payload(self) -> dict:
        payload: dict = {"phase": self.phase}
        if self._mode is not None:
            payload["mode"] = self._mode
        pending = self.channel.pending()
        if pending is not None:
            payload["pending_feedback"] = pending.to_payload()
        return payload


class StartBody(BaseModel):
    mode: Literal["auto", "manual"] = "auto"


class FeedbackBody(BaseModel):
    request_id: str
    action: str


def create_app(scenario: Scenario) -> FastAPI:
    host = EngineHost(scenario)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        host.shutdown()

    app = FastAPI(title="habitq gateway", lifespan=lifespan)
    # the occupant console is typically served from another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.host = host

    @app.get("/api/state")
    def get_state() -> dict:
        return host.state_payload()

    @app.get("/api/qtable")
    def get_qtable() -> dict:
        return host.qtable_payload()

    @app.get("/api/run/status")
    def get_status() -> dict:
        return host.status_payload()

    @app.post("/api/run/start")
    def post_start(body: StartBody) -> dict:
        try:
            host.start(body.mode)
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"phase": host.phase, "mode": body.mode}

    @app.post("/api/run/step")
    def post_step() -> dict:
        try:
            events = host.step_once()
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"events": [ev.to_dict() for ev in events]}

    @app.post("/api/feedback")
    def post_feedback(body: FeedbackBody) -> dict:
        try:
            host.feedback(body.request_id, body.action)
        except ExpiredRequestError:
            raise HTTPException(status_code=410, detail=f"request {body.request_id} expired")
        except UnknownRequestError:
            raise HTTPException(status_code=404, detail=f"unknown request {body.request_id}")
        except InvalidFeedbackActionError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"resolution": "answered", "request_id": body.request_id}

    @app.get("/api/events")
    def get_events(from_seq: int = Query(0, alias="from")) -> StreamingResponse:
        return StreamingResponse(
            _sse_stream(host.log, from_seq),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    return app


def _sse_stream(log: EventLog, start: int) -> Iterator[str]:
    seq = max(0, start)
    while True:
        event = log.get(seq, timeout=10.0)
        if event is None:
            yield ": keepalive\n\n"
            continue
        yield event.to_sse()
        seq = event.seq + 1
        if event.kind == "run_completed":
            return


class GatewayServer:
    """Running uvicorn server wrapping the gateway app; use as a context
    manager in tests or call start()/stop() directly."""

    def __init__(self, scenario: Scenario, port: int = 0, host: str = "127.0.0.1"):
        self.app = create_app(scenario)
        self._config = uvicorn.Config(
            self.app, host=host, port=port, log_level="warning", access_log=False
        )
        self._server = uvicorn.Server(self._config)
        self._thread: threading.Thread | None = None
        self._host = host

    def _run_server(self) -> None:
        try:
            self._server.run()
        except SystemExit:
            pass  # startup failure; surfaced to start() via thread death

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self._run_server, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10.0
        while not self._server.started:
            if not self._thread.is_alive():
                raise RuntimeError("gateway failed to start (port already in use?)")
            if time.monotonic() > deadline:
                raise RuntimeError("gateway did not come up within 10s")
            time.sleep(0.01)
        return self

    @property
    def port(self) -> int:
        return self._server.servers[0].sockets[0].getsockname()[1]

    @property
    def base_url(self) -> str:
        return f"http://{self._host}:{self.port}"

    def stop(self) -> None:
        self.app.state.host.shutdown()
        self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)

    def __enter__(self) -> "GatewayServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(scenario: Scenario, port: int, host: str = "127.0.0.1") -> GatewayServer:
    """Bind and return a running gateway for the scenario (engine idle until
    a run is started over HTTP)."""
    return GatewayServer(scenario, port=port, host=host).start()
