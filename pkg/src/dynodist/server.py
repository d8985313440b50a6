"""Interactive training server: the trainer blocks on a single-slot query
mailbox while an embedded HTTP endpoint lets a client (the browser UI or a
script) read the pending slate and answer it.

Endpoints:
  GET  /status  -> {env_steps, episode, current_goal, queries_used, curve}
  GET  /query   -> 204 when idle; 200 {query_id, candidates:[{index, grid_render}],
                   previous_goal: {grid_render}|null} when a slate is pending
  POST /respond {query_id, choice_index} -> 200; 409 stale id; 400 bad index
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .envs import FiniteEnv, GridMaze, render_grid
from .goals import PreferenceQuery, PreferenceResponse, ProviderTimeout
from .trainer import TrainerConfig, train


class QueryMailbox:
    """At most one outstanding query; the trainer blocks on the answer."""

    def __init__(self, timeout_seconds: float):
        self.timeout_seconds = timeout_seconds
        self._cond = threading.Condition()
        self._query: PreferenceQuery | None = None
        self._response: PreferenceResponse | None = None

    def ask(self, query: PreferenceQuery) -> PreferenceResponse:
        with self._cond:
            self._query = query
            self._response = None
            self._cond.notify_all()
            deadline_hit = not self._cond.wait_for(
                lambda: self._response is not None, timeout=self.timeout_seconds)
            self._query = None
            if deadline_hit:
                raise ProviderTimeout(f"no answer to query {query.query_id}")
            return self._response

    def pending(self) -> PreferenceQuery | None:
        with self._cond:
            return self._query

    def respond(self, query_id: int, choice_index: int) -> int:
        """Returns an HTTP status: 200 accepted, 409 stale, 400 bad index."""
        with self._cond:
            if self._query is None or self._query.query_id != query_id:
                return 409
            n = len(self._query.candidates)
            has_prev = self._query.previous_goal is not None
            if not (0 <= choice_index <= n) or (choice_index == n and not has_prev):
                return 400
            self._response = PreferenceResponse(query_id, choice_index)
            self._query = None  # exactly-once: later answers are stale
            self._cond.notify_all()
            return 200


class TrainerStatus:
    def __init__(self, curve_window: int = 200):
        self._lock = threading.Lock()
        self._state = {"env_steps": 0, "episode": 0, "current_goal": None,
                       "queries_used": 0, "curve": []}
        self._window = curve_window

    def on_episode(self, record: dict) -> None:
        with self._lock:
            self._state["env_steps"] = record["env_steps"]
            self._state["episode"] = record["episode"]
            self._state["current_goal"] = record["goal"]
            self._state["queries_used"] = record["queries_used"]
            if record["final_distance_to_goal"] is not None:
                curve = self._state["curve"]
                curve.append(record["final_distance_to_goal"])
                if len(curve) > self._window:
                    del curve[: len(curve) - self._window]

    def snapshot(self) -> dict:
        with self._lock:
            out = dict(self._state)
            out["curve"] = list(out["curve"])
            return out


def _slate_payload(env: FiniteEnv, query: PreferenceQuery) -> dict:
    def grid(state: int):
        if isinstance(env, GridMaze):
            return render_grid(env, marks={state: "candidate"})
        return [[{"kind": "candidate" if s == state else "free", "value": None}
                 for s in range(env.n_states)]]
    return {
        "query_id": query.query_id,
        "candidates": [{"index": i, "grid_render": grid(s)}
                       for i, s in enumerate(query.candidates)],
        "previous_goal": ({"grid_render": grid(query.previous_goal)}
                          if query.previous_goal is not None else None),
    }


def _make_handler(env: FiniteEnv, mailbox: QueryMailbox, status: TrainerStatus):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output clean
            pass

        def _send(self, code: int, payload=None):
            body = b"" if payload is None else json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            if body:
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            if body:
                self.wfile.write(body)

        def do_OPTIONS(self):
            self._send(204)

        def do_GET(self):
            if self.path == "/status":
                self._send(200, status.snapshot())
            elif self.path == "/query":
                query = mailbox.pending()
                if query is None:
                    self._send(204)
                else:
                    self._send(200, _slate_payload(env, query))
            else:
                self._send(404, {"error": "unknown path"})

        def do_POST(self):
            if self.path != "/respond":
                self._send(404, {"error": "unknown path"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                query_id = int(payload["query_id"])
                choice_index = int(payload["choice_index"])
            except (ValueError, KeyError, json.JSONDecodeError):
                self._send(400, {"error": "malformed body"})
                return
            code = mailbox.respond(query_id, choice_index)
            self._send(code, {"accepted": code == 200})

    return Handler


class ServeHandle:
    def __init__(self, server, thread, stop_event, result_box):
        self.server = server
        self.thread = thread
        self.stop_event = stop_event
        self._result_box = result_box

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def wait(self, timeout=None):
        self.thread.join(timeout)
        return not self.thread.is_alive()

    def shutdown(self):
        self.stop_event.set()
        self.thread.join()
        self.server.shutdown()
        self.server.server_close()

    @property
    def result(self):
        return self._result_box.get("result")

    @property
    def error(self):
        return self._result_box.get("error")


def serve(env: FiniteEnv, cfg: TrainerConfig, port: int = 0, out_dir=None,
          block: bool = True):
    """Start training with a mailbox provider plus the HTTP endpoint.

    With block=True runs until training completes, then shuts the server
    down (checkpoints are flushed by the trainer); with block=False returns
    a ServeHandle for tests/embedding. Raises OSError if the port is taken.
    """
    if cfg.method != "DDLfP":
        raise ValueError("serve requires method=DDLfP")
    mailbox = QueryMailbox(cfg.query_timeout_seconds)
    status = TrainerStatus()
    server = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(env, mailbox, status))
    server_thread = threading.Thread(target=server.serve_forever, daemon=True)
    server_thread.start()
    stop_event = threading.Event()
    result_box: dict = {}

    def run():
        try:
            result_box["result"] = train(env, cfg, provider=mailbox, out_dir=out_dir,
                                         on_episode=status.on_episode,
                                         stop_event=stop_event)
        except BaseException as exc:  # surfaced through the handle
            result_box["error"] = exc

    trainer_thread = threading.Thread(target=run, daemon=True)
    trainer_thread.start()
    handle = ServeHandle(server, trainer_thread, stop_event, result_box)
    if not block:
        return handle
    try:
        trainer_thread.join()
    except KeyboardInterrupt:
        stop_event.set()
        trainer_thread.join()
    finally:
        server.shutdown()
        server.server_close()
    if handle.error is not None:
        raise handle.error
    return handle.result
