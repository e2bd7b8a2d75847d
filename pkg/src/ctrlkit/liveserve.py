"""Real-time control-loop service.

One owner thread runs an environment under a controller at wall-clock
rate and broadcasts state after every tick; clients connect over a
persistent bidirectional channel carrying newline-delimited JSON, one
complete object per frame. Inbound commands (velocity impulses, goal
moves, reset, pause/resume) are validated at the connection edge and
drained atomically at the start of each tick, so a perturbation is
always fully applied before the controller plans the next action.

Delivery to clients is latest-first: each subscriber owns a small
bounded queue and the loop drops the oldest frame rather than ever
blocking on a slow reader.
"""

from __future__ import annotations

import asyncio
import collections
import dataclasses
import json
import math
import queue
import threading
import time
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ctrlkit.envs import REGISTRY

IMPULSE_MAX = 5.0
COMMAND_QUEUE = 256
SUBSCRIBER_QUEUE = 4
PERIOD_WINDOW = 2048
FK_CASES = 8
FK_SEED = 20260101


class ProtocolError(ValueError):
    """Malformed or inapplicable inbound command."""


def parse_command(text, nv: int, ntask: int) -> dict:
    """Validate one inbound frame against the target environment's shape.

    Returns the normalized command dict; raises ProtocolError with a
    client-presentable message otherwise.
    """
    try:
        cmd = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(cmd, dict) or not isinstance(cmd.get("type"), str):
        raise ProtocolError("command must be an object with a string 'type'")
    kind = cmd["type"]
    if kind == "perturb":
        dims = cmd.get("dims")
        impulse = cmd.get("impulse")
        if (
            not isinstance(dims, list)
            or not isinstance(impulse, list)
            or not dims
            or len(dims) != len(impulse)
        ):
            raise ProtocolError("perturb needs equal-length nonempty dims[] and impulse[]")
        for d in dims:
            if not isinstance(d, int) or isinstance(d, bool) or not 0 <= d < nv:
                raise ProtocolError(f"perturb dim {d!r} outside 0..{nv - 1}")
        for v in impulse:
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ProtocolError("impulse components must be finite numbers")
        return {
            "type": "perturb",
            "dims": [int(d) for d in dims],
            "impulse": [float(v) for v in impulse],
        }
    if kind == "setgoal":
        if ntask < 2:
            raise ProtocolError("this environment has no movable goal")
        xy = cmd.get("xy")
        if (
            not isinstance(xy, list)
            or len(xy) != 2
            or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in xy)
        ):
            raise ProtocolError("setgoal needs xy = [x, y]")
        return {"type": "setgoal", "xy": [float(v) for v in xy]}
    if kind in ("reset", "pause", "resume"):
        return {"type": kind}
    raise ProtocolError(f"unknown command type {kind!r}")


@dataclasses.dataclass(slots=True)
class LoopStatus:
    """Timing health of the control loop at one instant."""

    target_period_s: float
    n_ticks: int
    mean_period_s: float
    max_period_s: float
    overruns: int
    paused: bool
    error: str | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class PolicyController:
    """Deterministic checkpoint policy adapted to the loop interface."""

    def __init__(self, policy):
        self.policy = policy

    def act(self, env):
        return self.policy.act_deterministic(env.getobs())

    def reset_plan(self):
        pass


def policy_controller(policy) -> PolicyController:
    return PolicyController(policy)


class LiveLoop:
    """Single-owner control loop over one environment and controller.

    Everything that touches the environment happens on the loop thread
    (or in tests, the single thread calling tick_once); clients interact
    only through the command queue and subscriber queues.
    """

    def __init__(self, env, controller, impulse_max: float = IMPULSE_MAX):
        self.env = env
        self.controller = controller
        self.impulse_max = float(impulse_max)
        self.commands = queue.Queue(COMMAND_QUEUE)
        self.tick = 0
        self.paused = False
        self.error = None
        self._nq = env.nq
        self._nv = env.nv
        self._state = np.empty(env.statespace.flat_len)
        self._lo = env.statespace.lo
        self._hi = env.statespace.hi
        self._reward = 0.0
        self._eval = self._fresh_eval()
        self._latency = 0.0
        self._skip_step = False
        self._subs = {}
        self._next_sid = 0
        self._sub_lock = threading.Lock()
        self._periods = collections.deque(maxlen=PERIOD_WINDOW)
        self._period_lock = threading.Lock()
        self._overruns = 0
        self._stop = threading.Event()
        self._thread = None

    # -- client side ----------------------------------------------------

    def subscribe(self):
        q = queue.Queue(SUBSCRIBER_QUEUE)
        with self._sub_lock:
            sid = self._next_sid
            self._next_sid += 1
            self._subs[sid] = q
        return sid, q

    def unsubscribe(self, sid):
        with self._sub_lock:
            self._subs.pop(sid, None)

    def submit(self, cmd: dict) -> bool:
        """Queue one validated command; False if the queue is full."""
        try:
            self.commands.put_nowait(cmd)
            return True
        except queue.Full:
            return False

    def status(self) -> LoopStatus:
        with self._period_lock:
            periods = list(self._periods)
        return LoopStatus(
            target_period_s=self.env.dt,
            n_ticks=self.tick,
            mean_period_s=float(np.mean(periods)) if periods else 0.0,
            max_period_s=float(np.max(periods)) if periods else 0.0,
            overruns=self._overruns,
            paused=self.paused,
            error=self.error,
        )

    # -- loop side ------------------------------------------------------

    def _fresh_eval(self) -> float:
        env = self.env
        s = env.getstate()
        o = env.getobs()
        return float(env.geteval(s, env.actionspace.zeros(), o))

    def _apply(self, cmd):
        kind = cmd["type"]
        env = self.env
        if kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
            self.error = None
        elif kind == "reset":
            env.reset()
            reset_plan = getattr(self.controller, "reset_plan", None)
            if reset_plan is not None:
                reset_plan()
            self._reward = 0.0
            self._eval = self._fresh_eval()
            # broadcast the reset state itself before stepping resumes
            self._skip_step = True
        elif kind == "perturb":
            env.getstate_into(self._state)
            cap = self.impulse_max
            for d, v in zip(cmd["dims"], cmd["impulse"]):
                self._state[self._nq + d] += max(-cap, min(cap, v))
            np.clip(self._state, self._lo, self._hi, out=self._state)
            env.setstate(self._state)
        elif kind == "setgoal":
            env.getstate_into(self._state)
            base = self._nq + self._nv + 1
            self._state[base] = cmd["xy"][0]
            self._state[base + 1] = cmd["xy"][1]
            np.clip(self._state, self._lo, self._hi, out=self._state)
            env.setstate(self._state)

    def tick_once(self):
        """One control tick: drain all pending commands, then act, step,
        and broadcast. Stepping is skipped while paused and on the tick
        that applied a reset, so clients see the exact reset state."""
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                break
            self._apply(cmd)

        if self.paused or self._skip_step:
            self._skip_step = False
            self._latency = 0.0
        else:
            t0 = time.perf_counter()
            try:
                action = self.controller.act(self.env)
                result = self.env.step(action)
            except Exception as exc:
                self.paused = True
                self.error = f"{type(exc).__name__}: {exc}"
                self._latency = 0.0
                self._broadcast({"type": "error", "message": self.error})
            else:
                self._latency = time.perf_counter() - t0
                self._reward = result.reward
                self._eval = result.eval

        self.tick += 1
        self._broadcast(self._state_message())

    def _state_message(self) -> dict:
        nq, nv = self._nq, self._nv
        self.env.getstate_into(self._state)
        return {
            "type": "state",
            "tick": self.tick,
            "time_s": float(self._state[nq + nv]),
            "qpos": [float(v) for v in self._state[:nq]],
            "qvel": [float(v) for v in self._state[nq : nq + nv]],
            "eval": float(self._eval),
            "reward": float(self._reward),
            "latency_s": float(self._latency),
            "paused": self.paused,
        }

    def _broadcast(self, message):
        with self._sub_lock:
            queues = list(self._subs.values())
        for q in queues:
            try:
                q.put_nowait(message)
            except queue.Full:
                try:
                    q.get_nowait()
                except queue.Empty:
                    pass
                try:
                    q.put_nowait(message)
                except queue.Full:
                    pass

    def run_loop(self):
        """Tick at the environment's dt on an absolute-deadline schedule.

        A tick that finishes past its deadline counts as an overrun and
        re-anchors the schedule; ticks are never skipped.
        """
        dt = self.env.dt
        deadline = time.perf_counter()
        prev = None
        while not self._stop.is_set():
            start = time.perf_counter()
            if prev is not None:
                with self._period_lock:
                    self._periods.append(start - prev)
            prev = start
            self.tick_once()
            deadline += dt
            now = time.perf_counter()
            if now >= deadline:
                self._overruns += 1
                deadline = now
            else:
                self._stop.wait(deadline - now)

    def start(self):
        if self._thread is not None:
            raise RuntimeError("loop already started")
        self._stop.clear()
        self._thread = threading.Thread(
            target=self.run_loop, name="control-loop", daemon=True
        )
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


# -- forward kinematics export -----------------------------------------


def fk_params(kind: str) -> dict:
    """Geometry a renderer needs to draw the named environment."""
    cfg_cls = REGISTRY[kind][1]
    cfg = cfg_cls()
    if kind == "pendulum":
        return {"length": cfg.length}
    if kind == "cartpole":
        return {"pole_length": cfg.pole_length}
    if kind == "reacher":
        return {"link_lengths": list(cfg.link_lengths)}
    if kind == "pointmass":
        return {}
    raise ValueError(f"unknown env kind {kind!r}")


def fk_points(kind: str, qpos, params: dict) -> list:
    """Body anchor points [[x, y], ...] for one drawn configuration.

    Conventions match the dynamics: pendulum and cartpole measure the
    angle from upright (tip at +y for angle 0), the reacher chains
    relative joint angles from the +x axis, the point mass is its own
    single point.
    """
    if kind == "pointmass":
        return [[float(qpos[0]), float(qpos[1])]]
    if kind == "pendulum":
        ln = params["length"]
        th = qpos[0]
        return [[0.0, 0.0], [ln * math.sin(th), ln * math.cos(th)]]
    if kind == "cartpole":
        ln = params["pole_length"]
        x = qpos[0]
        th = qpos[1]
        return [[float(x), 0.0], [x + ln * math.sin(th), ln * math.cos(th)]]
    if kind == "reacher":
        pts = [[0.0, 0.0]]
        x = y = phi = 0.0
        for ln, q in zip(params["link_lengths"], qpos):
            phi += q
            x += ln * math.cos(phi)
            y += ln * math.sin(phi)
            pts.append([x, y])
        return pts
    raise ValueError(f"unknown env kind {kind!r}")


def fk_vectors(cases_per_env: int = FK_CASES, seed: int = FK_SEED) -> dict:
    """Seeded FK test vectors for every registered environment.

    Served to clients so an independent renderer can verify its copied
    kinematics formulas against the simulation's own.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for kind in sorted(REGISTRY):
        env = REGISTRY[kind][0]()
        params = fk_params(kind)
        cases = []
        for _ in range(cases_per_env):
            qpos = rng.uniform(-math.pi, math.pi, env.nq)
            cases.append(
                {
                    "qpos": [float(v) for v in qpos],
                    "points": fk_points(kind, qpos, params),
                }
            )
        out[kind] = {"params": params, "cases": cases}
    return out


# -- network front end -------------------------------------------------


def _next_message(q):
    # short timeout so a cancelled reader frees its executor thread
    try:
        return q.get(timeout=0.1)
    except queue.Empty:
        return None


class LiveService:
    """HTTP/WebSocket front end owning one control loop."""

    def __init__(self, env, controller, env_name: str | None = None,
                 impulse_max: float = IMPULSE_MAX):
        self.loop = LiveLoop(env, controller, impulse_max=impulse_max)
        self.env_name = env_name or type(env).__name__.lower()
        self._nv = env.nv
        self._ntask = env.ntask
        self.app = self._build_app()

    def _build_app(self):
        loop = self.loop

        @asynccontextmanager
        async def lifespan(app):
            loop.start()
            try:
                yield
            finally:
                loop.stop()

        app = FastAPI(lifespan=lifespan)

        @app.get("/status")
        def status():
            return {"env": self.env_name, **loop.status().to_dict()}

        @app.get("/fk_vectors")
        def fk():
            return fk_vectors()

        @app.websocket("/ws")
        async def ws(websocket: WebSocket):
            await websocket.accept()
            sid, q = loop.subscribe()
            send_lock = asyncio.Lock()
            pump = asyncio.create_task(self._pump_states(websocket, q, send_lock))
            try:
                while True:
                    text = await websocket.receive_text()
                    try:
                        cmd = parse_command(text, self._nv, self._ntask)
                    except ProtocolError as exc:
                        await self._send(websocket, send_lock,
                                         {"type": "error", "message": str(exc)})
                        continue
                    if not loop.submit(cmd):
                        await self._send(websocket, send_lock,
                                         {"type": "error", "message": "command queue full"})
            except WebSocketDisconnect:
                pass
            finally:
                pump.cancel()
                loop.unsubscribe(sid)

        return app

    @staticmethod
    async def _send(websocket, send_lock, message):
        async with send_lock:
            await websocket.send_text(json.dumps(message) + "\n")

    async def _pump_states(self, websocket, q, send_lock):
        aloop = asyncio.get_running_loop()
        try:
            while True:
                message = await aloop.run_in_executor(None, _next_message, q)
                if message is None:
                    continue
                await self._send(websocket, send_lock, message)
        except asyncio.CancelledError:
            raise
        except Exception:
            # socket went away mid-send; the reader side handles cleanup
            return


def run_server(service: LiveService, host: str, port: int):
    import uvicorn

    uvicorn.run(service.app, host=host, port=port, log_level="warning")
