"""Live tuning service: the trial engine under an HTTP + WebSocket front.

The same :class:`~copbalance.harness.BalanceLoop` that runs batch trials is
driven here in real time at the 50 ms control period.  State frames stream
at the tick rate; every command is applied under the engine lock (so it
lands between control ticks) and acknowledged with the applied values.

Endpoints:
    GET  /api/state      latest frame as JSON
    GET  /api/commands   applied-command log (wall-clock + sim timestamps)
    POST /api/command    {"type": ..., ...} -> ack
    WS   /ws             frames pushed as they are produced; command
                         messages answered with acks on the same socket

See docs/protocol.md for the full message catalogue.
"""

from __future__ import annotations

import asyncio
import logging
import socket
import threading
import time
from dataclasses import replace

import numpy as np
import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from copbalance import calibration as cal
from copbalance import plant as plant_mod
from copbalance.control import PidGains, PidState, Setpoints
from copbalance.cop import LEFT, RIGHT
from copbalance.harness import TICK_MS, BalanceLoop, TrialConfig
from copbalance.plant import DOUBLE

DEFAULT_PORT = 8390

logger = logging.getLogger(__name__)


class PortInUse(Exception):
    pass


class CommandError(Exception):
    """Malformed or unapplicable command; maps to a structured error ack."""


class LiveEngine:
    """Continuously ticking balance loop with operator-driven targets."""

    COMMAND_LOG_LIMIT = 1000

    def __init__(self, config: TrialConfig | None = None,
                 store_path: str = "calibration.copc",
                 udp_port: int | None = None):
        self.config = config or TrialConfig(gains=PidGains(kp=0.10, kd=0.005),
                                            control_enabled=False)
        self.store_path = store_path
        self.lock = threading.Lock()
        self.frame_seq = 0
        self.latest_frame: dict | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._trial_script: plant_mod.MotionScript | None = None
        self._manual_support = DOUBLE
        self._manual_pose = np.zeros(5)
        self.command_log: list[dict] = []
        # live mode can push foot packets over real loopback datagrams
        self._transport = None
        if udp_port is not None:
            from copbalance.telemetry import UdpTransport

            self._transport = UdpTransport(udp_port)
        self._build_loop()

    # -- engine internals --------------------------------------------------

    def _build_loop(self) -> None:
        lift = RIGHT if self._manual_support in (DOUBLE, LEFT) else LEFT
        self.loop = BalanceLoop(self.config, lift_foot=lift,
                                trial_seed=self.config.seed,
                                transport=self._transport)
        self.loop.params = replace(self.loop.params, tilt_deg=self.config.plant.tilt_deg)
        engine = self

        def pose_at(t_ms: float):
            if engine._trial_script is not None:
                return plant_mod.play_motion(engine._trial_script, t_ms - engine._trial_t0)
            return engine._manual_pose, engine._manual_support

        self.loop.pose_at = pose_at
        self._trial_t0 = 0.0

    def tick_once(self) -> dict:
        with self.lock:
            self.loop.tick()
            if (
                self._trial_script is not None
                and self.loop.state.t_ms - self._trial_t0 >= self._trial_script.duration_ms
            ):
                self._manual_support = self.loop.state.support
                self._trial_script = None
            frame = dict(self.loop.last_frame)
            self.frame_seq += 1
            frame["seq"] = self.frame_seq
            self.latest_frame = frame
            return frame

    def run(self, tick_s: float = TICK_MS / 1000.0) -> None:
        while not self._stop.is_set():
            started = time.monotonic()
            self.tick_once()
            elapsed = time.monotonic() - started
            self._stop.wait(max(0.0, tick_s - elapsed))

    def start(self) -> None:
        if self._thread is None:
            self._thread = threading.Thread(target=self.run, daemon=True)
            self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    # -- commands ----------------------------------------------------------

    def apply(self, cmd: dict) -> dict:
        """Apply one command and return the ack payload (applied values).

        Every applied change lands in ``command_log`` with wall-clock and
        simulation timestamps.
        """
        if not isinstance(cmd, dict) or "type" not in cmd:
            raise CommandError("command must be an object with a 'type' field")
        kind = cmd["type"]
        handler = getattr(self, f"_cmd_{kind}", None)
        if handler is None:
            raise CommandError(f"unknown command type {kind!r}")
        with self.lock:
            ack = {"type": kind, **handler(cmd)}
            entry = {"wall_time": time.time(), "t_ms": self.loop.state.t_ms, **ack}
            self.command_log.append(entry)
            if len(self.command_log) > self.COMMAND_LOG_LIMIT:
                del self.command_log[: -self.COMMAND_LOG_LIMIT]
            logger.info("command %s applied at t=%.0f ms: %s",
                        kind, entry["t_ms"], ack.get("applied"))
            return ack

    @staticmethod
    def _num(cmd: dict, key: str) -> float:
        try:
            value = float(cmd[key])
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"missing or non-numeric field {key!r}") from exc
        if not np.isfinite(value):
            raise CommandError(f"field {key!r} must be finite")
        return value

    def _cmd_set_gains(self, cmd: dict) -> dict:
        try:
            gains = PidGains(kp=self._num(cmd, "kp"), ki=self._num(cmd, "ki"),
                             kd=self._num(cmd, "kd"))
        except ValueError as exc:
            raise CommandError(str(exc)) from exc
        self.config = replace(self.config, gains=gains)
        self.loop.config = replace(self.loop.config, gains=gains)
        return {"applied": {"kp": gains.kp, "ki": gains.ki, "kd": gains.kd}}

    def _cmd_set_setpoint(self, cmd: dict) -> dict:
        try:
            sp = Setpoints(cop_set_x=self._num(cmd, "x"), cop_set_y=self._num(cmd, "y"))
        except ValueError as exc:
            raise CommandError(str(exc)) from exc
        self.loop.setpoint = sp
        return {"applied": {"x": sp.cop_set_x, "y": sp.cop_set_y}}

    def _cmd_set_control(self, cmd: dict) -> dict:
        enabled = bool(cmd.get("enabled"))
        self.config = replace(self.config, control_enabled=enabled)
        self.loop.config = replace(self.loop.config, control_enabled=enabled)
        if enabled:
            self.loop.pid_roll = PidState()
            self.loop.pid_pitch = PidState()
        return {"applied": {"enabled": enabled}}

    def _cmd_set_tilt(self, cmd: dict) -> dict:
        deg = self._num(cmd, "deg")
        if abs(deg) >= 15:
            raise CommandError("tilt limited to |deg| < 15")
        self.loop.params = replace(self.loop.params, tilt_deg=deg)
        self.config = replace(self.config, plant=replace(self.config.plant, tilt_deg=deg))
        return {"applied": {"deg": deg}}

    def _cmd_lift_foot(self, cmd: dict) -> dict:
        foot = cmd.get("foot")
        if foot not in (LEFT, RIGHT):
            raise CommandError("foot must be 'left' or 'right'")
        support = LEFT if foot == RIGHT else RIGHT
        self._manual_support = support
        self.loop.state = plant_mod.set_support(self.loop.state, self.loop.params, support)
        return {"applied": {"lifted": foot, "support": support}}

    def _cmd_lower_foot(self, cmd: dict) -> dict:
        self._manual_support = DOUBLE
        self.loop.state = plant_mod.set_support(self.loop.state, self.loop.params, DOUBLE)
        return {"applied": {"support": DOUBLE}}

    def _cmd_tare(self, cmd: dict) -> dict:
        foot, cell = cmd.get("foot"), cmd.get("cell")
        if foot not in (LEFT, RIGHT) or cell not in (0, 1, 2, 3):
            raise CommandError("tare needs foot in {left,right} and cell in 0..3")
        unit = self.loop.left_unit if foot == LEFT else self.loop.right_unit
        pads = plant_mod.pad_forces(self.loop.state, self.loop.params)
        true_now = pads[cell] if foot == LEFT else pads[4 + cell]
        sim = unit.cells[cell]
        counts_now = sim.offset_counts + sim.true_grams(float(true_now)) / sim.gradient_g_per_count
        old = unit.coeffs[cell]
        unit.coeffs[cell] = cal.CalibrationCoefficients(
            cell_id=old.cell_id, gradient=old.gradient, offset_counts=float(counts_now)
        )
        return {"applied": {"foot": foot, "cell": cell,
                            "offset_counts": unit.coeffs[cell].offset_counts}}

    def _cmd_set_coeff(self, cmd: dict) -> dict:
        foot, cell = cmd.get("foot"), cmd.get("cell")
        if foot not in (LEFT, RIGHT) or cell not in (0, 1, 2, 3):
            raise CommandError("set_coeff needs foot in {left,right} and cell in 0..3")
        gradient = self._num(cmd, "gradient")
        offset = self._num(cmd, "offset")
        try:
            coeffs = cal.CalibrationCoefficients(cell_id=cell, gradient=gradient,
                                                 offset_counts=offset)
        except cal.DegenerateCalibration as exc:
            raise CommandError(str(exc)) from exc
        unit = self.loop.left_unit if foot == LEFT else self.loop.right_unit
        unit.coeffs[cell] = coeffs
        return {"applied": {"foot": foot, "cell": cell, "gradient": gradient,
                            "offset": offset}}

    def _current_store(self) -> cal.CalibrationStore:
        coeffs = tuple(self.loop.left_unit.coeffs) + tuple(self.loop.right_unit.coeffs)
        return cal.CalibrationStore(coefficients=coeffs)

    def _cmd_save_store(self, cmd: dict) -> dict:
        path = cmd.get("path", self.store_path)
        try:
            cal.save_store(self._current_store(), path)
        except cal.StoreError as exc:
            raise CommandError(str(exc)) from exc
        return {"applied": {"path": str(path)}}

    def _cmd_load_store(self, cmd: dict) -> dict:
        path = cmd.get("path", self.store_path)
        try:
            store = cal.load_store(path)
        except cal.StoreError as exc:
            raise CommandError(str(exc)) from exc
        self.loop.left_unit.coeffs = list(store.coefficients[:4])
        self.loop.right_unit.coeffs = list(store.coefficients[4:])
        return {
            "applied": {
                "path": str(path),
                "coefficients": [
                    {"gradient": c.gradient, "offset_counts": c.offset_counts}
                    for c in store.coefficients
                ],
            }
        }

    def _cmd_start_trial(self, cmd: dict) -> dict:
        foot = cmd.get("foot", RIGHT)
        if foot not in (LEFT, RIGHT):
            raise CommandError("foot must be 'left' or 'right'")
        from copbalance.harness import auto_sway_deg

        tilt = self.loop.params.tilt_deg
        sway = auto_sway_deg(self.loop.params, foot, tilt, self.config.sway_fraction)
        self._trial_script = plant_mod.standard_trial_script(lift_foot=foot, sway_deg=sway)
        self._trial_t0 = self.loop.state.t_ms
        self.loop.setpoint = None
        self.loop.capture_buf = []
        return {"applied": {"foot": foot, "tilt_deg": tilt,
                            "duration_ms": self._trial_script.duration_ms}}

    def _cmd_stop_trial(self, cmd: dict) -> dict:
        self._trial_script = None
        self._manual_support = self.loop.state.support
        return {"applied": {"stopped": True}}

    def _cmd_reset(self, cmd: dict) -> dict:
        self._trial_script = None
        self._manual_support = DOUBLE
        self._manual_pose = np.zeros(5)
        self._build_loop()
        return {"applied": {"reset": True}}


def create_app(engine: LiveEngine, frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="copbalance live service")
    app.state.engine = engine

    @app.get("/api/state")
    def get_state():
        frame = engine.latest_frame
        return frame if frame is not None else {"seq": 0}

    @app.get("/api/commands")
    def get_commands():
        return {"commands": engine.command_log}

    @app.post("/api/command")
    def post_command(cmd: dict):
        try:
            ack = engine.apply(cmd)
            return {"ok": True, **ack}
        except CommandError as exc:
            return {"ok": False, "error": {"code": "bad_command", "message": str(exc)}}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        send_lock = asyncio.Lock()  # frame and ack tasks share the socket

        async def send(payload: dict) -> None:
            async with send_lock:
                await ws.send_json(payload)

        if engine.latest_frame is not None:
            await send({"kind": "frame", **engine.latest_frame})
        last_seq = engine.frame_seq

        async def stream_frames():
            nonlocal last_seq
            while True:
                await asyncio.sleep(0.01)
                frame = engine.latest_frame
                if frame is not None and frame["seq"] != last_seq:
                    last_seq = frame["seq"]
                    await send({"kind": "frame", **frame})

        async def handle_commands():
            while True:
                msg = await ws.receive_json()
                cmd_id = msg.get("id")
                try:
                    ack = engine.apply(msg)
                    await send({"kind": "ack", "id": cmd_id, "ok": True, **ack})
                except CommandError as exc:
                    await send({
                        "kind": "ack", "id": cmd_id, "ok": False,
                        "error": {"code": "bad_command", "message": str(exc)},
                    })

        tasks = [asyncio.create_task(stream_frames()),
                 asyncio.create_task(handle_commands())]
        try:
            await asyncio.wait(tasks, return_when=asyncio.FIRST_EXCEPTION)
        except WebSocketDisconnect:
            pass
        finally:
            for task in tasks:
                task.cancel()

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="console")

    return app


def serve_live(port: int = DEFAULT_PORT, host: str = "127.0.0.1",
               config: TrialConfig | None = None,
               store_path: str = "calibration.copc",
               udp_port: int | None = None,
               frontend_dir: str | None = None) -> None:
    """Run the live service until interrupted. Raises PortInUse up front."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"port {port} on {host}: {exc}") from exc
    finally:
        probe.close()
    engine = LiveEngine(config=config, store_path=store_path, udp_port=udp_port)
    engine.start()
    try:
        uvicorn.run(create_app(engine, frontend_dir=frontend_dir), host=host,
                    port=port, log_level="warning")
    finally:
        engine.stop()
