"""WebSocket session service.

One connection is one GazeSession. Text frames carry JSON messages with a
mandatory protocol version field; every inbound message gets exactly one
reply, in arrival order, so clients can rely on strict request/reply
alternation per frame. Pipeline compute runs off the event loop so
connections stay concurrent with each other while frames within a
connection are processed strictly sequentially.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field, replace

from websockets.asyncio.server import serve as _ws_serve

from gazekit.cascade import load_cascade
from gazekit.data import data_path
from gazekit.gaze import (
    DecayState,
    GazeSession,
    PipelineConfig,
    ScreenSpec,
    five_point_layout,
    run_pipeline1,
    run_pipeline2,
)
from gazekit.harness.images import decode_png_b64
from gazekit.harness.synth import rig_pipeline_config

PROTOCOL_VERSION = "1"
CALIBRATION_POINTS = 5


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    screen: ScreenSpec = field(default_factory=lambda: ScreenSpec(1280, 720))
    mode: str = "affine"
    alpha: float = 0.1
    face_model_path: str | None = None  # None: packaged rig model
    eye_model_path: str | None = None
    pipeline_config: PipelineConfig | None = None  # None: matched to the models
    clock: callable = time.perf_counter  # injectable for latency tests


def _load_models(config: ServeConfig):
    """Parse both cascade models up front so bad paths fail at startup."""
    face_path = config.face_model_path or data_path("models/rig_face.xml")
    eye_path = config.eye_model_path or data_path("models/rig_eye.xml")
    return load_cascade(face_path), load_cascade(eye_path)


def _resolved_pipeline_config(config: ServeConfig) -> PipelineConfig:
    if config.pipeline_config is not None:
        return config.pipeline_config
    if config.face_model_path is None and config.eye_model_path is None:
        return rig_pipeline_config()
    return PipelineConfig()


class _Connection:
    """Per-connection protocol state machine; dispatch is synchronous."""

    def __init__(self, service: "GazeService"):
        self.service = service
        self.session = None
        self.targets = None
        self.last_frame_index = -1
        self.mode = service.config.mode
        self.alpha = service.config.alpha
        self.screen = service.config.screen

    def _error(self, code: str, message: str, index=None) -> dict:
        out = {"v": PROTOCOL_VERSION, "kind": "error", "code": code, "message": message}
        if index is not None:
            out["index"] = index
        return out

    def _reset_session(self) -> None:
        self.session = GazeSession(
            self.screen,
            mode=self.mode,
            face_model=self.service.face_model,
            eye_model=self.service.eye_model,
            alpha=self.alpha,
            config=self.service.pipeline_config,
        )
        self.targets = five_point_layout(self.screen)
        self.last_frame_index = -1

    def dispatch(self, raw: str) -> dict:
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return self._error("bad_message", f"unparseable JSON: {e}")
        if not isinstance(msg, dict):
            return self._error("bad_message", "message must be a JSON object")
        if msg.get("v") != PROTOCOL_VERSION:
            return self._error(
                "bad_version", f"protocol version {PROTOCOL_VERSION!r} required"
            )
        kind = msg.get("kind")
        if kind == "hello":
            return self._on_hello(msg)
        if self.session is None:
            return self._error("bad_message", "hello required before anything else")
        if kind == "calibrate_point":
            return self._on_calibrate_point(msg)
        if kind == "calibrate_done":
            return self._on_calibrate_done(msg)
        if kind == "frame":
            return self._on_frame(msg)
        if kind == "config":
            return self._on_config(msg)
        return self._error("bad_message", f"unknown kind {kind!r}")

    def _on_hello(self, msg: dict) -> dict:
        scr = msg.get("screen")
        if scr is not None:
            try:
                self.screen = ScreenSpec(
                    int(scr["width_px"]),
                    int(scr["height_px"]),
                    float(scr.get("mm_per_px", self.screen.mm_per_px)),
                )
            except (KeyError, TypeError, ValueError) as e:
                return self._error("bad_message", f"bad screen spec: {e}")
        pipeline = msg.get("pipeline")
        if pipeline is not None:
            if pipeline not in ("1", "2"):
                return self._error("bad_message", f"pipeline must be '1' or '2', got {pipeline!r}")
            self.mode = "affine" if pipeline == "1" else "ratio"
        alpha = msg.get("alpha")
        if alpha is not None:
            try:
                self.alpha = self._checked_alpha(alpha)
            except ValueError as e:
                return self._error("bad_config", str(e))
        self._reset_session()
        return {
            "v": PROTOCOL_VERSION,
            "kind": "hello",
            "protocol": PROTOCOL_VERSION,
            "pipeline": "1" if self.mode == "affine" else "2",
            "alpha": self.alpha,
            "screen": {
                "width_px": self.screen.width_px,
                "height_px": self.screen.height_px,
                "mm_per_px": self.screen.mm_per_px,
            },
            "points": CALIBRATION_POINTS,
        }

    @staticmethod
    def _checked_alpha(value) -> float:
        a = float(value)
        if not (0.0 < a <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {a}")
        return a

    def _checked_point_index(self, msg: dict):
        index = msg.get("index")
        if not isinstance(index, int) or not (0 <= index < CALIBRATION_POINTS):
            return None
        return index

    def _on_calibrate_point(self, msg: dict) -> dict:
        index = self._checked_point_index(msg)
        if index is None:
            return self._error(
                "bad_message", f"calibrate_point index must be 0..{CALIBRATION_POINTS - 1}"
            )
        target = self.targets[index]
        if "frame" not in msg:
            # target request: tell the client where to draw point i
            return {
                "v": PROTOCOL_VERSION,
                "kind": "calibrate_point",
                "index": index,
                "target": [target[0], target[1]],
            }
        try:
            img = decode_png_b64(msg["frame"])
        except ValueError as e:
            return self._error("bad_frame", str(e), index=index)
        ok = self.session.add_calibration_point(target, img)
        reply = {"v": PROTOCOL_VERSION, "kind": "calibrate_point", "index": index, "ok": ok}
        if not ok:
            reply["reason"] = "no_feature"
        return reply

    def _on_calibrate_done(self, msg: dict) -> dict:
        try:
            self.session.finish_calibration()
        except ValueError as e:
            return self._error("calibration_failed", str(e))
        return {
            "v": PROTOCOL_VERSION,
            "kind": "calibrate_done",
            "ok": True,
            "pairs": len(self.session.pairs),
        }

    def _on_frame(self, msg: dict) -> dict:
        index = msg.get("index")
        if not isinstance(index, int) or index <= self.last_frame_index:
            return self._error(
                "bad_index",
                f"frame index must be an integer above {self.last_frame_index}",
            )
        self.last_frame_index = index
        if not self.session.calibrated:
            return self._error("uncalibrated", "finish calibration first", index=index)
        clock = self.service.config.clock
        t0 = clock()
        try:
            img = decode_png_b64(msg.get("frame", ""))
        except ValueError as e:
            return self._error("bad_frame", str(e), index=index)
        run = run_pipeline1 if self.session.mode == "affine" else run_pipeline2
        estimate = run(img, self.session)
        latency_ms = (clock() - t0) * 1000.0
        if estimate is None:
            return self._error("no_feature", "no usable eye features in frame", index=index)
        return {
            "v": PROTOCOL_VERSION,
            "kind": "estimate",
            "index": index,
            "x": estimate[0],
            "y": estimate[1],
            "confidence": self.session.last_confidence,
            "latencyMs": latency_ms,
        }

    def _on_config(self, msg: dict) -> dict:
        if "alpha" in msg:
            try:
                self.alpha = self._checked_alpha(msg["alpha"])
            except ValueError as e:
                return self._error("bad_config", str(e))
            self.session.alpha = self.alpha
            if self.session.decay is not None:
                self.session.decay = replace(self.session.decay, alpha=self.alpha)
        if "pipeline" in msg:
            pipeline = msg["pipeline"]
            if pipeline not in ("1", "2"):
                return self._error("bad_config", f"pipeline must be '1' or '2', got {pipeline!r}")
            mode = "affine" if pipeline == "1" else "ratio"
            if mode != self.mode:
                if self.session.calibrated:
                    return self._error(
                        "already_calibrated", "switching pipelines requires a new hello"
                    )
                self.mode = mode
                self._reset_session()
        return {
            "v": PROTOCOL_VERSION,
            "kind": "config",
            "ok": True,
            "alpha": self.alpha,
            "pipeline": "1" if self.mode == "affine" else "2",
        }


class GazeService:
    """Owns the listener socket and the shared read-only models."""

    def __init__(self, config: ServeConfig | None = None):
        self.config = config or ServeConfig()
        self.face_model, self.eye_model = _load_models(self.config)
        self.pipeline_config = _resolved_pipeline_config(self.config)
        self._server = None

    async def _handle(self, websocket) -> None:
        conn = _Connection(self)
        async for raw in websocket:
            reply = await asyncio.to_thread(conn.dispatch, raw)
            await websocket.send(json.dumps(reply))

    async def start(self) -> int:
        """Bind and listen; returns the bound port (useful with port=0)."""
        self._server = await _ws_serve(self._handle, self.config.host, self.config.port)
        return self.port

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def stop(self) -> None:
        self._server.close()
        await self._server.wait_closed()

    async def run_forever(self) -> None:
        await self.start()
        try:
            await asyncio.get_running_loop().create_future()
        finally:
            await self.stop()


def serve(config: ServeConfig | None = None) -> None:
    """Blocking entry point: bind, print the address, serve until interrupted."""
    service = GazeService(config)

    async def _run():
        port = await service.start()
        print(
            f"gazekit service on ws://{service.config.host}:{port} "
            f"(protocol v{PROTOCOL_VERSION})",
            flush=True,
        )
        try:
            await asyncio.get_running_loop().create_future()
        finally:
            await service.stop()

    asyncio.run(_run())
