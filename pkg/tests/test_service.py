"""WebSocket session service: protocol, ordering, and end-to-end flow."""

import asyncio
import itertools
import json

import numpy as np
import pytest
import websockets
from support import rand_targets

from gazekit.harness.images import encode_png_b64
from gazekit.harness.service import PROTOCOL_VERSION, GazeService, ServeConfig
from gazekit.harness.synth import SynthGazeRig, render_rig_frame
from gazekit.imgcore import ColorImage


def run_session(script, config=None):
    """Serve on an ephemeral port, run the scripted client, tear down."""

    async def _main():
        service = GazeService(config or ServeConfig(port=0))
        port = await service.start()
        try:
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                return await script(ws)
        finally:
            await service.stop()

    return asyncio.run(_main())


async def rpc(ws, **msg):
    msg.setdefault("v", PROTOCOL_VERSION)
    await ws.send(json.dumps(msg))
    return json.loads(await ws.recv())


async def raw_rpc(ws, text):
    await ws.send(text)
    return json.loads(await ws.recv())


def frame_b64(rig, target):
    frame, _ = render_rig_frame(rig, target)
    return encode_png_b64(frame)


def flat_b64(value=128.0):
    return encode_png_b64(ColorImage(np.full((120, 160, 3), value)))


async def calibrate_via_protocol(ws, rig):
    """Server-driven five-point calibration: request target, send frame."""
    for i in range(5):
        req = await rpc(ws, kind="calibrate_point", index=i)
        assert req["kind"] == "calibrate_point"
        target = tuple(req["target"])
        rep = await rpc(
            ws, kind="calibrate_point", index=i, frame=frame_b64(rig, target)
        )
        assert rep["ok"] is True, rep
    done = await rpc(ws, kind="calibrate_done")
    assert done["ok"] is True
    return done


class TestHandshake:
    def test_hello_ack(self):
        async def script(ws):
            return await rpc(ws, kind="hello")

        reply = run_session(script)
        assert reply["kind"] == "hello"
        assert reply["protocol"] == "1"
        assert reply["pipeline"] == "1"
        assert reply["points"] == 5
        assert reply["screen"]["width_px"] == 1280

    def test_hello_negotiates_screen_pipeline_alpha(self):
        async def script(ws):
            return await rpc(
                ws,
                kind="hello",
                screen={"width_px": 1000, "height_px": 600},
                pipeline="2",
                alpha=0.5,
            )

        reply = run_session(script)
        assert reply["screen"] == {
            "width_px": 1000,
            "height_px": 600,
            "mm_per_px": 0.22,
        }
        assert reply["pipeline"] == "2"
        assert reply["alpha"] == 0.5

    def test_message_before_hello_rejected(self):
        async def script(ws):
            return await rpc(ws, kind="frame", index=0, frame=flat_b64())

        reply = run_session(script)
        assert reply["kind"] == "error"
        assert reply["code"] == "bad_message"

    def test_wrong_protocol_version(self):
        async def script(ws):
            return await rpc(ws, v="2", kind="hello")

        reply = run_session(script)
        assert reply["code"] == "bad_version"

    def test_unparseable_json(self):
        async def script(ws):
            return await raw_rpc(ws, "this is not json")

        assert run_session(script)["code"] == "bad_message"

    def test_non_object_message(self):
        async def script(ws):
            return await raw_rpc(ws, "[1, 2, 3]")

        assert run_session(script)["code"] == "bad_message"

    def test_unknown_kind(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="wiggle")

        assert run_session(script)["code"] == "bad_message"

    def test_hello_resets_session(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            rig = SynthGazeRig()
            await calibrate_via_protocol(ws, rig)
            await rpc(ws, kind="hello")  # fresh session
            return await rpc(ws, kind="frame", index=0, frame=flat_b64())

        assert run_session(script)["code"] == "uncalibrated"


class TestCalibrationProtocol:
    def test_target_request_returns_layout_point(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="calibrate_point", index=0)

        reply = run_session(script)
        assert reply["target"] == [640.0, 360.0]

    def test_bad_point_index(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            a = await rpc(ws, kind="calibrate_point", index=7)
            b = await rpc(ws, kind="calibrate_point", index="zero")
            return a, b

        a, b = run_session(script)
        assert a["code"] == "bad_message"
        assert b["code"] == "bad_message"

    def test_measurement_nack_on_blank_frame(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="calibrate_point", index=0, frame=flat_b64())

        reply = run_session(script)
        assert reply["kind"] == "calibrate_point"
        assert reply["ok"] is False
        assert reply["reason"] == "no_feature"

    def test_undecodable_calibration_frame(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="calibrate_point", index=0, frame="!!!")

        reply = run_session(script)
        assert reply["code"] == "bad_frame"
        assert reply["index"] == 0

    def test_full_calibration(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await calibrate_via_protocol(ws, SynthGazeRig())

        done = run_session(script)
        assert done["pairs"] == 5

    def test_calibrate_done_without_points(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="calibrate_done")

        assert run_session(script)["code"] == "calibration_failed"


class TestFrameProtocol:
    def test_frame_before_calibration(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="frame", index=0, frame=flat_b64())

        reply = run_session(script)
        assert reply["code"] == "uncalibrated"
        assert reply["index"] == 0

    def test_index_must_increase(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            rig = SynthGazeRig()
            await calibrate_via_protocol(ws, rig)
            b = frame_b64(rig, (640.0, 360.0))
            first = await rpc(ws, kind="frame", index=5, frame=b)
            repeat = await rpc(ws, kind="frame", index=5, frame=b)
            behind = await rpc(ws, kind="frame", index=4, frame=b)
            ahead = await rpc(ws, kind="frame", index=6, frame=b)
            return first, repeat, behind, ahead

        first, repeat, behind, ahead = run_session(script)
        assert first["kind"] == "estimate" and first["index"] == 5
        assert repeat["code"] == "bad_index"
        assert behind["code"] == "bad_index"
        assert ahead["kind"] == "estimate" and ahead["index"] == 6

    def test_index_bookkeeping_precedes_calibration_check(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            a = await rpc(ws, kind="frame", index=0, frame=flat_b64())
            b = await rpc(ws, kind="frame", index=0, frame=flat_b64())
            return a, b

        a, b = run_session(script)
        assert a["code"] == "uncalibrated"
        assert b["code"] == "bad_index"

    def test_undecodable_frame(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            await calibrate_via_protocol(ws, SynthGazeRig())
            return await rpc(ws, kind="frame", index=0, frame="@@@")

        assert run_session(script)["code"] == "bad_frame"

    def test_featureless_frame(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            await calibrate_via_protocol(ws, SynthGazeRig())
            return await rpc(ws, kind="frame", index=0, frame=flat_b64())

        reply = run_session(script)
        assert reply["code"] == "no_feature"
        assert reply["index"] == 0

    def test_estimate_shape(self):
        async def script(ws):
            await rpc(ws, kind="hello", alpha=1.0)
            rig = SynthGazeRig()
            await calibrate_via_protocol(ws, rig)
            return await rpc(
                ws, kind="frame", index=0, frame=frame_b64(rig, (900.0, 500.0))
            )

        reply = run_session(script)
        assert reply["kind"] == "estimate"
        assert 0.0 <= reply["x"] <= 1280.0
        assert 0.0 <= reply["y"] <= 720.0
        assert 0.0 < reply["confidence"] <= 1.0
        assert reply["latencyMs"] > 0.0


class TestConfigMessages:
    def test_alpha_updates_live(self):
        async def script(ws):
            await rpc(ws, kind="hello", alpha=0.1)
            rig = SynthGazeRig()
            await calibrate_via_protocol(ws, rig)
            conf = await rpc(ws, kind="config", alpha=1.0)
            b = frame_b64(rig, (900.0, 500.0))
            e1 = await rpc(ws, kind="frame", index=0, frame=b)
            e2 = await rpc(ws, kind="frame", index=1, frame=b)
            return conf, e1, e2

        conf, e1, e2 = run_session(script)
        assert conf["ok"] is True and conf["alpha"] == 1.0
        # alpha 1.0 means no smoothing: identical frames, identical estimates
        assert (e1["x"], e1["y"]) == (e2["x"], e2["y"])

    def test_bad_alpha_rejected(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="config", alpha=0.0)

        assert run_session(script)["code"] == "bad_config"

    def test_pipeline_switch_before_calibration(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="config", pipeline="2")

        reply = run_session(script)
        assert reply["ok"] is True
        assert reply["pipeline"] == "2"

    def test_pipeline_switch_after_calibration_rejected(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            await calibrate_via_protocol(ws, SynthGazeRig())
            return await rpc(ws, kind="config", pipeline="2")

        assert run_session(script)["code"] == "already_calibrated"

    def test_bad_pipeline_value(self):
        async def script(ws):
            await rpc(ws, kind="hello")
            return await rpc(ws, kind="config", pipeline="3")

        assert run_session(script)["code"] == "bad_config"


class TestLatencyAccounting:
    def test_reported_latency_spans_compute(self):
        # instrumented clock: each read advances 0.25 s, so any frame reply
        # must report exactly one full tick (decode + pipeline in between)
        counter = itertools.count()
        config = ServeConfig(port=0, clock=lambda: next(counter) * 0.25)

        async def script(ws):
            await rpc(ws, kind="hello", alpha=1.0)
            rig = SynthGazeRig()
            await calibrate_via_protocol(ws, rig)
            return await rpc(
                ws, kind="frame", index=0, frame=frame_b64(rig, (640.0, 360.0))
            )

        reply = run_session(script, config)
        assert reply["kind"] == "estimate"
        assert reply["latencyMs"] == 250.0


class TestEndToEnd:
    def test_scripted_session_matches_rig(self, rng):
        rig = SynthGazeRig()
        targets = rand_targets(rng, rig.screen, 20)

        async def script(ws):
            await rpc(ws, kind="hello", alpha=1.0)
            await calibrate_via_protocol(ws, rig)
            replies = []
            for i, target in enumerate(targets):
                replies.append(
                    await rpc(ws, kind="frame", index=i, frame=frame_b64(rig, target))
                )
            return replies

        replies = run_session(script)
        assert len(replies) == 20
        assert all(r["kind"] == "estimate" for r in replies)
        assert [r["index"] for r in replies] == list(range(20))
        errs = [
            float(np.hypot(r["x"] - t[0], r["y"] - t[1]))
            for r, t in zip(replies, targets)
        ]
        assert float(np.mean(errs)) <= 10.0
