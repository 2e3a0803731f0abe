"""A stand-in OBS WebSocket v5 server for tests and offline demos.

Speaks the same handshake and request frames as OBS itself: Hello with
an optional auth challenge, Identify validation (close 4009 on a bad
auth string, 4010 on an unsupported rpc version), Identified, and
StartRecord/StopRecord with recording state. "Recordings" are small
placeholder files written under ``record_dir`` so a caller can move
them around like real output.

Unknown request types are answered successfully with their request data
echoed back, which the tests use to exercise response correlation.
Knobs: ``shuffle_batch`` holds that many responses and releases them in
random order; ``omit_output_path`` and ``mute_requests`` simulate
misbehaving servers.

Runnable standalone: ``python -m rda.mock_obs --port 4455 --record-dir /tmp/rec``
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import datetime as dt
import json
import logging
import os
import random
from pathlib import Path

from aiohttp import WSMsgType, web

from .obs import (
    CLOSE_AUTH_FAILED,
    CLOSE_UNSUPPORTED_RPC_VERSION,
    OP_EVENT,
    OP_HELLO,
    OP_IDENTIFIED,
    OP_IDENTIFY,
    OP_REQUEST,
    OP_REQUEST_RESPONSE,
    RPC_VERSION,
    SUBPROTOCOL,
    compute_auth,
)

log = logging.getLogger(__name__)

# obs-websocket RequestStatus codes used here.
CODE_OK = 100
CODE_OUTPUT_RUNNING = 500
CODE_OUTPUT_NOT_RUNNING = 501


class MockObsServer:
    """In-process fake OBS; start()/stop() or use as an async context manager."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        password: str | None = None,
        *,
        record_dir: Path | str | None = None,
        shuffle_batch: int = 0,
        shuffle_seed: int = 0,
        omit_output_path: bool = False,
        mute_requests: bool = False,
        rpc_version: int = RPC_VERSION,
    ):
        self.host = host
        self.port = port
        self.password = password
        self.record_dir = Path(record_dir) if record_dir else None
        self.shuffle_batch = shuffle_batch
        self._shuffle_rng = random.Random(shuffle_seed)
        self.omit_output_path = omit_output_path
        self.mute_requests = mute_requests
        self.rpc_version = rpc_version
        self.recording = False
        self.current_output: Path | None = None
        self.start_record_count = 0
        self.stop_record_count = 0
        self.connection_count = 0
        self._record_serial = 0
        self._runner: web.AppRunner | None = None
        self._sockets: set[web.WebSocketResponse] = set()

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    async def start(self) -> None:
        app = web.Application()
        app.router.add_get("/", self._handle)
        app.on_shutdown.append(self._close_sockets)
        self._runner = web.AppRunner(app, shutdown_timeout=1.0)
        await self._runner.setup()
        site = web.TCPSite(self._runner, self.host, self.port)
        await site.start()
        # Port 0 binds an ephemeral port; learn the real one.
        self.port = site._server.sockets[0].getsockname()[1]  # type: ignore[union-attr]

    async def stop(self) -> None:
        if self._runner is not None:
            await self._runner.cleanup()
            self._runner = None

    async def _close_sockets(self, _app: web.Application) -> None:
        for ws in set(self._sockets):
            await ws.close()

    async def __aenter__(self) -> MockObsServer:
        await self.start()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.stop()

    # -- protocol -------------------------------------------------------

    async def _handle(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(protocols=(SUBPROTOCOL,))
        await ws.prepare(request)
        self.connection_count += 1
        self._sockets.add(ws)
        try:
            return await self._converse(ws)
        finally:
            self._sockets.discard(ws)

    async def _converse(self, ws: web.WebSocketResponse) -> web.WebSocketResponse:

        hello: dict = {"obsWebSocketVersion": "5.5.0-mock", "rpcVersion": self.rpc_version}
        challenge = salt = None
        if self.password is not None:
            salt = base64.b64encode(os.urandom(16)).decode("ascii")
            challenge = base64.b64encode(os.urandom(16)).decode("ascii")
            hello["authentication"] = {"challenge": challenge, "salt": salt}
        await ws.send_json({"op": OP_HELLO, "d": hello})

        identify = await self._next_frame(ws)
        if identify is None:
            return ws
        if identify.get("op") != OP_IDENTIFY:
            await ws.close()
            return ws
        d = identify.get("d", {})
        if d.get("rpcVersion") != self.rpc_version:
            await ws.close(code=CLOSE_UNSUPPORTED_RPC_VERSION)
            return ws
        if self.password is not None:
            expected = compute_auth(self.password, salt, challenge)
            if d.get("authentication") != expected:
                await ws.close(code=CLOSE_AUTH_FAILED)
                return ws
        await ws.send_json({"op": OP_IDENTIFIED, "d": {"negotiatedRpcVersion": self.rpc_version}})

        held: list[dict] = []
        async for msg in ws:
            if msg.type != WSMsgType.TEXT:
                continue
            frame = json.loads(msg.data)
            if frame.get("op") != OP_REQUEST:
                continue
            response = self._answer(frame.get("d", {}))
            event = response.pop("_event", None)
            if self.mute_requests:
                continue
            if self.shuffle_batch > 1:
                held.append(response)
                if len(held) >= self.shuffle_batch:
                    self._shuffle_rng.shuffle(held)
                    for r in held:
                        await ws.send_json(r)
                    held.clear()
            else:
                await ws.send_json(response)
                if event is not None:
                    await ws.send_json(event)
        return ws

    async def _next_frame(self, ws: web.WebSocketResponse) -> dict | None:
        msg = await ws.receive()
        if msg.type != WSMsgType.TEXT:
            return None
        return json.loads(msg.data)

    def _answer(self, d: dict) -> dict:
        request_type = d.get("requestType")
        request_id = d.get("requestId")
        status = {"result": True, "code": CODE_OK}
        response_data: dict | None = None
        event: dict | None = None

        if request_type == "StartRecord":
            if self.recording:
                status = {"result": False, "code": CODE_OUTPUT_RUNNING,
                          "comment": "output already active"}
            else:
                self.recording = True
                self.start_record_count += 1
                self.current_output = self._new_recording()
                event = self._record_event(True, None)
        elif request_type == "StopRecord":
            if not self.recording:
                status = {"result": False, "code": CODE_OUTPUT_NOT_RUNNING,
                          "comment": "output not active"}
            else:
                self.recording = False
                self.stop_record_count += 1
                if not self.omit_output_path and self.current_output is not None:
                    response_data = {"outputPath": str(self.current_output)}
                event = self._record_event(False, self.current_output)
                self.current_output = None
        else:
            response_data = {"echo": d.get("requestData", {})}

        payload: dict = {"requestType": request_type, "requestId": request_id,
                         "requestStatus": status}
        if response_data is not None:
            payload["responseData"] = response_data
        response = {"op": OP_REQUEST_RESPONSE, "d": payload}
        if event is not None:
            response["_event"] = event
        return response

    def _record_event(self, active: bool, path: Path | None) -> dict:
        data: dict = {
            "outputActive": active,
            "outputState": "OBS_WEBSOCKET_OUTPUT_STARTED" if active else "OBS_WEBSOCKET_OUTPUT_STOPPED",
        }
        if path is not None:
            data["outputPath"] = str(path)
        return {"op": OP_EVENT,
                "d": {"eventType": "RecordStateChanged", "eventIntent": 64, "eventData": data}}

    def _new_recording(self) -> Path | None:
        if self.record_dir is None:
            return None
        self.record_dir.mkdir(parents=True, exist_ok=True)
        self._record_serial += 1
        stamp = dt.datetime.now().strftime("%Y-%m-%d %H-%M-%S")
        path = self.record_dir / f"{stamp} mock_{self._record_serial}.mkv"
        path.write_bytes(b"MOCK-MKV %d\n" % self._record_serial)
        return path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run a fake OBS WebSocket v5 server.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=4455)
    parser.add_argument("--password", default=None)
    parser.add_argument("--record-dir", default=None,
                        help="where placeholder recordings are written")
    args = parser.parse_args(argv)

    async def run() -> None:
        server = MockObsServer(
            args.host, args.port, args.password, record_dir=args.record_dir
        )
        await server.start()
        print(f"mock OBS listening on {server.url}", flush=True)
        try:
            await asyncio.Event().wait()
        finally:
            await server.stop()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
