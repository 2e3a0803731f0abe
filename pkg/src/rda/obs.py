"""Client for the OBS Studio WebSocket v5 remote-control protocol.

Implements only the slice this tool needs: the Hello/Identify/Identified
handshake (op 0/1/2), Request/RequestResponse (op 6/7) with request-id
correlation, StartRecord/StopRecord, and the RecordStateChanged event as
optional confirmation. Frames are ``{"op": <int>, "d": {...}}`` with the
exact field names OBS expects.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Awaitable, Callable

import aiohttp

from .errors import ObsAuthError, ObsConnectError, ObsError, ObsProtocolError

log = logging.getLogger(__name__)

RPC_VERSION = 1
SUBPROTOCOL = "obswebsocket.json"

# Close codes defined by obs-websocket.
CLOSE_AUTH_FAILED = 4009
CLOSE_UNSUPPORTED_RPC_VERSION = 4010

OP_HELLO = 0
OP_IDENTIFY = 1
OP_IDENTIFIED = 2
OP_EVENT = 5
OP_REQUEST = 6
OP_REQUEST_RESPONSE = 7


def compute_auth(password: str, salt: str, challenge: str) -> str:
    """Authentication string for Identify: two chained SHA-256/base64 rounds.

    ``base64(sha256(base64(sha256(password + salt)) + challenge))``, all
    string concatenation over the UTF-8/ASCII forms.
    """
    secret = base64.b64encode(hashlib.sha256((password + salt).encode("utf-8")).digest())
    answer = hashlib.sha256(secret + challenge.encode("utf-8")).digest()
    return base64.b64encode(answer).decode("ascii")


class ConnState(str, Enum):
    DISCONNECTED = "disconnected"
    AWAITING_HELLO = "awaiting_hello"
    IDENTIFYING = "identifying"
    IDENTIFIED = "identified"


@dataclass
class RecordHandle:
    active: bool
    output_path: str | None = None


class ObsClient:
    """One OBS connection; safe to share from a single event loop.

    Requests may only be issued once identified; every request gets a
    unique id and responses are matched back by that id, so out-of-order
    replies resolve correctly.
    """

    def __init__(
        self,
        url: str = "ws://127.0.0.1:4455",
        password: str | None = None,
        *,
        connect_timeout: float = 5.0,
        request_timeout: float = 5.0,
    ):
        if not url.startswith(("ws://", "wss://")):
            raise ObsConnectError(f"OBS url must be ws:// or wss://, got {url!r}")
        self.url = url
        self.password = password
        self.connect_timeout = connect_timeout
        self.request_timeout = request_timeout
        self.state = ConnState.DISCONNECTED
        self.record = RecordHandle(active=False)
        self.on_disconnect: Callable[[], Awaitable[None]] | None = None
        self.on_record_state: Callable[[dict], None] | None = None
        self._session: aiohttp.ClientSession | None = None
        self._ws: aiohttp.ClientWebSocketResponse | None = None
        self._reader: asyncio.Task | None = None
        self._pending: dict[str, asyncio.Future] = {}
        self._next_request_id = 1
        self._closing = False

    # -- connection lifecycle ------------------------------------------

    async def connect(self) -> None:
        """Dial OBS and complete the Hello/Identify/Identified handshake."""
        if self.state != ConnState.DISCONNECTED:
            raise ObsProtocolError(f"connect() while {self.state.value}")
        self._closing = False
        try:
            await asyncio.wait_for(self._handshake(), self.connect_timeout)
        except asyncio.TimeoutError:
            await self._teardown()
            raise ObsConnectError(
                f"no answer from OBS at {self.url} within {self.connect_timeout}s"
            ) from None
        except ObsError:
            await self._teardown()
            raise
        except (aiohttp.ClientError, OSError) as exc:
            await self._teardown()
            raise ObsConnectError(f"could not reach OBS at {self.url}: {exc}") from exc
        self._reader = asyncio.create_task(self._read_loop())

    async def _handshake(self) -> None:
        self._session = aiohttp.ClientSession()
        self._ws = await self._session.ws_connect(self.url, protocols=(SUBPROTOCOL,))
        self.state = ConnState.AWAITING_HELLO

        hello = await self._expect_frame(OP_HELLO)
        auth = hello.get("authentication")
        identify: dict[str, Any] = {"rpcVersion": RPC_VERSION}
        if auth is not None:
            identify["authentication"] = compute_auth(
                self.password or "", auth.get("salt", ""), auth.get("challenge", "")
            )
        await self._ws.send_json({"op": OP_IDENTIFY, "d": identify})
        self.state = ConnState.IDENTIFYING

        identified = await self._expect_frame(OP_IDENTIFIED)
        negotiated = identified.get("negotiatedRpcVersion")
        if negotiated != RPC_VERSION:
            raise ObsProtocolError(f"OBS negotiated rpc version {negotiated}, need {RPC_VERSION}")
        self.state = ConnState.IDENTIFIED

    async def _expect_frame(self, op: int) -> dict:
        assert self._ws is not None
        while True:
            msg = await self._ws.receive()
            if msg.type == aiohttp.WSMsgType.TEXT:
                frame = json.loads(msg.data)
                if frame.get("op") == op:
                    return frame.get("d", {})
                # Events may arrive interleaved; anything else is noise here.
                if frame.get("op") != OP_EVENT:
                    raise ObsProtocolError(f"expected op {op}, got {frame.get('op')}")
            elif msg.type in (
                aiohttp.WSMsgType.CLOSE,
                aiohttp.WSMsgType.CLOSING,
                aiohttp.WSMsgType.CLOSED,
            ):
                raise self._close_error(msg.data if isinstance(msg.data, int) else None)
            elif msg.type == aiohttp.WSMsgType.ERROR:
                raise ObsConnectError(f"socket error during handshake: {msg.data}")

    def _close_error(self, code: int | None) -> ObsError:
        code = code or (self._ws.close_code if self._ws else None)
        if code == CLOSE_AUTH_FAILED:
            return ObsAuthError("OBS rejected the password")
        if code == CLOSE_UNSUPPORTED_RPC_VERSION:
            return ObsProtocolError(f"OBS does not support rpc version {RPC_VERSION}")
        return ObsConnectError(f"OBS closed the connection (code {code})")

    async def close(self) -> None:
        """Orderly shutdown; never triggers the disconnect callback."""
        self._closing = True
        if self._reader is not None:
            self._reader.cancel()
            try:
                await self._reader
            except (asyncio.CancelledError, Exception):
                pass
            self._reader = None
        await self._teardown()

    async def _teardown(self) -> None:
        self.state = ConnState.DISCONNECTED
        self.record = RecordHandle(active=False)
        if self._ws is not None:
            try:
                await self._ws.close()
            except Exception:
                pass
            self._ws = None
        if self._session is not None:
            try:
                await self._session.close()
            except Exception:
                pass
            self._session = None
        self._fail_pending(ObsConnectError("connection closed"))

    def _fail_pending(self, exc: ObsError) -> None:
        for fut in self._pending.values():
            if not fut.done():
                fut.set_exception(exc)
        self._pending.clear()

    async def _read_loop(self) -> None:
        assert self._ws is not None
        try:
            async for msg in self._ws:
                if msg.type != aiohttp.WSMsgType.TEXT:
                    continue
                try:
                    frame = json.loads(msg.data)
                except json.JSONDecodeError:
                    log.warning("dropping undecodable frame from OBS")
                    continue
                op = frame.get("op")
                d = frame.get("d", {})
                if op == OP_REQUEST_RESPONSE:
                    fut = self._pending.pop(d.get("requestId"), None)
                    if fut is not None and not fut.done():
                        fut.set_result(d)
                    else:
                        log.warning("unmatched response id %r", d.get("requestId"))
                elif op == OP_EVENT:
                    self._handle_event(d)
        except Exception as exc:
            log.warning("OBS reader stopped: %s", exc)
        finally:
            if not self._closing:
                self.state = ConnState.DISCONNECTED
                self._fail_pending(ObsConnectError("OBS connection dropped"))
                if self.on_disconnect is not None:
                    asyncio.get_running_loop().create_task(self.on_disconnect())

    def _handle_event(self, d: dict) -> None:
        if d.get("eventType") == "RecordStateChanged" and self.on_record_state:
            self.on_record_state(d.get("eventData", {}))

    # -- requests ------------------------------------------------------

    async def request(self, request_type: str, data: dict | None = None) -> dict:
        """Send one request and await its matched response's data."""
        if self.state != ConnState.IDENTIFIED:
            raise ObsProtocolError(f"cannot send {request_type} while {self.state.value}")
        assert self._ws is not None
        request_id = str(self._next_request_id)
        self._next_request_id += 1
        fut: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pending[request_id] = fut
        await self._ws.send_json(
            {
                "op": OP_REQUEST,
                "d": {
                    "requestType": request_type,
                    "requestId": request_id,
                    "requestData": data or {},
                },
            }
        )
        try:
            d = await asyncio.wait_for(fut, self.request_timeout)
        except asyncio.TimeoutError:
            self._pending.pop(request_id, None)
            raise ObsConnectError(f"{request_type} timed out after {self.request_timeout}s")
        status = d.get("requestStatus", {})
        if not status.get("result"):
            raise ObsProtocolError(
                f"{request_type} rejected by OBS: code {status.get('code')}"
                + (f" ({status['comment']})" if status.get("comment") else "")
            )
        return d.get("responseData") or {}

    async def start_record(self) -> RecordHandle:
        if self.record.active:
            raise ObsProtocolError("recording already active")
        await self.request("StartRecord")
        self.record = RecordHandle(active=True)
        return self.record

    async def stop_record(self) -> RecordHandle:
        if not self.record.active:
            raise ObsProtocolError("no recording active")
        data = await self.request("StopRecord")
        path = data.get("outputPath")
        if path is None:
            log.warning("StopRecord response lacked outputPath; video location unknown")
        self.record = RecordHandle(active=False, output_path=path)
        return self.record
