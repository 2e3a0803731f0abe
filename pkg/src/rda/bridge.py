"""Local WebSocket bridge between the session engine and its clients.

Clients (the web UI, engine-side stubs) connect to ``ws://<bind>/ws``
and exchange line-delimited JSON messages; see docs/bridge-protocol.md
for the full schemas. Every session-state change is broadcast to all
connected clients. The same server exposes read-only HTTP endpoints
for corpus browsing: /days, /entry/{date}/{run}, /media/{date}/{run}
and /heatmap.csv.

If the last client disappears while a test is running, the bridge
waits a grace period for a reconnect (engine play-mode restarts drop
connections briefly) and then fires a single disconnect event so the
draft is salvaged instead of lost.
"""

from __future__ import annotations

import asyncio
import datetime as dt
import json
import logging

from aiohttp import WSMsgType, web

from .compile import TagMatrix, matrix_csv
from .daemon import SessionEngine, SubmitResult
from .errors import RdaError, ValidationError
from .journal import ENTRY_FILENAME, JournalStore
from .session import EventKind, Phase, SessionEvent, SessionState

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# Client message type -> session event kind, for the plain event messages.
_EVENT_TYPES = {
    "begin_pre_test": EventKind.BEGIN_PRE_TEST,
    "skip": EventKind.SKIP,
    "end_test": EventKind.END_TEST,
}


def _msg(msg_type: str, payload: dict | None = None, seq: int | None = None) -> str:
    return json.dumps({"type": msg_type, "payload": payload or {}, "seq": seq})


def state_payload(state: SessionState) -> dict:
    draft = None
    if state.draft is not None:
        draft = {
            "pre_comment": state.draft.pre_comment,
            "post_comment": state.draft.post_comment,
            "tags": list(state.draft.tags),
            "record": state.draft.record,
        }
    return {
        "phase": state.phase.value,
        "draft": draft,
        "recording_started_at": (
            state.recording_started_at.isoformat()
            if state.recording_started_at is not None
            else None
        ),
    }


class BridgeServer:
    def __init__(
        self,
        engine: SessionEngine,
        store: JournalStore,
        host: str = "127.0.0.1",
        port: int = 7341,
        *,
        disconnect_grace: float = 10.0,
    ):
        self.engine = engine
        self.store = store
        self.host = host
        self.port = port
        self.disconnect_grace = disconnect_grace
        self._clients: set[web.WebSocketResponse] = set()
        self._runner: web.AppRunner | None = None
        self._grace_task: asyncio.Task | None = None

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}/ws"

    async def start(self) -> None:
        app = web.Application()
        app.router.add_get("/ws", self._ws_handler)
        app.router.add_get("/days", self._days_handler)
        app.router.add_get("/entry/{date}/{run}", self._entry_handler)
        app.router.add_get("/media/{date}/{run}", self._media_handler)
        app.router.add_get("/heatmap.csv", self._heatmap_handler)
        app.on_response_prepare.append(self._allow_cors)
        app.on_shutdown.append(self._close_sockets)
        self.engine.listeners.append(self._on_state_change)
        self._runner = web.AppRunner(app, shutdown_timeout=1.0)
        await self._runner.setup()
        try:
            site = web.TCPSite(self._runner, self.host, self.port)
            await site.start()
        except OSError as exc:
            raise RdaError(f"could not bind bridge to {self.host}:{self.port}: {exc}") from exc
        self.port = site._server.sockets[0].getsockname()[1]  # type: ignore[union-attr]
        log.info("bridge listening on %s", self.url)

    async def stop(self) -> None:
        if self._grace_task is not None:
            self._grace_task.cancel()
            self._grace_task = None
        if self._on_state_change in self.engine.listeners:
            self.engine.listeners.remove(self._on_state_change)
        if self._runner is not None:
            await self._runner.cleanup()
            self._runner = None

    async def _allow_cors(self, request: web.Request, response: web.StreamResponse) -> None:
        # The browse UI may be served from another local origin.
        response.headers["Access-Control-Allow-Origin"] = "*"

    async def _close_sockets(self, _app: web.Application) -> None:
        for ws in set(self._clients):
            await ws.close()

    # -- websocket side --------------------------------------------------

    async def _ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        self._clients.add(ws)
        if self._grace_task is not None:
            self._grace_task.cancel()
            self._grace_task = None
        log.info("bridge client connected (%d total)", len(self._clients))
        try:
            await ws.send_str(_msg("hello", {"protocol_version": PROTOCOL_VERSION}))
            await ws.send_str(_msg("tag_list", self._tag_list_payload()))
            await ws.send_str(_msg("state", state_payload(self.engine.state)))
            async for msg in ws:
                if msg.type != WSMsgType.TEXT:
                    continue
                for line in msg.data.splitlines():
                    if line.strip():
                        await self._handle_line(ws, line)
        finally:
            self._clients.discard(ws)
            log.info("bridge client left (%d remain)", len(self._clients))
            self._maybe_start_grace()
        return ws

    def _maybe_start_grace(self) -> None:
        if self._clients:
            return
        if self.engine.state.phase not in (Phase.RECORDING, Phase.POST_TEST):
            return
        if self._grace_task is not None:
            return
        log.warning(
            "last client left mid-test; salvaging in %.1fs unless one returns",
            self.disconnect_grace,
        )
        self._grace_task = asyncio.create_task(self._grace_expired())

    async def _grace_expired(self) -> None:
        try:
            await asyncio.sleep(self.disconnect_grace)
        except asyncio.CancelledError:
            return
        self._grace_task = None
        if not self._clients:
            await self.engine.submit(SessionEvent(EventKind.CLIENT_DISCONNECTED))

    async def _handle_line(self, ws: web.WebSocketResponse, line: str) -> None:
        try:
            data = json.loads(line)
            if not isinstance(data, dict):
                raise ValueError("message must be a JSON object")
        except ValueError as exc:
            await ws.send_str(_msg("error", {"message": f"malformed message: {exc}"}))
            return
        seq = data.get("seq")
        msg_type = data.get("type")
        payload = data.get("payload") or {}
        try:
            await self._dispatch(ws, msg_type, payload, seq)
        except Exception:
            log.exception("dispatch failed for %r", msg_type)
            await ws.send_str(_msg("error", {"message": "internal error"}, seq))

    async def _dispatch(
        self, ws: web.WebSocketResponse, msg_type: str, payload: dict, seq: int | None
    ) -> None:
        if msg_type in _EVENT_TYPES:
            event = SessionEvent(_EVENT_TYPES[msg_type])
        elif msg_type == "submit_pre_test":
            event = SessionEvent(
                EventKind.SUBMIT_PRE_TEST,
                pre_comment=str(payload.get("pre_comment", "")),
                tags=list(payload.get("tags") or []),
                record=bool(payload.get("record", True)),
            )
            if payload.get("scene"):
                # Scene switching is out of scope; the field is accepted so
                # clients can round-trip their recording options.
                log.info("ignoring requested OBS scene %r", payload["scene"])
        elif msg_type == "submit_post_test":
            tags = payload.get("tags")
            event = SessionEvent(
                EventKind.SUBMIT_POST_TEST,
                post_comment=str(payload.get("post_comment", "")),
                tags=list(tags) if tags is not None else None,
            )
        elif msg_type == "load_previous":
            event = SessionEvent(EventKind.LOAD_PREVIOUS)
        elif msg_type == "create_tag":
            await self._create_tag(ws, payload, seq)
            return
        else:
            await ws.send_str(
                _msg("error", {"message": f"unknown message type {msg_type!r}"}, seq)
            )
            return

        result = await self.engine.submit(event)
        if result.error is not None:
            await ws.send_str(_msg("error", {"message": result.error}, seq))
            return
        if event.kind == EventKind.LOAD_PREVIOUS:
            previous = None
            if result.previous is not None:
                previous = {
                    "pre_comment": result.previous.pre_comment,
                    "tags": list(result.previous.tags),
                }
            await ws.send_str(_msg("previous_entry", {"entry": previous}, seq))

    async def _create_tag(
        self, ws: web.WebSocketResponse, payload: dict, seq: int | None
    ) -> None:
        name = payload.get("name", "")
        try:
            async with self.engine.registry_lock:
                self.store.register_tag(str(name))
        except ValidationError as exc:
            await ws.send_str(_msg("error", {"message": str(exc)}, seq))
            return
        await self._broadcast(_msg("tag_list", self._tag_list_payload()))

    def _tag_list_payload(self) -> dict:
        registry = self.store.load_registry()
        return {
            "tags": [
                {"name": t.name, "created_at": t.created_at.isoformat()} for t in registry
            ]
        }

    async def _on_state_change(self, state: SessionState, result: SubmitResult) -> None:
        await self._broadcast(_msg("state", state_payload(state)))
        if result.tags_changed:
            await self._broadcast(_msg("tag_list", self._tag_list_payload()))

    async def _broadcast(self, text: str) -> None:
        for ws in list(self._clients):
            try:
                await ws.send_str(text)
            except Exception:
                log.warning("dropping unwritable client")
                self._clients.discard(ws)

    # -- read-only corpus endpoints ---------------------------------------

    async def _days_handler(self, request: web.Request) -> web.Response:
        days = [
            {"date": date.isoformat(), "runs": runs} for date, runs in self.store.days()
        ]
        return web.json_response(days)

    def _run_dir(self, request: web.Request):
        try:
            date = dt.date.fromisoformat(request.match_info["date"])
            run_no = int(request.match_info["run"])
        except ValueError:
            raise web.HTTPBadRequest(text="expected /{ISO-date}/{run number}")
        return self.store.run_dir(date, run_no)

    async def _entry_handler(self, request: web.Request) -> web.Response:
        entry_path = self._run_dir(request) / ENTRY_FILENAME
        if not entry_path.is_file():
            raise web.HTTPNotFound(text="no such entry")
        return web.Response(
            text=entry_path.read_text(encoding="utf-8"), content_type="application/json"
        )

    async def _media_handler(self, request: web.Request) -> web.StreamResponse:
        run_dir = self._run_dir(request)
        if not run_dir.is_dir():
            raise web.HTTPNotFound(text="no such run")
        videos = sorted(
            p
            for p in run_dir.iterdir()
            if p.is_file() and p.suffix.lower() in {".mkv", ".mp4"}
        )
        if not videos:
            raise web.HTTPNotFound(text="no video for this run")
        return web.FileResponse(videos[0])

    async def _heatmap_handler(self, request: web.Request) -> web.Response:
        entries = self.store.scan() if self.store.root.is_dir() else []
        matrix = TagMatrix.from_entries(entries, self.store.load_registry().names())
        return web.Response(text=matrix_csv(matrix), content_type="text/csv")
