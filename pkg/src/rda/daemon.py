"""Serialized session engine: one queue, one worker, effects in order.

Every mutation of session state or the journal flows through
``SessionEngine.submit``, which applies the pure transition and then
executes its effects (OBS start/stop, entry persistence) to completion
before the next event is taken. Recording-control failures never lose a
submitted reflection: the draft is salvaged as an abandoned entry and
the loop falls back to Idle.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ObsError, ProtocolError
from .journal import STATUS_ABANDONED, JournalEntry, JournalStore
from .obs import ConnState, ObsClient
from .session import (
    Draft,
    EventKind,
    FinalizeEntry,
    Phase,
    ReplyPrevious,
    SessionEvent,
    SessionState,
    StartRecord,
    StopRecord,
    transition,
)

log = logging.getLogger(__name__)


@dataclass
class SubmitResult:
    """Outcome of one processed event."""

    state: SessionState
    error: str | None = None
    previous: JournalEntry | None = None
    persisted: Path | None = None
    warnings: list[str] = field(default_factory=list)
    tags_changed: bool = False


class SessionEngine:
    """Owns the live session state and the single command queue."""

    def __init__(self, store: JournalStore, obs: ObsClient):
        self.store = store
        self.obs = obs
        self.state = SessionState()
        self.registry_lock = asyncio.Lock()
        self.listeners: list = []  # async callables (state, result) -> None
        self._queue: asyncio.Queue[tuple[SessionEvent, asyncio.Future]] = asyncio.Queue()
        self._worker: asyncio.Task | None = None
        self._stopping = False

    async def start(self) -> None:
        self.obs.on_disconnect = self._on_obs_drop
        self._worker = asyncio.create_task(self._run())

    async def stop(self) -> None:
        """Salvage any in-flight run, then stop the worker."""
        self._stopping = True
        if self.state.phase in (Phase.RECORDING, Phase.POST_TEST):
            await self.submit(SessionEvent(EventKind.CLIENT_DISCONNECTED))
        if self._worker is not None:
            self._worker.cancel()
            try:
                await self._worker
            except asyncio.CancelledError:
                pass
            self._worker = None

    async def submit(self, event: SessionEvent) -> SubmitResult:
        """Enqueue an event and wait until it is fully applied."""
        fut: asyncio.Future = asyncio.get_running_loop().create_future()
        await self._queue.put((event, fut))
        return await fut

    async def _run(self) -> None:
        while True:
            event, fut = await self._queue.get()
            try:
                result = await self._process(event)
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("event processing failed")
                if not fut.done():
                    fut.set_exception(exc)
                continue
            if not fut.done():
                fut.set_result(result)

    async def _process(self, event: SessionEvent) -> SubmitResult:
        try:
            new_state, effects = transition(self.state, event)
        except ProtocolError as exc:
            return SubmitResult(self.state, error=str(exc))

        result = SubmitResult(new_state)
        finalizing = any(isinstance(e, FinalizeEntry) for e in effects)
        draft = next(
            (e.draft for e in effects if isinstance(e, FinalizeEntry)),
            new_state.draft,
        )

        for effect in effects:
            if isinstance(effect, StartRecord):
                try:
                    await self.obs.start_record()
                except ObsError as exc:
                    log.warning("could not start recording: %s", exc)
                    result.warnings.append(f"recording unavailable: {exc}")
                    await self._persist(draft, STATUS_ABANDONED, result)
                    result.state = SessionState()
                    break
            elif isinstance(effect, StopRecord):
                try:
                    handle = await self.obs.stop_record()
                    if handle.output_path is not None:
                        draft.video_source = handle.output_path
                    else:
                        result.warnings.append("recording stopped but no file reported")
                except ObsError as exc:
                    log.warning("could not stop recording: %s", exc)
                    result.warnings.append(f"recording not stopped cleanly: {exc}")
                    if not finalizing:
                        await self._persist(draft, STATUS_ABANDONED, result)
                        result.state = SessionState()
                        break
            elif isinstance(effect, FinalizeEntry):
                await self._persist(effect.draft, effect.status, result)
            elif isinstance(effect, ReplyPrevious):
                result.previous = self.store.load_previous()

        self.state = result.state
        for listener in list(self.listeners):
            try:
                await listener(self.state, result)
            except Exception:
                log.exception("state listener failed")
        return result

    async def _persist(self, draft: Draft, status: str, result: SubmitResult) -> None:
        assert draft is not None and draft.timestamp_pre is not None
        date = draft.timestamp_pre.date()
        run_dir = self.store.allocate_run_dir(date)
        run_no = int(run_dir.name.split("_")[1])
        async with self.registry_lock:
            registry = self.store.load_registry()
            before = set(registry.names())
            tags = [registry.register(t) for t in draft.tags]
            if set(registry.names()) != before:
                self.store.save_registry(registry)
                result.tags_changed = True
        entry = JournalEntry(
            date=date,
            run=run_no,
            timestamp_pre=draft.timestamp_pre,
            timestamp_post=draft.timestamp_post,
            tags=tags,
            pre_comment=draft.pre_comment,
            post_comment=draft.post_comment,
            status=status,
        )
        entry_path, _ = self.store.persist_entry(entry, draft.video_source)
        result.persisted = entry_path
        log.info("persisted %s entry %s", status, entry_path)

    async def _on_obs_drop(self) -> None:
        """One reconnect attempt, then salvage whatever run is in flight."""
        if self._stopping:
            return
        log.warning("OBS connection dropped; attempting to reconnect once")
        try:
            if self.obs.state == ConnState.DISCONNECTED:
                await self.obs.connect()
            log.info("OBS reconnected")
            return
        except ObsError as exc:
            log.warning("OBS reconnect failed: %s", exc)
        if self.state.phase in (Phase.RECORDING, Phase.POST_TEST):
            await self.submit(SessionEvent(EventKind.CLIENT_DISCONNECTED))


async def connect_with_retries(
    obs: ObsClient, attempts: int, delay: float
) -> None:
    """Dial OBS up to `attempts` times before giving up."""
    last: ObsError | None = None
    for attempt in range(1, attempts + 1):
        try:
            await obs.connect()
            return
        except ObsError as exc:
            last = exc
            log.warning("OBS connect attempt %d/%d failed: %s", attempt, attempts, exc)
            if attempt < attempts:
                await asyncio.sleep(delay)
    raise last if last is not None else ObsError("no connect attempts made")
