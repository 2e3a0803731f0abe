"""The reflection loop as an explicit state machine.

``transition`` is a pure function: it never touches the filesystem or
OBS. It returns the successor state plus a list of effects (start or
stop the recording, finalize an entry, answer a load-previous query)
that the daemon executes in order. This keeps the loop deterministic
and testable without any I/O.

Phases cycle Idle -> PreTest -> Recording -> PostTest -> Idle; Skip
short-circuits back to Idle from PreTest without leaving any trace, and
a client disconnect in Recording/PostTest salvages the draft as an
abandoned entry instead of losing it.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ProtocolError
from .journal import STATUS_ABANDONED, STATUS_COMPLETE, now_local


class Phase(str, Enum):
    IDLE = "idle"
    PRE_TEST = "pre_test"
    RECORDING = "recording"
    POST_TEST = "post_test"


class EventKind(str, Enum):
    BEGIN_PRE_TEST = "begin_pre_test"
    SUBMIT_PRE_TEST = "submit_pre_test"
    SKIP = "skip"
    LOAD_PREVIOUS = "load_previous"
    END_TEST = "end_test"
    SUBMIT_POST_TEST = "submit_post_test"
    CLIENT_DISCONNECTED = "client_disconnected"


@dataclass
class SessionEvent:
    kind: EventKind
    pre_comment: str = ""
    post_comment: str = ""
    tags: list[str] | None = None
    record: bool = True
    at: dt.datetime = field(default_factory=now_local)


@dataclass
class Draft:
    """The in-flight entry, filled in as the loop progresses."""

    tags: list[str] = field(default_factory=list)
    pre_comment: str = ""
    post_comment: str = ""
    timestamp_pre: dt.datetime | None = None
    timestamp_post: dt.datetime | None = None
    record: bool = True
    # Filled in by the effect executor once StopRecord reports a path.
    video_source: str | None = None


@dataclass
class SessionState:
    phase: Phase = Phase.IDLE
    draft: Draft | None = None
    recording_started_at: dt.datetime | None = None


# Effects, executed by the daemon in list order.


@dataclass
class StartRecord:
    pass


@dataclass
class StopRecord:
    pass


@dataclass
class FinalizeEntry:
    draft: Draft
    status: str  # STATUS_COMPLETE or STATUS_ABANDONED


@dataclass
class ReplyPrevious:
    pass


Effect = StartRecord | StopRecord | FinalizeEntry | ReplyPrevious


def transition(
    state: SessionState, event: SessionEvent
) -> tuple[SessionState, list[Effect]]:
    """Apply one event; raises ProtocolError for illegal (phase, event) pairs."""
    phase, kind = state.phase, event.kind

    if kind == EventKind.BEGIN_PRE_TEST and phase == Phase.IDLE:
        return SessionState(Phase.PRE_TEST, Draft()), []

    if kind == EventKind.LOAD_PREVIOUS and phase == Phase.PRE_TEST:
        return state, [ReplyPrevious()]

    if kind == EventKind.SUBMIT_PRE_TEST and phase == Phase.PRE_TEST:
        draft = replace(
            state.draft,
            pre_comment=event.pre_comment,
            tags=list(event.tags or []),
            record=event.record,
            timestamp_pre=event.at,
        )
        effects: list[Effect] = [StartRecord()] if draft.record else []
        return SessionState(Phase.RECORDING, draft, event.at), effects

    if kind == EventKind.SKIP and phase == Phase.PRE_TEST:
        return SessionState(), []

    if kind == EventKind.END_TEST and phase == Phase.RECORDING:
        draft = state.draft
        effects = [StopRecord()] if draft.record else []
        return SessionState(Phase.POST_TEST, draft), effects

    if kind == EventKind.SUBMIT_POST_TEST and phase == Phase.POST_TEST:
        draft = replace(
            state.draft,
            post_comment=event.post_comment,
            tags=list(event.tags) if event.tags is not None else state.draft.tags,
            timestamp_post=event.at,
        )
        return SessionState(), [FinalizeEntry(draft, STATUS_COMPLETE)]

    if kind == EventKind.CLIENT_DISCONNECTED:
        if phase == Phase.RECORDING:
            draft = state.draft
            effects = [StopRecord()] if draft.record else []
            effects.append(FinalizeEntry(draft, STATUS_ABANDONED))
            return SessionState(), effects
        if phase == Phase.POST_TEST:
            return SessionState(), [FinalizeEntry(state.draft, STATUS_ABANDONED)]
        # Nothing worth salvaging before a reflection was submitted.
        return SessionState(), []

    raise ProtocolError(f"{kind.value} is not legal in phase {phase.value}")
