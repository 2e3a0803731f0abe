from __future__ import annotations

import asyncio
import datetime as dt
import json
import sys
import textwrap
from pathlib import Path

import pytest

from rda.journal import JournalEntry, JournalStore

LOCAL_TZ = dt.datetime.now().astimezone().tzinfo


def run(coro):
    """Drive a coroutine to completion on a fresh event loop."""
    return asyncio.run(coro)


def ts(date: dt.date, hour: int = 10, minute: int = 0, second: int = 0) -> dt.datetime:
    return dt.datetime(
        date.year, date.month, date.day, hour, minute, second, tzinfo=LOCAL_TZ
    )


def make_entry(
    date: dt.date,
    run_no: int,
    tags: list[str] | None = None,
    pre: str = "pre text",
    post: str = "post text",
    status: str = "complete",
    video_file: str | None = None,
    minute: int = 0,
) -> JournalEntry:
    start = ts(date, 10, minute)
    return JournalEntry(
        date=date,
        run=run_no,
        timestamp_pre=start,
        timestamp_post=start + dt.timedelta(minutes=2) if status == "complete" else None,
        tags=list(tags or []),
        pre_comment=pre,
        post_comment=post,
        status=status,
        video_file=video_file,
    )


def seed_store(
    root: Path, layout: dict[str, int], tags: list[str] | None = None
) -> JournalStore:
    """Build a store with `layout` mapping ISO date -> number of runs."""
    store = JournalStore(root)
    registry = store.load_registry()
    for tag in tags or []:
        registry.register(tag)
    store.save_registry(registry)
    for iso_date, n_runs in sorted(layout.items()):
        date = dt.date.fromisoformat(iso_date)
        for run_no in range(1, n_runs + 1):
            store.allocate_run_dir(date)
            store.persist_entry(make_entry(date, run_no, tags=tags, minute=run_no))
    return store


@pytest.fixture
def store(tmp_path: Path) -> JournalStore:
    root = tmp_path / "journal"
    root.mkdir()
    return JournalStore(root)


FAKE_TRANSCODER = textwrap.dedent(
    """\
    import json, sys
    from pathlib import Path

    log_path = Path(__file__).with_name("calls.jsonl")
    args = sys.argv[1:]
    with log_path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(args) + "\\n")

    joined = " ".join(args)
    if "width,height" in joined:
        print("1280,720")
    elif "codec_type" in joined:
        print("audio")
    else:
        # transcode mode: last argument is the output file
        out = Path(args[-1])
        out.parent.mkdir(parents=True, exist_ok=True)
        payload = b"FAKE-MEDIA\\n"
        for a in args:
            p = Path(a)
            if p.suffix in {".mkv", ".mp4"} and p.is_file():
                payload += p.read_bytes()
        out.write_bytes(payload)
    """
)


class FakeTranscoder:
    """A recorded stand-in for the external transcoder/probe commands."""

    def __init__(self, directory: Path):
        self.script = directory / "fake_transcoder.py"
        self.script.write_text(FAKE_TRANSCODER, encoding="utf-8")
        self.log = directory / "calls.jsonl"
        self.cmd = f"{sys.executable} {self.script}"

    def calls(self) -> list[list[str]]:
        if not self.log.exists():
            return []
        return [json.loads(line) for line in self.log.read_text().splitlines()]

    def transcode_calls(self) -> list[list[str]]:
        return [
            c
            for c in self.calls()
            if not any("width,height" in a or "codec_type" in a for a in c)
        ]


@pytest.fixture
def fake_transcoder(tmp_path: Path) -> FakeTranscoder:
    return FakeTranscoder(tmp_path)
