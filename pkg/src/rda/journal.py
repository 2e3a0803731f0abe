"""Journal corpus model: entries, tags, and the date/run directory layout.

On disk a store looks like::

    <root>/
      tags.json                  # [{"name": ..., "created_at": ...}, ...]
      2025-04-30/
        run_1/
          entry.json
          2025-04-30 14-02-11.mkv
        run_2/
          entry.json

Date directories are ISO dates so lexicographic order is chronological;
run directories are ``run_<N>`` with N counted per day, starting at 1.
Entries are never rewritten or deleted by any operation here.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .errors import PersistenceError, ValidationError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STATUS_COMPLETE = "complete"
STATUS_ABANDONED = "abandoned"

ENTRY_FILENAME = "entry.json"
TAGS_FILENAME = "tags.json"

_RUN_DIR_RE = re.compile(r"^run_([0-9]+)$")

# Serialization order for entry.json; unknown keys are appended after these.
_ENTRY_FIELDS = (
    "schema_version",
    "date",
    "run",
    "timestamp_pre",
    "timestamp_post",
    "tags",
    "pre_comment",
    "post_comment",
    "video_file",
    "status",
)


def now_local() -> dt.datetime:
    """Current wall-clock time with the local UTC offset attached."""
    return dt.datetime.now().astimezone().replace(microsecond=0)


def _dump_json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise PersistenceError(f"could not write {path}: {exc}") from exc


@dataclass
class JournalEntry:
    """One reflection pair with its metadata and optional video reference."""

    date: dt.date
    run: int
    timestamp_pre: dt.datetime
    tags: list[str] = field(default_factory=list)
    pre_comment: str = ""
    post_comment: str = ""
    timestamp_post: dt.datetime | None = None
    video_file: str | None = None
    status: str = STATUS_COMPLETE
    schema_version: int = SCHEMA_VERSION
    # Unknown entry.json keys, preserved verbatim across rewrites.
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self, registry: TagRegistry | None = None) -> None:
        """Raise ValidationError if any entry invariant is broken.

        Tag membership is only checked when a registry is supplied.
        """
        problems: list[str] = []
        if self.run < 1:
            problems.append(f"run must be >= 1, got {self.run}")
        if self.status not in (STATUS_COMPLETE, STATUS_ABANDONED):
            problems.append(f"unknown status {self.status!r}")
        if self.status == STATUS_COMPLETE and self.timestamp_post is None:
            problems.append("complete entry lacks timestamp_post")
        if self.timestamp_post is not None and _comparable(
            self.timestamp_post
        ) < _comparable(self.timestamp_pre):
            problems.append("timestamp_post precedes timestamp_pre")
        if self.timestamp_pre.date() != self.date:
            problems.append(
                f"timestamp_pre date {self.timestamp_pre.date()} does not match "
                f"entry date {self.date}"
            )
        if registry is not None:
            known = {t.casefold() for t in registry.names()}
            for tag in self.tags:
                if tag.casefold() not in known:
                    problems.append(f"tag {tag!r} is not in the registry")
        if problems:
            raise ValidationError("; ".join(problems))

    def to_json_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "schema_version": self.schema_version,
            "date": self.date.isoformat(),
            "run": self.run,
            "timestamp_pre": self.timestamp_pre.isoformat(),
            "tags": list(self.tags),
            "pre_comment": self.pre_comment,
            "post_comment": self.post_comment,
            "status": self.status,
        }
        if self.timestamp_post is not None:
            data["timestamp_post"] = self.timestamp_post.isoformat()
        if self.video_file is not None:
            data["video_file"] = self.video_file
        ordered = {k: data[k] for k in _ENTRY_FIELDS if k in data}
        ordered.update(self.extra)
        return ordered

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> JournalEntry:
        try:
            entry = cls(
                schema_version=int(data["schema_version"]),
                date=dt.date.fromisoformat(data["date"]),
                run=int(data["run"]),
                timestamp_pre=dt.datetime.fromisoformat(data["timestamp_pre"]),
                timestamp_post=(
                    dt.datetime.fromisoformat(data["timestamp_post"])
                    if data.get("timestamp_post") is not None
                    else None
                ),
                tags=list(data.get("tags", [])),
                pre_comment=str(data.get("pre_comment", "")),
                post_comment=str(data.get("post_comment", "")),
                video_file=data.get("video_file"),
                status=str(data.get("status", STATUS_COMPLETE)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed entry: {exc}") from exc
        entry.extra = {k: v for k, v in data.items() if k not in _ENTRY_FIELDS}
        return entry


def _comparable(ts: dt.datetime) -> dt.datetime:
    """Make naive and aware timestamps comparable (naive assumed local)."""
    if ts.tzinfo is None:
        return ts.astimezone()
    return ts


@dataclass
class Tag:
    name: str
    created_at: dt.datetime


class TagRegistry:
    """Designer-created tags, unique case-insensitively, in creation order."""

    def __init__(self, tags: list[Tag] | None = None):
        self._tags: list[Tag] = list(tags or [])

    def __len__(self) -> int:
        return len(self._tags)

    def __iter__(self) -> Iterator[Tag]:
        return iter(self._tags)

    def names(self) -> list[str]:
        return [t.name for t in self._tags]

    def canonical(self, name: str) -> str | None:
        """Return the stored spelling for a case-insensitive match, if any."""
        folded = name.strip().casefold()
        for tag in self._tags:
            if tag.name.casefold() == folded:
                return tag.name
        return None

    def register(self, name: str, at: dt.datetime | None = None) -> str:
        """Add a tag unless an equivalent one exists; return the canonical name."""
        cleaned = name.strip()
        if not cleaned:
            raise ValidationError("tag name must not be empty")
        existing = self.canonical(cleaned)
        if existing is not None:
            return existing
        self._tags.append(Tag(cleaned, at or now_local()))
        return cleaned

    def to_json(self) -> list[dict[str, str]]:
        return [
            {"name": t.name, "created_at": t.created_at.isoformat()}
            for t in self._tags
        ]

    @classmethod
    def from_json(cls, data: list[dict[str, str]]) -> TagRegistry:
        tags = []
        for item in data:
            try:
                tags.append(
                    Tag(str(item["name"]), dt.datetime.fromisoformat(item["created_at"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"malformed tags.json item: {exc}") from exc
        return cls(tags)


class JournalStore:
    """Filesystem-backed corpus of journal entries under one root directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    # -- tag registry -------------------------------------------------

    @property
    def tags_path(self) -> Path:
        return self.root / TAGS_FILENAME

    def load_registry(self) -> TagRegistry:
        if not self.tags_path.exists():
            return TagRegistry()
        try:
            data = json.loads(self.tags_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"unreadable {self.tags_path}: {exc}") from exc
        return TagRegistry.from_json(data)

    def save_registry(self, registry: TagRegistry) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.tags_path, _dump_json(registry.to_json()))

    def register_tag(self, name: str) -> str:
        """Register a tag and persist the registry; returns the canonical name."""
        registry = self.load_registry()
        canonical = registry.register(name)
        self.save_registry(registry)
        return canonical

    # -- layout -------------------------------------------------------

    def day_dir(self, date: dt.date) -> Path:
        return self.root / date.isoformat()

    def run_dir(self, date: dt.date, run: int) -> Path:
        return self.day_dir(date) / f"run_{run}"

    def _runs_on_disk(self, date: dt.date) -> list[int]:
        day = self.day_dir(date)
        if not day.is_dir():
            return []
        runs = []
        for child in day.iterdir():
            if not child.is_dir():
                continue
            m = _RUN_DIR_RE.match(child.name)
            if m:
                runs.append(int(m.group(1)))
            else:
                log.warning("ignoring malformed run directory %s", child)
        return sorted(runs)

    def allocate_run_dir(self, date: dt.date) -> Path:
        """Create and return the next run directory for a day.

        Numbering is max+1 over what exists, never reusing gaps, so run
        order always matches allocation order.
        """
        runs = self._runs_on_disk(date)
        next_run = (runs[-1] + 1) if runs else 1
        path = self.run_dir(date, next_run)
        try:
            path.mkdir(parents=True, exist_ok=False)
        except OSError as exc:
            raise PersistenceError(f"could not create {path}: {exc}") from exc
        return path

    def days(self) -> list[tuple[dt.date, list[int]]]:
        """All (date, sorted run numbers) pairs present on disk."""
        if not self.root.is_dir():
            return []
        out = []
        for child in sorted(self.root.iterdir()):
            if not child.is_dir():
                continue
            try:
                date = dt.date.fromisoformat(child.name)
            except ValueError:
                continue
            out.append((date, self._runs_on_disk(date)))
        return out

    # -- persistence ----------------------------------------------------

    def persist_entry(
        self, entry: JournalEntry, video_source: Path | str | None = None
    ) -> tuple[Path, Path | None]:
        """Write ``entry.json`` (and move the video in) for an allocated run.

        The video is claimed first so its filename lands in the entry; a
        missing video source downgrades to a warning because losing the
        recording must never lose the reflection. Existing entries are
        never overwritten.
        """
        entry.validate()
        run_dir = self.run_dir(entry.date, entry.run)
        run_dir.mkdir(parents=True, exist_ok=True)
        entry_path = run_dir / ENTRY_FILENAME
        if entry_path.exists():
            raise PersistenceError(f"{entry_path} already exists; refusing to overwrite")

        video_path: Path | None = None
        if video_source is not None:
            source = Path(video_source)
            if source.is_file():
                video_path = run_dir / source.name
                try:
                    shutil.move(str(source), video_path)
                    entry.video_file = video_path.name
                except OSError as exc:
                    log.warning("could not move video %s: %s", source, exc)
                    entry.video_file = None
                    video_path = None
            else:
                log.warning(
                    "video source %s missing; persisting entry without video", source
                )
                entry.video_file = None

        _atomic_write(entry_path, _dump_json(entry.to_json_dict()))
        return entry_path, video_path

    # -- scanning -------------------------------------------------------

    def scan(self) -> list[JournalEntry]:
        """All readable entries, ordered by (date, run) ascending.

        Unreadable or invalid entries are logged and skipped, never fatal.
        """
        if not self.root.is_dir():
            raise ValidationError(f"store root {self.root} does not exist")
        entries = []
        for date, runs in self.days():
            for run in runs:
                entry_path = self.run_dir(date, run) / ENTRY_FILENAME
                if not entry_path.is_file():
                    continue
                try:
                    data = json.loads(entry_path.read_text(encoding="utf-8"))
                    entries.append(JournalEntry.from_json_dict(data))
                except (OSError, json.JSONDecodeError, ValidationError) as exc:
                    log.warning("skipping unreadable entry %s: %s", entry_path, exc)
        return entries

    def load_previous(self) -> JournalEntry | None:
        """The latest entry by (date, run), or None for an empty corpus."""
        entries = self.scan() if self.root.is_dir() else []
        return entries[-1] if entries else None


def validate_store(store: JournalStore) -> list[str]:
    """Lint the corpus; returns human-readable problem descriptions.

    Checks entry schemas, tag-registry consistency, video references in
    both directions, and run-directory naming.
    """
    problems: list[str] = []
    if not store.root.is_dir():
        return [f"store root {store.root} does not exist"]
    try:
        registry = store.load_registry()
    except ValidationError as exc:
        problems.append(str(exc))
        registry = TagRegistry()

    for date, runs in store.days():
        day = store.day_dir(date)
        for child in day.iterdir():
            if child.is_dir() and not _RUN_DIR_RE.match(child.name):
                problems.append(f"{child}: malformed run directory name")
        for run in runs:
            run_dir = store.run_dir(date, run)
            entry_path = run_dir / ENTRY_FILENAME
            if not entry_path.is_file():
                problems.append(f"{run_dir}: missing {ENTRY_FILENAME}")
                continue
            try:
                data = json.loads(entry_path.read_text(encoding="utf-8"))
                entry = JournalEntry.from_json_dict(data)
            except (OSError, json.JSONDecodeError, ValidationError) as exc:
                problems.append(f"{entry_path}: {exc}")
                continue
            try:
                entry.validate(registry)
            except ValidationError as exc:
                problems.append(f"{entry_path}: {exc}")
            if (entry.date, entry.run) != (date, run):
                problems.append(
                    f"{entry_path}: entry says {entry.date}/run_{entry.run}, "
                    f"stored under {date}/run_{run}"
                )
            videos = [
                p
                for p in run_dir.iterdir()
                if p.is_file() and p.name != ENTRY_FILENAME and not p.name.endswith(".tmp")
            ]
            if entry.video_file is not None and not (run_dir / entry.video_file).is_file():
                problems.append(f"{entry_path}: video_file {entry.video_file!r} missing")
            for video in videos:
                if video.name != entry.video_file:
                    problems.append(f"{video}: not referenced by its entry")
            if len(videos) > 1:
                problems.append(f"{run_dir}: more than one video file")
    return problems
