"""Render journal entries into readable documents.

The default output is PDF (one section per entry, each starting on a
fresh page). A plain-markdown writer is available for environments
without document tooling; both writers emit entries in the order given.
PDF output is generated in invariant mode so re-running a compilation
overwrites its outputs byte-for-byte.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer

from .journal import JournalEntry

FORMATS = ("pdf", "text")

_PRE_HEADING = "Pre-test reflection"
_POST_HEADING = "Post-test reflection"


def doc_suffix(fmt: str) -> str:
    return ".pdf" if fmt == "pdf" else ".md"


def write_document(
    entries: list[JournalEntry], out_path: Path, title: str, fmt: str = "pdf"
) -> Path:
    """Write all entries into one document at ``out_path``."""
    if fmt == "pdf":
        _write_pdf(entries, out_path, title)
    elif fmt == "text":
        _write_text(entries, out_path, title)
    else:
        raise ValueError(f"unknown document format {fmt!r}")
    return out_path


def _entry_header(entry: JournalEntry) -> str:
    return f"{entry.date.isoformat()} · run {entry.run} · {entry.status}"


def _timestamps_line(entry: JournalEntry) -> str:
    line = f"pre {entry.timestamp_pre.isoformat()}"
    if entry.timestamp_post is not None:
        line += f" — post {entry.timestamp_post.isoformat()}"
    return line


# -- PDF ----------------------------------------------------------------


def _styles():
    base = getSampleStyleSheet()
    return {
        "title": base["Title"],
        "header": ParagraphStyle(
            "EntryHeader", parent=base["Heading2"], spaceBefore=4, spaceAfter=2
        ),
        "meta": ParagraphStyle(
            "Meta", parent=base["Normal"], fontSize=8, textColor="#666666", spaceAfter=6
        ),
        "section": ParagraphStyle(
            "Section", parent=base["Heading4"], spaceBefore=8, spaceAfter=2
        ),
        "body": ParagraphStyle("Body", parent=base["Normal"], spaceAfter=4, leading=13),
    }


def _comment_paragraph(text: str, style) -> Paragraph:
    if not text:
        return Paragraph("<i>(empty)</i>", style)
    return Paragraph(escape(text).replace("\n", "<br/>"), style)


def _write_pdf(entries: list[JournalEntry], out_path: Path, title: str) -> None:
    styles = _styles()
    story = [Paragraph(escape(title), styles["title"]), Spacer(1, 4 * mm)]
    for index, entry in enumerate(entries):
        if index > 0:
            story.append(PageBreak())
        story.append(Paragraph(escape(_entry_header(entry)), styles["header"]))
        meta = _timestamps_line(entry)
        if entry.tags:
            meta += "<br/>tags: " + escape(", ".join(entry.tags))
        if entry.video_file:
            meta += "<br/>video: " + escape(entry.video_file)
        story.append(Paragraph(meta, styles["meta"]))
        story.append(Paragraph(_PRE_HEADING, styles["section"]))
        story.append(_comment_paragraph(entry.pre_comment, styles["body"]))
        story.append(Paragraph(_POST_HEADING, styles["section"]))
        story.append(_comment_paragraph(entry.post_comment, styles["body"]))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    doc = SimpleDocTemplate(
        str(out_path), pagesize=A4, invariant=1, title=title
    )
    doc.build(story)


# -- plain text (markdown) ------------------------------------------------


def _write_text(entries: list[JournalEntry], out_path: Path, title: str) -> None:
    lines = [f"# {title}", ""]
    for entry in entries:
        lines.append(f"## {_entry_header(entry)}")
        lines.append("")
        lines.append(f"- {_timestamps_line(entry)}")
        if entry.tags:
            lines.append(f"- tags: {', '.join(entry.tags)}")
        if entry.video_file:
            lines.append(f"- video: {entry.video_file}")
        lines.append("")
        lines.append(f"### {_PRE_HEADING}")
        lines.append("")
        lines.append(entry.pre_comment or "(empty)")
        lines.append("")
        lines.append(f"### {_POST_HEADING}")
        lines.append("")
        lines.append(entry.post_comment or "(empty)")
        lines.append("")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines), encoding="utf-8")
