"""Video handling through an external transcoder (ffmpeg-style CLI).

All media work shells out to configurable commands so the rest of the
package stays testable without any codec installed: tests point
``transcoder_cmd``/``probe_cmd`` at a fake that records its argument
lists. The defaults match the ubiquitous open-source transcoder.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import MediaError, TranscoderNotFound

log = logging.getLogger(__name__)

# drawtext position expressions, 16px margin.
POSITIONS = {
    "bottom-left": "x=16:y=h-th-16",
    "bottom-right": "x=w-tw-16:y=h-th-16",
    "top-left": "x=16:y=16",
    "top-right": "x=w-tw-16:y=16",
}


def burnin_label(date, run: int) -> str:
    return f"{date.isoformat()}  run {run}"


def escape_drawtext(text: str) -> str:
    """Escape a literal for use inside a drawtext text= value."""
    out = text.replace("\\", "\\\\")
    for ch in ":'%,":
        out = out.replace(ch, "\\" + ch)
    return out


@dataclass
class MediaTools:
    transcoder_cmd: str = "ffmpeg"
    probe_cmd: str = "ffprobe"
    burnin_position: str = "bottom-left"
    fps: int = 30

    # -- argument construction (pure) -----------------------------------

    def annotate_args(self, src: Path, dst: Path, label: str) -> list[str]:
        position = POSITIONS[self.burnin_position]
        drawtext = (
            f"drawtext=text='{escape_drawtext(label)}':fontsize=28:fontcolor=white:"
            f"borderw=2:bordercolor=black:{position}"
        )
        return [
            *shlex.split(self.transcoder_cmd),
            "-y",
            "-i",
            str(src),
            "-vf",
            drawtext,
            "-c:a",
            "copy",
            str(dst),
        ]

    def concat_args(
        self,
        srcs: list[Path],
        dst: Path,
        size: tuple[int, int],
        with_audio: bool,
    ) -> list[str]:
        w, h = size
        inputs: list[str] = []
        for src in srcs:
            inputs += ["-i", str(src)]
        chains = []
        joins = []
        for i in range(len(srcs)):
            chains.append(
                f"[{i}:v]scale={w}:{h}:force_original_aspect_ratio=decrease,"
                f"pad={w}:{h}:(ow-iw)/2:(oh-ih)/2,fps={self.fps},setsar=1[v{i}]"
            )
            joins.append(f"[v{i}]" + (f"[{i}:a]" if with_audio else ""))
        graph = (
            ";".join(chains)
            + ";"
            + "".join(joins)
            + f"concat=n={len(srcs)}:v=1:a={int(with_audio)}[v]"
            + ("[a]" if with_audio else "")
        )
        args = [
            *shlex.split(self.transcoder_cmd),
            "-y",
            *inputs,
            "-filter_complex",
            graph,
            "-map",
            "[v]",
        ]
        if with_audio:
            args += ["-map", "[a]"]
        args.append(str(dst))
        return args

    def probe_size_args(self, src: Path) -> list[str]:
        return [
            *shlex.split(self.probe_cmd),
            "-v",
            "error",
            "-select_streams",
            "v:0",
            "-show_entries",
            "stream=width,height",
            "-of",
            "csv=p=0",
            str(src),
        ]

    def probe_audio_args(self, src: Path) -> list[str]:
        return [
            *shlex.split(self.probe_cmd),
            "-v",
            "error",
            "-select_streams",
            "a:0",
            "-show_entries",
            "stream=codec_type",
            "-of",
            "csv=p=0",
            str(src),
        ]

    # -- invocation ------------------------------------------------------

    def _run(self, args: list[str], command_name: str) -> str:
        try:
            proc = subprocess.run(args, capture_output=True, text=True)
        except FileNotFoundError:
            raise TranscoderNotFound(
                f"cannot execute {command_name!r}; install it or set the command in the config"
            ) from None
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-3:]
            raise MediaError(
                f"{args[0]} exited with {proc.returncode}: " + " / ".join(tail)
            )
        return proc.stdout

    def annotate(self, src: Path, dst: Path, label: str) -> Path:
        dst.parent.mkdir(parents=True, exist_ok=True)
        self._run(self.annotate_args(src, dst, label), self.transcoder_cmd)
        return dst

    def probe_size(self, src: Path) -> tuple[int, int]:
        out = self._run(self.probe_size_args(src), self.probe_cmd).strip()
        try:
            w, h = out.split("\n")[0].split(",")[:2]
            return int(w), int(h)
        except ValueError:
            raise MediaError(f"could not parse video size from probe output {out!r}")

    def has_audio(self, src: Path) -> bool:
        out = self._run(self.probe_audio_args(src), self.probe_cmd)
        return "audio" in out

    def concat(self, srcs: list[Path], dst: Path) -> Path:
        """Join clips into one file, normalized to the first clip's size.

        Audio is kept only when every clip has an audio stream; mixed
        corpora fall back to video-only with a warning.
        """
        if not srcs:
            raise MediaError("nothing to concatenate")
        dst.parent.mkdir(parents=True, exist_ok=True)
        size = self.probe_size(srcs[0])
        with_audio = all(self.has_audio(s) for s in srcs)
        if not with_audio:
            log.warning("not all clips carry audio; writing %s without audio", dst.name)
        self._run(self.concat_args(srcs, dst, size, with_audio), self.transcoder_cmd)
        return dst
