"""Newline-delimited JSON frame format.

One frame per line::

    {"t": 0.0333, "mode": "strain", "v": [[c0, c1, c2, c3], ... 26 rows]}

``mode`` is ``"strain"`` (microstrain) or ``"wl"`` (wavelength shift, nm).
Column 0 of ``v`` is the central core.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FrameError, FrameShapeError
from .sensor_model import FbgFrame, FrameMode

log = logging.getLogger(__name__)

MAX_LINE_BYTES = 64 * 1024


def encode_frame(frame: FbgFrame) -> str:
    """Serialize a frame to one line (without the trailing newline)."""
    return json.dumps({"t": frame.timestamp, "mode": frame.mode.value,
                       "v": frame.values.tolist()}, separators=(",", ":"))


def parse_frame(line, n_gratings: int = 26, n_cores: int = 4) -> FbgFrame:
    """Parse one line; any defect raises :class:`FrameError`."""
    if isinstance(line, bytes):
        if len(line) >= MAX_LINE_BYTES:
            raise FrameError("line exceeds 64 KiB")
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"not UTF-8: {exc}") from None
    elif len(line.encode("utf-8", "replace")) >= MAX_LINE_BYTES:
        raise FrameError("line exceeds 64 KiB")
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise FrameError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FrameError("frame must be a JSON object")
    try:
        t = obj["t"]
        mode = FrameMode(obj["mode"])
        v = obj["v"]
    except (KeyError, ValueError, TypeError) as exc:
        raise FrameError(f"missing or invalid field: {exc}") from None
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        raise FrameError("timestamp must be a number")
    if not isinstance(v, list) or not all(isinstance(row, list) for row in v):
        raise FrameError("values must be a list of grating rows")
    for row in v:
        for x in row:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise FrameError("non-numeric value in frame")
    widths = {len(row) for row in v}
    if len(v) != n_gratings or widths != {n_cores}:
        if len(widths) == 1:
            # consistent but foreign layout: likely the wrong calibration
            raise FrameShapeError(f"frame is {len(v)}x{widths.pop()}, calibration expects "
                                  f"{n_gratings}x{n_cores}")
        raise FrameError(f"expected {n_gratings} rows of {n_cores} cores")
    try:
        return FbgFrame(timestamp=float(t), mode=mode, values=v)
    except (ValueError, OverflowError) as exc:
        raise FrameError(str(exc)) from None


def write_frames(path, frames: Iterable[FbgFrame]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(encode_frame(frame))
            fh.write("\n")


def iter_frame_lines(lines: Iterable, n_gratings: int = 26, n_cores: int = 4
                     ) -> Iterator[tuple[int, FbgFrame | None, str | None]]:
    """Yield ``(line_number, frame, error)``; exactly one of frame/error is set.

    Blank lines are ignored.
    """
    for lineno, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            if not line.strip():
                continue
        elif not line.strip():
            continue
        try:
            yield lineno, parse_frame(line, n_gratings, n_cores), None
        except FrameError as exc:
            yield lineno, None, str(exc)


def read_frames(path, n_gratings: int = 26, n_cores: int = 4):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            yield from iter_frame_lines(fh, n_gratings, n_cores)
    except OSError as exc:
        raise FrameError(f"{path}: {exc}") from exc
