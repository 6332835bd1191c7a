"""Bounding-box labels and the detection CSV format.

Columns: frame,ts_us,x,y,w,h,class_id,track_id,confidence,visibility
where frame is the 1-based window index and ts_us = (frame - 1) * dt_us.
Input files may omit confidence (assumed 1.0) and visibility (left unset);
written files always carry all ten columns, UTF-8 with LF line endings,
so equal inputs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import FormatError
from .fileio import atomic_write_text

LABEL_COLUMNS = (
    "frame",
    "ts_us",
    "x",
    "y",
    "w",
    "h",
    "class_id",
    "track_id",
    "confidence",
    "visibility",
)
_REQUIRED = ("frame", "x", "y", "w", "h", "class_id", "track_id")


@dataclass
class LabeledBox:
    """Axis-aligned box with class, track identity, confidence, visibility.

    x, y are the top-left corner in pixels; visibility is 1.0 for moving
    objects, 0.0 for still ones, and None when no label has been assigned.
    """

    x: float
    y: float
    w: float
    h: float
    class_id: int
    track_id: int
    confidence: float = 1.0
    visibility: float | None = None

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def area(self) -> float:
        return self.w * self.h


def format_coord(v: float) -> str:
    """Integral values print as integers, everything else as repr."""
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def format_score(v: float) -> str:
    """Scores keep a decimal point: 1.0 prints as '1.0', not '1'."""
    return repr(float(v))


def read_label_csv(source) -> dict[int, list[LabeledBox]]:
    """Load labels grouped by frame index. Accepts a path or a text file."""
    if hasattr(source, "read"):
        return _read_rows(source, getattr(source, "name", "<stream>"))
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return _read_rows(fh, str(source))


def _read_rows(fh, name: str) -> dict[int, list[LabeledBox]]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        return {}
    missing = [c for c in _REQUIRED if c not in reader.fieldnames]
    if missing:
        raise FormatError(f"{name}: label csv missing columns {missing}")
    frames: dict[int, list[LabeledBox]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            frame = int(row["frame"])
            conf_raw = (row.get("confidence") or "").strip()
            vis_raw = (row.get("visibility") or "").strip()
            box = LabeledBox(
                x=float(row["x"]),
                y=float(row["y"]),
                w=float(row["w"]),
                h=float(row["h"]),
                class_id=int(row["class_id"]),
                track_id=int(row["track_id"]),
                confidence=float(conf_raw) if conf_raw else 1.0,
                visibility=float(vis_raw) if vis_raw else None,
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{name}: line {lineno}: {exc}") from exc
        frames.setdefault(frame, []).append(box)
    return frames


def label_csv_text(frames: Mapping[int, Sequence[LabeledBox]], dt_us: int) -> str:
    out = io.StringIO()
    out.write(",".join(LABEL_COLUMNS) + "\n")
    for frame in sorted(frames):
        ts = (frame - 1) * dt_us
        for b in frames[frame]:
            vis = "" if b.visibility is None else format_score(b.visibility)
            out.write(
                f"{frame},{ts},{format_coord(b.x)},{format_coord(b.y)},"
                f"{format_coord(b.w)},{format_coord(b.h)},{b.class_id},"
                f"{b.track_id},{format_score(b.confidence)},{vis}\n"
            )
    return out.getvalue()


def write_label_csv(
    dest: str | Path, frames: Mapping[int, Sequence[LabeledBox]], dt_us: int
) -> None:
    atomic_write_text(dest, label_csv_text(frames, dt_us))
