"""Visibility auto-labeling: split boxes into moving (1.0) and still (0.0).

A still object produces no events, so its box shows a sparse event
occupancy and a near-zero center displacement against the previous frame.
The labeler walks frames in order and keeps two pieces of state per track:
a hit counter (capped at 5) that smooths flicker in the decision, and a
two-slot queue of the frames in which the track was last emitted. A box
labeled still is only kept when its track was emitted in both of the two
previous frames, which discards boxes that are featureless at their first
occurrence.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateBox, FrameMisalignment, ShapeMismatch
from .events import EventWindow
from .labels import LabeledBox
from .representations import occupancy_mask

log = logging.getLogger(__name__)

STILL_HITS_CAP = 5
TRACK_VIS_LEN = 2


@dataclass(frozen=True)
class AutoLabelParams:
    """Window length plus the displacement and occupancy thresholds."""

    dt_us: int = 50_000
    d_value: float = 0.03
    o_value: float = 0.1

    def __post_init__(self) -> None:
        if self.dt_us <= 0 or self.d_value <= 0 or self.o_value <= 0:
            raise ValueError("auto-label parameters must be strictly positive")


@dataclass
class AutoLabelState:
    """Per-track counters carried across frames."""

    still_hits: dict[int, int] = field(default_factory=dict)
    track_vis: dict[int, deque] = field(default_factory=dict)


def _round_half_away(v: float) -> int:
    if v >= 0:
        return int(math.floor(v + 0.5))
    return int(math.ceil(v - 0.5))


def rasterize_box(
    box: LabeledBox, width: int, height: int
) -> tuple[int, int, int, int] | None:
    """Integer pixel rect [x0, x1) x [y0, y1), clipped to the frame.

    Fractional coordinates round half away from zero. Returns None when
    nothing of the box remains inside the frame.
    """
    x0 = max(_round_half_away(box.x), 0)
    y0 = max(_round_half_away(box.y), 0)
    x1 = min(_round_half_away(box.x + box.w), width)
    y1 = min(_round_half_away(box.y + box.h), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def bbox_mask(
    box: LabeledBox,
    frame_boxes: Sequence[LabeledBox],
    width: int,
    height: int,
) -> np.ndarray:
    """Ones over the box, zeroed where any other box overlaps it.

    Other boxes are all remaining entries of frame_boxes regardless of
    class; an entry geometrically equal to box but at another list
    position still counts as an overlap.
    """
    if box.w <= 0 or box.h <= 0:
        raise DegenerateBox(f"box {box.track_id} has nonpositive size {box.w}x{box.h}")
    rect = rasterize_box(box, width, height)
    if rect is None:
        return np.zeros((0, 0), np.uint8)
    x0, y0, x1, y1 = rect
    mask = np.ones((y1 - y0, x1 - x0), np.uint8)
    for other in frame_boxes:
        if other is box:
            continue
        if other.w <= 0 or other.h <= 0:
            continue
        orect = rasterize_box(other, width, height)
        if orect is None:
            continue
        ox0, oy0, ox1, oy1 = orect
        ix0, iy0 = max(x0, ox0), max(y0, oy0)
        ix1, iy1 = min(x1, ox1), min(y1, oy1)
        if ix1 > ix0 and iy1 > iy0:
            mask[iy0 - y0 : iy1 - y0, ix0 - x0 : ix1 - x0] = 0
    return mask


def occupancy_rate(occ_slice: np.ndarray, box_mask: np.ndarray) -> float:
    """Fraction of the box's own pixels (mask value 1) that saw events.

    occ_true counts occupied own pixels, occ_false counts silent own
    pixels; the rate is occ_true / (occ_true + occ_false) and defined as
    0.0 when the box is fully overlapped (no own pixels at all).
    """
    if occ_slice.shape != box_mask.shape:
        raise ShapeMismatch(
            f"occupancy slice {occ_slice.shape} vs box mask {box_mask.shape}"
        )
    occ = occ_slice != 0
    own = box_mask != 0
    occ_true = int(np.count_nonzero(occ & own))
    occ_false = int(np.count_nonzero(~occ & own))
    denom = occ_true + occ_false
    if denom == 0:
        return 0.0
    return occ_true / denom


def normalized_displacement(
    prev_center: tuple[float, float],
    cur_center: tuple[float, float],
    w: float,
    h: float,
) -> float:
    """Center shift between frames, scaled by the current box size."""
    if w <= 0 or h <= 0:
        raise DegenerateBox(f"cannot normalize by box size {w}x{h}")
    dx = (prev_center[0] - cur_center[0]) / w
    dy = (prev_center[1] - cur_center[1]) / h
    return math.sqrt(dx * dx + dy * dy)


class AutoLabeler:
    """Frame-by-frame visibility labeler over one recording.

    step() consumes windows in order; autolabel_sequence() wraps the loop.
    The state attribute exposes the hit counters and emission queues for
    inspection.
    """

    def __init__(self, width: int, height: int, params: AutoLabelParams | None = None):
        self.width = width
        self.height = height
        self.params = params or AutoLabelParams()
        self.state = AutoLabelState()
        self._prev_emitted: dict[int, LabeledBox] = {}
        self._last_index = 0

    def step(self, window: EventWindow, boxes: Sequence[LabeledBox]) -> list[LabeledBox]:
        i = window.index
        if i != self._last_index + 1:
            raise FrameMisalignment(
                f"expected window {self._last_index + 1}, got {i}"
            )
        self._last_index = i
        occ_full = occupancy_mask(window, self.height, self.width)
        hits = self.state.still_hits
        seen = self.state.track_vis
        emitted: list[LabeledBox] = []
        for box in boxes:
            tid = box.track_id
            if box.w <= 0 or box.h <= 0:
                log.warning(
                    "frame %d: skipping degenerate box for track %d (%gx%g)",
                    i, tid, box.w, box.h,
                )
                continue
            rect = rasterize_box(box, self.width, self.height)
            if rect is None:
                log.warning("frame %d: skipping box for track %d outside frame", i, tid)
                continue
            x0, y0, x1, y1 = rect
            mask = bbox_mask(box, boxes, self.width, self.height)
            rate = occupancy_rate(occ_full[y0:y1, x0:x1], mask)

            visibility = 1.0
            prev = self._prev_emitted.get(tid)
            if prev is not None:
                disp = normalized_displacement(prev.center(), box.center(), box.w, box.h)
                if disp < self.params.d_value and rate < self.params.o_value:
                    visibility = 0.0
                    hits[tid] = min(hits.get(tid, 0) + 1, STILL_HITS_CAP)
                elif hits.get(tid, 0) > 0:
                    visibility = 0.0
                    hits[tid] = hits[tid] - 1
            elif rate < self.params.o_value:
                visibility = 0.0
                hits[tid] = min(hits.get(tid, 0) + 1, STILL_HITS_CAP)

            if visibility == 1.0 or list(seen.get(tid, ())) == [i - 2, i - 1]:
                emitted.append(replace(box, visibility=visibility))
                seen.setdefault(tid, deque(maxlen=TRACK_VIS_LEN)).append(i)
        self._prev_emitted = {b.track_id: b for b in emitted}
        return emitted


def autolabel_sequence(
    windows: Sequence[EventWindow],
    labels: Mapping[int, Sequence[LabeledBox]],
    params: AutoLabelParams | None = None,
) -> dict[int, list[LabeledBox]]:
    """Label every frame of one recording; deterministic given its inputs.

    windows must cover frames 1..T contiguously and labels may only
    reference frames in that range.
    """
    total = len(windows)
    bad = [f for f in labels if f < 1 or f > total]
    if bad:
        raise FrameMisalignment(
            f"labels reference frames {sorted(bad)[:5]} outside 1..{total}"
        )
    if total == 0:
        return {}
    labeler = AutoLabeler(windows[0].width, windows[0].height, params)
    out: dict[int, list[LabeledBox]] = {}
    for window in windows:
        out[window.index] = labeler.step(window, labels.get(window.index, ()))
    return out
