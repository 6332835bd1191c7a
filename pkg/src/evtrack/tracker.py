"""Center-point decoding and the permanence tracking state machine.

Detections come off a stack of head maps on a grid downsampled by R: a
class heatmap, a size map, a sub-cell offset map, a displacement map that
points from the current box center to the same object's center in the
previous frame, and a visibility map. A consistency map is accepted for
diagnostics but plays no role in decoding.

A track whose last matched visibility fell below v_thresh is treated as
pseudo-occluded once detections stop: its box is replayed unchanged every
frame (zero-velocity assumption) until the stream ends or it matches
again. A track that was moving at its last match is hidden while
unmatched and dropped after max_age_move consecutive misses, which is
what discards genuinely occluded objects. Dropped identities never
return.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError, OutOfOrderFrame, ShapeMismatch
from .labels import LabeledBox
from .representations import read_tensor_file, write_tensor_file

DOWNSAMPLE = 4
MAP_LETTERS = ("P", "S", "O", "D", "V", "C")


def _as_2d(name: str, arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3 and arr.shape[0] == 1:
        return arr[0]
    if arr.ndim == 2:
        return arr
    raise ShapeMismatch(f"{name} map must be (H, W) or (1, H, W), got {arr.shape}")


@dataclass
class HeadMaps:
    """Per-frame detection head outputs on the downsampled grid."""

    heatmap: np.ndarray  # (classes, H/R, W/R), peak scores in [0, 1]
    size: np.ndarray  # (2, H/R, W/R): (w, h) at input resolution
    offset: np.ndarray  # (2, H/R, W/R): (ox, oy) sub-cell offsets
    displacement: np.ndarray  # (2, H/R, W/R): (dx, dy), current -> previous
    visibility: np.ndarray  # (H/R, W/R) in [0, 1]
    consistency: np.ndarray | None = None  # (H/R, W/R), unused at decode time
    r: int = DOWNSAMPLE

    def __post_init__(self) -> None:
        self.visibility = _as_2d("visibility", np.asarray(self.visibility, np.float64))
        if self.consistency is not None:
            self.consistency = _as_2d("consistency", np.asarray(self.consistency, np.float64))
        self.heatmap = np.asarray(self.heatmap, np.float64)
        self.size = np.asarray(self.size, np.float64)
        self.offset = np.asarray(self.offset, np.float64)
        self.displacement = np.asarray(self.displacement, np.float64)
        if self.heatmap.ndim != 3:
            raise ShapeMismatch(f"heatmap must be (classes, H, W), got {self.heatmap.shape}")
        grid = self.heatmap.shape[1:]
        for name, arr, channels in (
            ("size", self.size, 2),
            ("offset", self.offset, 2),
            ("displacement", self.displacement, 2),
        ):
            if arr.shape != (channels, *grid):
                raise ShapeMismatch(f"{name} map shape {arr.shape} != (2, {grid[0]}, {grid[1]})")
        if self.visibility.shape != grid:
            raise ShapeMismatch(f"visibility map shape {self.visibility.shape} != {grid}")
        if self.consistency is not None and self.consistency.shape != grid:
            raise ShapeMismatch(f"consistency map shape {self.consistency.shape} != {grid}")


@dataclass
class Detection:
    """One decoded box at input resolution."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int
    score: float
    dx: float
    dy: float
    visibility: float

    def to_box(self, track_id: int, visibility: float) -> LabeledBox:
        return LabeledBox(
            x=self.cx - self.w / 2.0,
            y=self.cy - self.h / 2.0,
            w=self.w,
            h=self.h,
            class_id=self.class_id,
            track_id=track_id,
            confidence=self.score,
            visibility=visibility,
        )


def _neighborhood_max(chan: np.ndarray) -> np.ndarray:
    """Max over the 8 neighbors of each cell; borders compare against -inf."""
    h, w = chan.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = chan
    shifts = [
        padded[dy : dy + h, dx : dx + w]
        for dy in range(3)
        for dx in range(3)
        if not (dy == 1 and dx == 1)
    ]
    return np.max(shifts, axis=0)


def decode_detections(
    maps: HeadMaps, conf_thresh: float = 0.4, top_k: int = 100
) -> list[Detection]:
    """Extract peaks: cells scoring >= all 8 neighbors and > conf_thresh.

    Cells on an exact plateau all qualify. At most top_k detections are
    kept in descending score; ties break by (class, row, column) so the
    output is deterministic.
    """
    heat = maps.heatmap
    peaks = np.zeros(heat.shape, bool)
    for c in range(heat.shape[0]):
        peaks[c] = (heat[c] >= _neighborhood_max(heat[c])) & (heat[c] > conf_thresh)
    cs, ys, xs = np.nonzero(peaks)
    if cs.size == 0:
        return []
    scores = heat[cs, ys, xs]
    order = np.lexsort((xs, ys, cs, -scores))[:top_k]
    dets = []
    for idx in order:
        c, yc, xc = int(cs[idx]), int(ys[idx]), int(xs[idx])
        dets.append(
            Detection(
                cx=(xc + maps.offset[0, yc, xc]) * maps.r,
                cy=(yc + maps.offset[1, yc, xc]) * maps.r,
                w=float(maps.size[0, yc, xc]),
                h=float(maps.size[1, yc, xc]),
                class_id=c,
                score=float(heat[c, yc, xc]),
                dx=float(maps.displacement[0, yc, xc]),
                dy=float(maps.displacement[1, yc, xc]),
                visibility=float(maps.visibility[yc, xc]),
            )
        )
    return dets


@dataclass
class Track:
    """Live state for one tracked identity."""

    track_id: int
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    score: float
    still: bool
    misses: int = 0
    age: int = 1

    def to_box(self) -> LabeledBox:
        return LabeledBox(
            x=self.cx - self.w / 2.0,
            y=self.cy - self.h / 2.0,
            w=self.w,
            h=self.h,
            class_id=self.class_id,
            track_id=self.track_id,
            confidence=self.score,
            visibility=0.0 if self.still else 1.0,
        )


def associate(
    tracks: Sequence[Track], detections: Sequence[Detection]
) -> tuple[list[tuple[Track, Detection]], list[Track], list[Detection]]:
    """Greedy center matching driven by each detection's displacement.

    Detections are processed in descending score; each predicts its
    previous-frame center q = center + displacement and claims the nearest
    unclaimed same-class track within a gate of sqrt(w * h) of the
    detection. Ties in score keep input order.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    claimed = [False] * len(tracks)
    matches: list[tuple[Track, Detection]] = []
    unmatched_dets: list[Detection] = []
    for i in order:
        det = detections[i]
        qx, qy = det.cx + det.dx, det.cy + det.dy
        gate = math.sqrt(max(det.w * det.h, 0.0))
        best, best_dist = None, gate
        for j, track in enumerate(tracks):
            if claimed[j] or track.class_id != det.class_id:
                continue
            dist = math.hypot(track.cx - qx, track.cy - qy)
            if dist < best_dist:
                best, best_dist = j, dist
        if best is None:
            unmatched_dets.append(det)
        else:
            claimed[best] = True
            matches.append((tracks[best], det))
    unmatched_tracks = [t for j, t in enumerate(tracks) if not claimed[j]]
    return matches, unmatched_tracks, unmatched_dets


class PermanenceTracker:
    """Sequential per-recording tracker with still-object permanence.

    step() must be called once per frame in order. Emitted boxes cover
    matched tracks, newly spawned tracks, and (with permanence on)
    unmatched still tracks replayed at their last box.
    """

    def __init__(
        self,
        v_thresh: float = 0.5,
        max_age_move: int = 5,
        permanence: bool = True,
    ):
        self.v_thresh = v_thresh
        self.max_age_move = max_age_move
        self.permanence = permanence
        self.tracks: list[Track] = []
        self._ids = itertools.count(1)
        self._last_frame = 0

    def step(
        self, detections: Sequence[Detection], frame_index: int | None = None
    ) -> list[LabeledBox]:
        if frame_index is None:
            frame_index = self._last_frame + 1
        if frame_index <= self._last_frame:
            raise OutOfOrderFrame(
                f"frame {frame_index} after frame {self._last_frame}"
            )
        self._last_frame = frame_index

        matches, unmatched_tracks, unmatched_dets = associate(self.tracks, detections)
        emitted: list[Track] = []
        survivors: list[Track] = []

        for track, det in matches:
            track.cx, track.cy = det.cx, det.cy
            track.w, track.h = det.w, det.h
            track.score = det.score
            track.still = det.visibility < self.v_thresh
            track.misses = 0
            track.age += 1
            survivors.append(track)
            emitted.append(track)

        for track in unmatched_tracks:
            track.misses += 1
            track.age += 1
            if track.still and self.permanence:
                survivors.append(track)
                emitted.append(track)  # zero-velocity replay, box unchanged
            elif track.misses < self.max_age_move:
                survivors.append(track)  # hidden: kept alive but not emitted

        for det in unmatched_dets:
            track = Track(
                track_id=next(self._ids),
                class_id=det.class_id,
                cx=det.cx,
                cy=det.cy,
                w=det.w,
                h=det.h,
                score=det.score,
                still=det.visibility < self.v_thresh,
            )
            survivors.append(track)
            emitted.append(track)

        self.tracks = survivors
        emitted.sort(key=lambda t: t.track_id)
        return [t.to_box() for t in emitted]


def head_map_filename(frame: int, letter: str) -> str:
    return f"{frame:06d}_{letter}.tns1"


def write_head_maps(directory: str | Path, frame: int, maps: HeadMaps) -> None:
    directory = Path(directory)
    cons = maps.consistency
    if cons is None:
        cons = np.zeros_like(maps.visibility)
    arrays = {
        "P": maps.heatmap,
        "S": maps.size,
        "O": maps.offset,
        "D": maps.displacement,
        "V": maps.visibility[None],
        "C": cons[None],
    }
    for letter, arr in arrays.items():
        write_tensor_file(directory / head_map_filename(frame, letter), arr)


def read_head_maps_dir(directory: str | Path, r: int = DOWNSAMPLE) -> Iterator[tuple[int, HeadMaps]]:
    """Yield (frame, HeadMaps) for every frame present, in frame order."""
    directory = Path(directory)
    frames = sorted(
        int(p.name.split("_")[0]) for p in directory.glob("*_P.tns1")
    )
    for frame in frames:
        def load(letter: str, required: bool = True) -> np.ndarray | None:
            path = directory / head_map_filename(frame, letter)
            if not path.exists():
                if required:
                    raise FormatError(f"missing head map file {path.name}")
                return None
            return read_tensor_file(path)

        yield frame, HeadMaps(
            heatmap=load("P"),
            size=load("S"),
            offset=load("O"),
            displacement=load("D"),
            visibility=load("V"),
            consistency=load("C", required=False),
            r=r,
        )
