"""Detection evaluation: IoU, per-class AP, mAP, and fine-grained counts.

Matching is greedy in descending confidence with each ground-truth box
consumed at most once; a detection is a true positive when it overlaps an
unconsumed same-class ground truth at or above the IoU threshold. AP uses
101-point interpolation and mAP averages AP over IoU 0.50:0.05:0.95.
Confidence ties break by input order (frames ascending, then row order).

Detections and ground truths are mappings from 1-based frame index to
box lists; matching never crosses frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DegenerateBox, MissingVisibility
from .labels import LabeledBox

FrameBoxes = Mapping[int, Sequence[LabeledBox]]

IOU_GRID = tuple(0.5 + 0.05 * i for i in range(10))


def iou(a: LabeledBox, b: LabeledBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    if a.w <= 0 or a.h <= 0 or b.w <= 0 or b.h <= 0:
        raise DegenerateBox("iou of a box with nonpositive size")
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area() + b.area() - inter)


def _pooled_dets(dets: FrameBoxes, class_id: int, conf: float | None = None):
    """Class detections pooled across frames, sorted by confidence (stable)."""
    pool = [
        (frame, box)
        for frame in sorted(dets)
        for box in dets[frame]
        if box.class_id == class_id and (conf is None or box.confidence >= conf)
    ]
    pool.sort(key=lambda fb: -fb[1].confidence)
    return pool


def _class_gts(gts: FrameBoxes, class_id: int) -> dict[int, list[LabeledBox]]:
    out: dict[int, list[LabeledBox]] = {}
    for frame, boxes in gts.items():
        sel = [b for b in boxes if b.class_id == class_id]
        if sel:
            out[frame] = sel
    return out


def _best_match(box: LabeledBox, candidates, consumed, iou_thresh: float) -> int | None:
    """Index of the unconsumed candidate with the highest IoU >= threshold."""
    best, best_iou = None, -1.0
    for idx, gt in enumerate(candidates):
        if consumed[idx]:
            continue
        v = iou(box, gt)
        if v >= iou_thresh and v > best_iou:
            best, best_iou = idx, v
    return best


def _interpolated_ap(tp_flags: Sequence[bool], gt_count: int) -> float:
    """101-point interpolated area under the precision/recall curve."""
    if gt_count == 0:
        return 0.0
    precisions, recalls = [], []
    tp = 0
    for i, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        precisions.append(tp / i)
        recalls.append(tp / gt_count)
    points = []
    best = 0.0
    j = len(precisions) - 1
    for k in range(100, -1, -1):
        r = k / 100.0
        while j >= 0 and recalls[j] >= r:
            best = max(best, precisions[j])
            j -= 1
        points.append(best)
    return math.fsum(points) / 101.0


def _class_ap(
    dets: FrameBoxes,
    gts: FrameBoxes,
    class_id: int,
    iou_thresh: float,
    ignore_gts: FrameBoxes | None,
) -> float:
    gt_by_frame = _class_gts(gts, class_id)
    gt_count = sum(len(v) for v in gt_by_frame.values())
    if gt_count == 0:
        return 0.0
    consumed = {f: [False] * len(v) for f, v in gt_by_frame.items()}
    ig_by_frame = _class_gts(ignore_gts, class_id) if ignore_gts else {}
    ig_consumed = {f: [False] * len(v) for f, v in ig_by_frame.items()}
    tp_flags: list[bool] = []
    for frame, box in _pooled_dets(dets, class_id):
        hit = _best_match(box, gt_by_frame.get(frame, ()), consumed.get(frame, []), iou_thresh)
        if hit is not None:
            consumed[frame][hit] = True
            tp_flags.append(True)
            continue
        ig = _best_match(box, ig_by_frame.get(frame, ()), ig_consumed.get(frame, []), iou_thresh)
        if ig is not None:
            ig_consumed[frame][ig] = True
            continue  # matched an ignored ground truth: neither TP nor FP
        tp_flags.append(False)
    return _interpolated_ap(tp_flags, gt_count)


def average_precision(
    dets: FrameBoxes,
    gts: FrameBoxes,
    iou_thresh: float = 0.5,
    ignore_gts: FrameBoxes | None = None,
) -> dict[int, float]:
    """AP per class at one IoU threshold; classes without ground truth skipped."""
    classes = sorted({b.class_id for boxes in gts.values() for b in boxes})
    return {c: _class_ap(dets, gts, c, iou_thresh, ignore_gts) for c in classes}


@dataclass
class EvalSummary:
    map50: float
    map: float
    ap50: dict[int, float]
    ap_avg: dict[int, float]


def map_eval(
    dets: FrameBoxes, gts: FrameBoxes, ignore_gts: FrameBoxes | None = None
) -> EvalSummary:
    """mAP@0.5 plus mAP averaged over IoU 0.50:0.05:0.95."""
    per_iou = {t: average_precision(dets, gts, t, ignore_gts) for t in IOU_GRID}
    classes = sorted(per_iou[IOU_GRID[0]])
    ap50 = {c: per_iou[0.5][c] for c in classes}
    ap_avg = {c: math.fsum(per_iou[t][c] for t in IOU_GRID) / len(IOU_GRID) for c in classes}
    if not classes:
        return EvalSummary(0.0, 0.0, {}, {})
    map50 = math.fsum(ap50.values()) / len(classes)
    map_all = math.fsum(ap_avg.values()) / len(classes)
    return EvalSummary(map50, map_all, ap50, ap_avg)


@dataclass
class ClassCounts:
    gt: int = 0
    dt: int = 0
    tp: int = 0
    fp_wrong_id: int = 0
    fp_wrong_box: int = 0
    fn: int = 0

    @property
    def fp(self) -> int:
        return self.fp_wrong_id + self.fp_wrong_box

    @property
    def precision(self) -> float:
        return self.tp / self.dt if self.dt else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.gt if self.gt else 0.0


@dataclass
class MatchReport:
    """Counts at a fixed confidence threshold, per class and in total.

    Identities: tp + fn = gt and dt = tp + fp_wrong_id + fp_wrong_box hold
    per class and for the totals. A false positive counts as wrong_id when
    it overlaps a ground truth of another class at the IoU threshold and
    as wrong_box otherwise.
    """

    conf: float
    iou_thresh: float
    per_class: dict[int, ClassCounts] = field(default_factory=dict)
    total: ClassCounts = field(default_factory=ClassCounts)


def fine_grained(
    dets: FrameBoxes,
    gts: FrameBoxes,
    conf: float = 0.4,
    iou_thresh: float = 0.5,
    ignore_gts: FrameBoxes | None = None,
) -> MatchReport:
    """Count TP/FP/FN after dropping detections below the confidence cut."""
    classes = sorted(
        {b.class_id for boxes in gts.values() for b in boxes}
        | {b.class_id for boxes in dets.values() for b in boxes if b.confidence >= conf}
    )
    report = MatchReport(conf=conf, iou_thresh=iou_thresh)
    for c in classes:
        report.per_class[c] = ClassCounts()

    other_gts: dict[int, list[tuple[int, LabeledBox]]] = {}
    for frame, boxes in gts.items():
        for b in boxes:
            other_gts.setdefault(frame, []).append((b.class_id, b))

    for c in classes:
        counts = report.per_class[c]
        gt_by_frame = _class_gts(gts, c)
        counts.gt = sum(len(v) for v in gt_by_frame.values())
        consumed = {f: [False] * len(v) for f, v in gt_by_frame.items()}
        ig_by_frame = _class_gts(ignore_gts, c) if ignore_gts else {}
        ig_consumed = {f: [False] * len(v) for f, v in ig_by_frame.items()}
        for frame, box in _pooled_dets(dets, c, conf):
            hit = _best_match(box, gt_by_frame.get(frame, ()), consumed.get(frame, []), iou_thresh)
            if hit is not None:
                consumed[frame][hit] = True
                counts.dt += 1
                counts.tp += 1
                continue
            ig = _best_match(box, ig_by_frame.get(frame, ()), ig_consumed.get(frame, []), iou_thresh)
            if ig is not None:
                ig_consumed[frame][ig] = True
                continue
            counts.dt += 1
            wrong_id = any(
                cls != c and iou(box, gt) >= iou_thresh
                for cls, gt in other_gts.get(frame, ())
            )
            if wrong_id:
                counts.fp_wrong_id += 1
            else:
                counts.fp_wrong_box += 1
        counts.fn = counts.gt - counts.tp

    total = report.total
    for counts in report.per_class.values():
        total.gt += counts.gt
        total.dt += counts.dt
        total.tp += counts.tp
        total.fp_wrong_id += counts.fp_wrong_id
        total.fp_wrong_box += counts.fp_wrong_box
        total.fn += counts.fn
    return report


def split_still_moving(gts: FrameBoxes):
    """Partition ground truths by visibility: 0.0 is still, 1.0 is moving."""
    still: dict[int, list[LabeledBox]] = {}
    moving: dict[int, list[LabeledBox]] = {}
    for frame, boxes in gts.items():
        for b in boxes:
            if b.visibility is None:
                raise MissingVisibility(
                    f"frame {frame}: track {b.track_id} has no visibility label"
                )
            (still if b.visibility == 0.0 else moving).setdefault(frame, []).append(b)
    return still, moving
