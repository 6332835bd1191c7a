"""Frame rendering: events plus labeled boxes to RGB images.

Positive events draw in blue, negative in green, boxes in a fixed
per-class palette, and any box with visibility 0.0 gets a red outline
instead. Pixels are deterministic: negative events paint before positive
ones, boxes paint in list order.
"""

from __future__ import annotations

import numpy as np

from .events import EventWindow
from .labels import LabeledBox

BACKGROUND = (12, 12, 12)
POSITIVE = (64, 136, 255)
NEGATIVE = (80, 216, 96)
STILL_OUTLINE = (255, 32, 32)
CLASS_PALETTE = (
    (255, 206, 0),
    (204, 102, 255),
    (0, 224, 224),
    (255, 144, 0),
    (160, 160, 255),
    (255, 255, 160),
)


def class_color(class_id: int) -> tuple[int, int, int]:
    return CLASS_PALETTE[class_id % len(CLASS_PALETTE)]


def _draw_outline(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    """1-pixel rectangle outline on [x0, x1) x [y0, y1), clipped."""
    height, width = img.shape[:2]
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x1, width), min(y1, height)
    if cx1 <= cx0 or cy1 <= cy0:
        return
    if 0 <= y0 < height:
        img[y0, cx0:cx1] = color
    if 0 <= y1 - 1 < height:
        img[y1 - 1, cx0:cx1] = color
    if 0 <= x0 < width:
        img[cy0:cy1, x0] = color
    if 0 <= x1 - 1 < width:
        img[cy0:cy1, x1 - 1] = color


def render_frame(
    window: EventWindow, boxes: list[LabeledBox], width: int, height: int
) -> np.ndarray:
    img = np.empty((height, width, 3), np.uint8)
    img[:] = BACKGROUND
    if len(window):
        neg = window.p == 0
        img[window.y[neg], window.x[neg]] = NEGATIVE
        pos = ~neg
        img[window.y[pos], window.x[pos]] = POSITIVE
    for box in boxes:
        color = STILL_OUTLINE if box.visibility == 0.0 else class_color(box.class_id)
        x0 = int(round(box.x))
        y0 = int(round(box.y))
        _draw_outline(img, x0, y0, x0 + int(round(box.w)), y0 + int(round(box.h)), color)
    return img
