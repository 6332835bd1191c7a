"""Synthetic event scenes with exact ground truth.

Rectangles move with piecewise-constant velocities. While a box moves it
emits Poisson-distributed events on its one-pixel boundary ring, polarity
1 on the motion-leading half and 0 on the trailing half; while still it
emits nothing, exactly like a static object in front of an event camera.
Ground-truth visibility is therefore analytic: 1.0 for any frame whose
window overlaps a nonzero-velocity span, else 0.0.

Randomness comes from counter-based Philox streams keyed per object, so
adding an object never perturbs the events of the others, and a fixed
seed reproduces byte-identical outputs on any platform.

Scene files are line oriented: `key = value` pairs, comments after '#',
and one `[object]` section per object (keys: class_id, track_id,
box = x y w h, z, and one `segment = t_start_us t_end_us vx vy` line per
motion span, velocities in pixels per second).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import SpecValidation
from .events import EventStream
from .labels import LabeledBox, format_coord
from .tracker import HeadMaps

_NOISE_TAG = 0xFFFFFFFFFFFFFFFF
_NOISE_MIX = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class MotionSegment:
    t_start: int
    t_end: int
    vx: float
    vy: float

    @property
    def moving(self) -> bool:
        return self.vx != 0.0 or self.vy != 0.0


@dataclass(frozen=True)
class ObjectSpec:
    class_id: int
    track_id: int
    x: float
    y: float
    w: float
    h: float
    segments: tuple[MotionSegment, ...]
    z: int = 0


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    duration_us: int
    objects: tuple[ObjectSpec, ...] = ()
    dt_us: int = 50_000
    events_per_edge_pixel_per_frame: float = 5.0
    noise_rate: float = 0.0
    seed: int = 0


@dataclass
class SceneResult:
    stream: EventStream
    labels: dict[int, list[LabeledBox]]
    active: dict[int, set]  # frame -> track ids that emitted >= 1 event
    frames: int


def validate_scene(spec: SceneSpec) -> None:
    def fail(path: str, msg: str) -> None:
        raise SpecValidation(f"{path}: {msg}")

    if spec.width <= 0 or spec.height <= 0:
        fail("width/height", "must be positive")
    if spec.duration_us <= 0:
        fail("duration_us", "must be positive")
    if spec.dt_us <= 0:
        fail("dt_us", "must be positive")
    if spec.events_per_edge_pixel_per_frame < 0:
        fail("events_per_edge_pixel_per_frame", "must be non-negative")
    if spec.noise_rate < 0:
        fail("noise_rate", "must be non-negative")
    if not 0 <= spec.seed < 2**64:
        fail("seed", "must fit in 64 bits")
    seen_ids = set()
    for i, obj in enumerate(spec.objects):
        path = f"objects[{i}]"
        if obj.w <= 0 or obj.h <= 0:
            fail(f"{path}.box", f"size {obj.w}x{obj.h} must be positive")
        if not 0 <= obj.track_id < 2**63:
            fail(f"{path}.track_id", "must be a non-negative 63-bit integer")
        if obj.track_id in seen_ids:
            fail(f"{path}.track_id", f"duplicate track id {obj.track_id}")
        seen_ids.add(obj.track_id)
        if not obj.segments:
            fail(f"{path}.segments", "at least one motion segment required")
        for k, seg in enumerate(obj.segments):
            spath = f"{path}.segment[{k}]"
            if seg.t_start >= seg.t_end:
                fail(spath, f"empty span [{seg.t_start}, {seg.t_end})")
            expected = 0 if k == 0 else obj.segments[k - 1].t_end
            if seg.t_start != expected:
                fail(spath, f"t_start {seg.t_start} breaks contiguity (expected {expected})")
        if obj.segments[-1].t_end != spec.duration_us:
            fail(
                f"{path}.segment[{len(obj.segments) - 1}]",
                f"t_end {obj.segments[-1].t_end} must equal duration {spec.duration_us}",
            )


def position_at(obj: ObjectSpec, t_us: int) -> tuple[float, float]:
    """Top-left corner of the box at time t, integrating the segments."""
    px, py = obj.x, obj.y
    for seg in obj.segments:
        if t_us <= seg.t_start:
            break
        span = min(t_us, seg.t_end) - seg.t_start
        px += seg.vx * span / 1e6
        py += seg.vy * span / 1e6
    return px, py


def _moving_spans(obj: ObjectSpec, t0: int, t1: int) -> list[tuple[int, int]]:
    spans = []
    for seg in obj.segments:
        if not seg.moving:
            continue
        lo, hi = max(t0, seg.t_start), min(t1, seg.t_end)
        if lo < hi:
            spans.append((lo, hi))
    return spans


def _window_displacement(obj: ObjectSpec, t0: int, t1: int) -> tuple[float, float]:
    x0, y0 = position_at(obj, t0)
    x1, y1 = position_at(obj, t1)
    return x1 - x0, y1 - y0


def _clip_rect(
    x: float, y: float, w: float, h: float, width: int, height: int
) -> tuple[int, int, int, int] | None:
    def rha(v: float) -> int:
        return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))

    x0, y0 = max(rha(x), 0), max(rha(y), 0)
    x1, y1 = min(rha(x + w), width), min(rha(y + h), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def _ring_pixels(rect: tuple[int, int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    """One-pixel boundary ring in a fixed scan order (top, bottom, sides)."""
    x0, y0, x1, y1 = rect
    xs, ys = [], []
    xs.append(np.arange(x0, x1))
    ys.append(np.full(x1 - x0, y0))
    if y1 - y0 > 1:
        xs.append(np.arange(x0, x1))
        ys.append(np.full(x1 - x0, y1 - 1))
    if y1 - y0 > 2:
        inner = np.arange(y0 + 1, y1 - 1)
        xs.append(np.full(inner.size, x0))
        ys.append(inner)
        if x1 - x0 > 1:
            xs.append(np.full(inner.size, x1 - 1))
            ys.append(inner)
    return (
        np.concatenate(xs).astype(np.uint16),
        np.concatenate(ys).astype(np.uint16),
    )


def _object_rng(seed: int, track_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, track_id], np.uint64)))


def _noise_rng(seed: int) -> np.random.Generator:
    key = np.array([(seed ^ _NOISE_MIX) & 0xFFFFFFFFFFFFFFFF, _NOISE_TAG], np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _map_offsets_to_spans(offsets: np.ndarray, spans: list[tuple[int, int]]) -> np.ndarray:
    lengths = np.array([hi - lo for lo, hi in spans], np.int64)
    starts = np.array([lo for lo, _ in spans], np.int64)
    edges = np.cumsum(lengths)
    idx = np.searchsorted(edges, offsets, side="right")
    inner = offsets - (edges[idx] - lengths[idx])
    return (starts[idx] + inner).astype(np.uint64)


def generate(spec: SceneSpec) -> SceneResult:
    """Simulate a scene: event stream plus per-frame ground-truth labels.

    Events of an object are suppressed at pixels covered by any box with a
    strictly larger z that frame, which is how a nearer object occludes a
    farther one.
    """
    validate_scene(spec)
    frames = (spec.duration_us + spec.dt_us - 1) // spec.dt_us
    rate = spec.events_per_edge_pixel_per_frame

    labels: dict[int, list[LabeledBox]] = {}
    active: dict[int, set] = {}
    chunks_t, chunks_x, chunks_y, chunks_p = [], [], [], []

    rects: dict[tuple[int, int], tuple[int, int, int, int]] = {}
    positions: dict[tuple[int, int], tuple[float, float]] = {}
    for i in range(1, frames + 1):
        t0 = (i - 1) * spec.dt_us
        for obj in spec.objects:
            px, py = position_at(obj, t0)
            positions[(i, obj.track_id)] = (px, py)
            rect = _clip_rect(px, py, obj.w, obj.h, spec.width, spec.height)
            if rect is not None:
                rects[(i, obj.track_id)] = rect

    for obj in spec.objects:
        rng = _object_rng(spec.seed, obj.track_id)
        occluders = [o for o in spec.objects if o.z > obj.z]
        for i in range(1, frames + 1):
            t0, t1 = (i - 1) * spec.dt_us, i * spec.dt_us
            px, py = positions[(i, obj.track_id)]
            rect = rects.get((i, obj.track_id))
            spans = _moving_spans(obj, t0, min(t1, spec.duration_us))
            moving = bool(spans)
            if rect is not None:
                labels.setdefault(i, []).append(
                    LabeledBox(
                        x=px,
                        y=py,
                        w=obj.w,
                        h=obj.h,
                        class_id=obj.class_id,
                        track_id=obj.track_id,
                        confidence=1.0,
                        visibility=1.0 if moving else 0.0,
                    )
                )
            if not moving or rect is None or rate == 0:
                continue
            ring_x, ring_y = _ring_pixels(rect)
            counts = rng.poisson(rate, ring_x.size)
            total = int(counts.sum())
            if total == 0:
                continue
            span_total = sum(hi - lo for lo, hi in spans)
            offsets = rng.integers(0, span_total, total)
            ts = _map_offsets_to_spans(offsets, spans)

            dx, dy = _window_displacement(obj, t0, t1)
            if dx == 0.0 and dy == 0.0:
                dx, dy = 1.0, 0.0  # net motion canceled out inside the window
            ccx, ccy = px + obj.w / 2.0, py + obj.h / 2.0
            lead = ((ring_x + 0.5 - ccx) * dx + (ring_y + 0.5 - ccy) * dy) >= 0
            pol = lead.astype(np.uint8)

            ev_x = np.repeat(ring_x, counts)
            ev_y = np.repeat(ring_y, counts)
            ev_p = np.repeat(pol, counts)

            keep = np.ones(total, bool)
            for occ in occluders:
                orect = rects.get((i, occ.track_id))
                if orect is None:
                    continue
                ox0, oy0, ox1, oy1 = orect
                inside = (ev_x >= ox0) & (ev_x < ox1) & (ev_y >= oy0) & (ev_y < oy1)
                keep &= ~inside
            if keep.any():
                chunks_t.append(ts[keep])
                chunks_x.append(ev_x[keep])
                chunks_y.append(ev_y[keep])
                chunks_p.append(ev_p[keep])
                active.setdefault(i, set()).add(obj.track_id)

    if spec.noise_rate > 0:
        rng = _noise_rng(spec.seed)
        for i in range(1, frames + 1):
            t0, t1 = (i - 1) * spec.dt_us, min(i * spec.dt_us, spec.duration_us)
            m = int(rng.poisson(spec.noise_rate))
            if m == 0:
                continue
            chunks_x.append(rng.integers(0, spec.width, m).astype(np.uint16))
            chunks_y.append(rng.integers(0, spec.height, m).astype(np.uint16))
            chunks_p.append(rng.integers(0, 2, m).astype(np.uint8))
            chunks_t.append(rng.integers(t0, t1, m).astype(np.uint64))

    if chunks_t:
        t = np.concatenate(chunks_t).astype(np.uint64)
        x = np.concatenate(chunks_x)
        y = np.concatenate(chunks_y)
        p = np.concatenate(chunks_p)
        order = np.lexsort((p, x, y, t))
        stream = EventStream(spec.width, spec.height, t[order], x[order], y[order], p[order])
    else:
        stream = EventStream(spec.width, spec.height)
    stream.validate()
    return SceneResult(stream=stream, labels=labels, active=active, frames=frames)


def occlusion_scenario(
    width: int = 240,
    height: int = 180,
    dt_us: int = 50_000,
    seed: int = 0,
    noise_rate: float = 0.0,
) -> SceneSpec:
    """A car-like box that stops, then a nearer box that sweeps across it.

    The first object moves, halts mid-scene, and stays still; the second
    shares its class, passes in front (higher z) covering it completely
    for a few frames, and finally leaves the frame, after which its
    detections cease for the rest of the scene.
    """
    duration = 3_000_000
    occludee = ObjectSpec(
        class_id=0,
        track_id=1,
        x=40.0,
        y=80.0,
        w=20.0,
        h=16.0,
        z=0,
        segments=(
            MotionSegment(0, 1_000_000, 80.0, 0.0),
            MotionSegment(1_000_000, duration, 0.0, 0.0),
        ),
    )
    occluder = ObjectSpec(
        class_id=0,
        track_id=2,
        x=-40.0,
        y=78.0,
        w=36.0,
        h=28.0,
        z=1,
        segments=(MotionSegment(0, duration, 120.0, 0.0),),
    )
    return SceneSpec(
        width=width,
        height=height,
        duration_us=duration,
        dt_us=dt_us,
        objects=(occludee, occluder),
        events_per_edge_pixel_per_frame=5.0,
        noise_rate=noise_rate,
        seed=seed,
    )


def render_head_maps(
    result: SceneResult,
    n_classes: int,
    width: int,
    height: int,
    r: int = 4,
) -> dict[int, HeadMaps]:
    """Idealized head maps for every frame of a generated scene.

    An object is rendered when it produced events this frame or the
    previous one; the one-frame tail is what lets a stopping object carry
    its final detection with visibility 0.0 before detections cease, the
    way a detector with short feature memory behaves. Rendered values are
    exact: unit peak at the center cell with a Gaussian skirt of
    sigma = max(w, h) / r / 3, true size, sub-cell offset, center
    displacement toward the previous frame, and ground-truth visibility.
    """
    hc, wc = (height + r - 1) // r, (width + r - 1) // r
    gy, gx = np.mgrid[0:hc, 0:wc]
    out: dict[int, HeadMaps] = {}
    for frame in range(1, result.frames + 1):
        heat = np.zeros((n_classes, hc, wc))
        size = np.zeros((2, hc, wc))
        offset = np.zeros((2, hc, wc))
        disp = np.zeros((2, hc, wc))
        vis = np.zeros((hc, wc))
        prev = {b.track_id: b for b in result.labels.get(frame - 1, [])}
        detectable = result.active.get(frame, set()) | result.active.get(frame - 1, set())
        for box in result.labels.get(frame, []):
            if box.track_id not in detectable:
                continue
            cx, cy = box.center()
            cellx = min(max(int(cx // r), 0), wc - 1)
            celly = min(max(int(cy // r), 0), hc - 1)
            sigma = max(max(box.w, box.h) / r / 3.0, 1e-3)
            g = np.exp(-((gx - cellx) ** 2 + (gy - celly) ** 2) / (2.0 * sigma * sigma))
            ch = heat[box.class_id]
            np.maximum(ch, g, out=ch)
            size[:, celly, cellx] = (box.w, box.h)
            offset[:, celly, cellx] = (cx / r - cellx, cy / r - celly)
            pbox = prev.get(box.track_id)
            if pbox is not None:
                pcx, pcy = pbox.center()
                disp[:, celly, cellx] = (pcx - cx, pcy - cy)
            vis[celly, cellx] = box.visibility
        out[frame] = HeadMaps(
            heatmap=heat,
            size=size,
            offset=offset,
            displacement=disp,
            visibility=vis,
            consistency=np.zeros((hc, wc)),
            r=r,
        )
    return out


# ---------------------------------------------------------------------------
# scene file grammar
# ---------------------------------------------------------------------------

_SCENE_KEYS = {
    "width": int,
    "height": int,
    "duration_us": int,
    "dt_us": int,
    "events_per_edge_pixel_per_frame": float,
    "noise_rate": float,
    "seed": int,
}
_OBJECT_KEYS = ("class_id", "track_id", "box", "z", "segment")


def parse_scene_text(text: str) -> SceneSpec:
    header: dict = {}
    objects: list[dict] = []
    current: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[object]":
            current = {"segments": []}
            objects.append(current)
            continue
        if "=" not in line:
            raise SpecValidation(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if current is None:
                if key not in _SCENE_KEYS:
                    raise SpecValidation(f"line {lineno}: unknown scene key {key!r}")
                header[key] = _SCENE_KEYS[key](value)
            else:
                if key not in _OBJECT_KEYS:
                    raise SpecValidation(f"line {lineno}: unknown object key {key!r}")
                if key == "box":
                    x, y, w, h = (float(v) for v in value.split())
                    current.update(x=x, y=y, w=w, h=h)
                elif key == "segment":
                    t0, t1, vx, vy = value.split()
                    current["segments"].append(
                        MotionSegment(int(t0), int(t1), float(vx), float(vy))
                    )
                else:
                    current[key] = int(value)
        except SpecValidation:
            raise
        except ValueError as exc:
            raise SpecValidation(f"line {lineno}: {exc}") from exc

    for req in ("width", "height", "duration_us"):
        if req not in header:
            raise SpecValidation(f"missing scene key {req!r}")
    object_specs = []
    for i, obj in enumerate(objects):
        for req in ("class_id", "track_id", "x"):
            if req not in obj:
                missing = "box" if req == "x" else req
                raise SpecValidation(f"objects[{i}]: missing key {missing!r}")
        object_specs.append(
            ObjectSpec(
                class_id=obj["class_id"],
                track_id=obj["track_id"],
                x=obj["x"],
                y=obj["y"],
                w=obj["w"],
                h=obj["h"],
                z=obj.get("z", 0),
                segments=tuple(obj["segments"]),
            )
        )
    spec = SceneSpec(objects=tuple(object_specs), **header)
    validate_scene(spec)
    return spec


def parse_scene_file(path: str | Path) -> SceneSpec:
    return parse_scene_text(Path(path).read_text(encoding="utf-8"))


def scene_to_text(spec: SceneSpec) -> str:
    lines = [
        f"width = {spec.width}",
        f"height = {spec.height}",
        f"duration_us = {spec.duration_us}",
        f"dt_us = {spec.dt_us}",
        f"events_per_edge_pixel_per_frame = {format_coord(spec.events_per_edge_pixel_per_frame)}",
        f"noise_rate = {format_coord(spec.noise_rate)}",
        f"seed = {spec.seed}",
    ]
    for obj in spec.objects:
        lines.append("")
        lines.append("[object]")
        lines.append(f"class_id = {obj.class_id}")
        lines.append(f"track_id = {obj.track_id}")
        lines.append(
            "box = "
            f"{format_coord(obj.x)} {format_coord(obj.y)} "
            f"{format_coord(obj.w)} {format_coord(obj.h)}"
        )
        lines.append(f"z = {obj.z}")
        for seg in obj.segments:
            lines.append(
                f"segment = {seg.t_start} {seg.t_end} "
                f"{format_coord(seg.vx)} {format_coord(seg.vy)}"
            )
    return "\n".join(lines) + "\n"
