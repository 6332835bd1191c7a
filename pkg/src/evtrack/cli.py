"""Command-line pipeline: convert, autolabel, track, eval, synth, render,
consistency-check.

Exit codes: 0 success, 2 malformed input, 3 semantic mismatch between
inputs, 4 scene-spec validation failure. Every subcommand is
deterministic given its inputs and flags, including --jobs.
"""

from __future__ import annotations

import csv
import functools
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import consistency as consistency_mod
from . import metrics, representations, synth
from .autolabel import AutoLabelParams, autolabel_sequence
from .errors import EvtrackError, FormatError, SemanticError, SpecValidation
from .events import DEFAULT_DT_US, frame_count, read_event_file, window_iter, write_event_file
from .fileio import atomic_write_text
from .labels import LabeledBox, read_label_csv, write_label_csv
from .render import render_frame
from ._png import write_png
from .tracker import Detection, PermanenceTracker, read_head_maps_dir

REPRESENTATIONS = ("histogram", "timestamp", "timesurface", "volume", "occupancy")


def _exit_code(err: EvtrackError) -> int:
    if isinstance(err, FormatError):
        return 2
    if isinstance(err, SpecValidation):
        return 4
    if isinstance(err, SemanticError):
        return 3
    return 3


def mapped_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except EvtrackError as err:
            click.echo(f"error: {type(err).__name__}: {err}", err=True)
            sys.exit(_exit_code(err))

    return wrapper


@click.group()
def cli():
    """Event-camera detection pipeline."""


@cli.command()
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
@click.option("--repr", "repr_name", type=click.Choice(REPRESENTATIONS), default="volume",
              show_default=True, help="Dense representation to write, one TNS1 file per frame.")
@click.option("--bins", default=5, show_default=True, help="Micro time bins for --repr volume.")
@click.option("--dt-us", default=DEFAULT_DT_US, show_default=True, help="Window length in microseconds.")
@click.option("--tau-us", default=None, type=float, help="Time-surface decay; defaults to the window length.")
@mapped_errors
def convert(events_path, outdir, repr_name, bins, dt_us, tau_us):
    """Convert an EVS1 event file into per-frame dense tensors."""
    stream = read_event_file(events_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    count = 0
    for window in window_iter(stream, dt_us):
        if repr_name == "histogram":
            tensor = representations.event_histogram(window, stream.height, stream.width)
        elif repr_name == "timestamp":
            tensor = representations.timestamp_map(window, stream.height, stream.width)
        elif repr_name == "timesurface":
            tensor = representations.time_surface(window, stream.height, stream.width, tau_us)
        elif repr_name == "volume":
            tensor = representations.event_volume(window, bins, stream.height, stream.width)
        else:
            tensor = representations.occupancy_mask(window, stream.height, stream.width)
        representations.write_tensor_file(outdir / f"{window.index:06d}.tns1", tensor)
        count += 1
    click.echo(f"wrote {count} tensor files to {outdir}")


def _autolabel_one(events_path, labels_path, output_path, params: AutoLabelParams):
    stream = read_event_file(events_path)
    labels = read_label_csv(labels_path)
    max_frame = max(labels, default=0)
    windows = list(window_iter(stream, params.dt_us, min_frames=max_frame))
    cleaned = autolabel_sequence(windows, labels, params)
    write_label_csv(output_path, cleaned, params.dt_us)
    boxes_in = sum(len(v) for v in labels.values())
    emitted = [b for v in cleaned.values() for b in v]
    still = sum(1 for b in emitted if b.visibility == 0.0)
    return {
        "frames": len(windows),
        "in": boxes_in,
        "out": len(emitted),
        "dropped": boxes_in - len(emitted),
        "still": still,
        "moving": len(emitted) - still,
    }


@cli.command()
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="EVS1 file, or a directory of them for batch mode.")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
              help="Label CSV, or a directory pairing the events by file stem.")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--dt-us", default=DEFAULT_DT_US, show_default=True, help="Window length in microseconds.")
@click.option("--d-value", default=0.03, show_default=True, help="Normalized displacement threshold.")
@click.option("--o-value", default=0.1, show_default=True, help="Occupancy rate threshold.")
@click.option("--jobs", default=1, show_default=True, help="Recordings processed in parallel (batch mode).")
@mapped_errors
def autolabel(events_path, labels_path, output_path, dt_us, d_value, o_value, jobs):
    """Assign still/moving visibility labels and drop undetectable boxes."""
    params = AutoLabelParams(dt_us=dt_us, d_value=d_value, o_value=o_value)
    events_path = Path(events_path)
    if events_path.is_dir():
        labels_dir, out_dir = Path(labels_path), Path(output_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        stems = sorted(p.stem for p in events_path.glob("*.evs1"))
        jobs = max(1, jobs)

        def run(stem: str):
            return stem, _autolabel_one(
                events_path / f"{stem}.evs1",
                labels_dir / f"{stem}.csv",
                out_dir / f"{stem}.csv",
                params,
            )

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(run, stems))
        for stem in stems:
            s = results[stem]
            click.echo(
                f"{stem}: frames {s['frames']}  boxes in {s['in']}  out {s['out']}  "
                f"dropped {s['dropped']}  still {s['still']}  moving {s['moving']}"
            )
    else:
        s = _autolabel_one(events_path, labels_path, output_path, params)
        click.echo(
            f"frames {s['frames']}  boxes in {s['in']}  out {s['out']}  "
            f"dropped {s['dropped']}  still {s['still']}  moving {s['moving']}"
        )


@cli.command()
@click.option("--maps", "maps_dir", type=click.Path(exists=True),
              help="Directory of {frame:06d}_{P,S,O,D,V,C}.tns1 head-map files.")
@click.option("--dets", "dets_path", type=click.Path(exists=True),
              help="Detections CSV (zero displacement assumed).")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--conf", default=0.4, show_default=True, help="Score threshold for decoded peaks.")
@click.option("--v-thresh", default=0.5, show_default=True, help="Visibility below this marks a track still.")
@click.option("--top-k", default=100, show_default=True, help="Maximum detections per frame.")
@click.option("--max-age-move", default=5, show_default=True, help="Misses before a moving track drops.")
@click.option("--permanence/--no-permanence", default=True, show_default=True,
              help="Replay still tracks through detection gaps.")
@click.option("--dt-us", default=DEFAULT_DT_US, show_default=True, help="Window length for output timestamps.")
@mapped_errors
def track(maps_dir, dets_path, output_path, conf, v_thresh, top_k, max_age_move, permanence, dt_us):
    """Run the permanence tracker over head maps or a detections CSV."""
    if (maps_dir is None) == (dets_path is None):
        raise SemanticError("exactly one of --maps or --dets is required")
    tracker = PermanenceTracker(v_thresh=v_thresh, max_age_move=max_age_move, permanence=permanence)
    out: dict[int, list[LabeledBox]] = {}
    if maps_dir is not None:
        from .tracker import decode_detections

        for frame, maps in read_head_maps_dir(maps_dir):
            out[frame] = tracker.step(decode_detections(maps, conf, top_k), frame)
    else:
        frames = read_label_csv(dets_path)
        for frame in range(1, max(frames, default=0) + 1):
            dets = [
                Detection(
                    cx=b.x + b.w / 2.0,
                    cy=b.y + b.h / 2.0,
                    w=b.w,
                    h=b.h,
                    class_id=b.class_id,
                    score=b.confidence,
                    dx=0.0,
                    dy=0.0,
                    visibility=1.0 if b.visibility is None else b.visibility,
                )
                for b in frames.get(frame, [])
                if b.confidence >= conf
            ]
            out[frame] = tracker.step(dets, frame)
    write_label_csv(output_path, out, dt_us)
    total = sum(len(v) for v in out.values())
    click.echo(f"tracked {len(out)} frames, emitted {total} boxes")


def _report_rows(summary: metrics.EvalSummary, report: metrics.MatchReport, suffix: str = ""):
    rows = [
        (f"map50{suffix}", "all", f"{summary.map50:.6f}"),
        (f"map{suffix}", "all", f"{summary.map:.6f}"),
    ]
    for cls in sorted(summary.ap50):
        rows.append((f"ap50{suffix}", str(cls), f"{summary.ap50[cls]:.6f}"))
    scopes = [(str(c), report.per_class[c]) for c in sorted(report.per_class)]
    scopes.append(("all", report.total))
    for name, counts in scopes:
        rows.append((f"gt{suffix}", name, str(counts.gt)))
        rows.append((f"dt{suffix}", name, str(counts.dt)))
        rows.append((f"tp{suffix}", name, str(counts.tp)))
        rows.append((f"fp_wrong_id{suffix}", name, str(counts.fp_wrong_id)))
        rows.append((f"fp_wrong_box{suffix}", name, str(counts.fp_wrong_box)))
        rows.append((f"fp{suffix}", name, str(counts.fp)))
        rows.append((f"fn{suffix}", name, str(counts.fn)))
        rows.append((f"precision{suffix}", name, f"{counts.precision:.6f}"))
        rows.append((f"recall{suffix}", name, f"{counts.recall:.6f}"))
    return rows


def _text_report(summary, report, title: str) -> list[str]:
    lines = [
        title,
        f"  mAP@0.50      {summary.map50:.4f}",
        f"  mAP@.50:.95   {summary.map:.4f}",
        f"  counts at conf {report.conf:g}, IoU {report.iou_thresh:g}:",
        "  class        GT      DT      TP  FP(id) FP(box)      FN   prec  recall",
    ]
    scopes = [(str(c), report.per_class[c]) for c in sorted(report.per_class)]
    scopes.append(("all", report.total))
    for name, c in scopes:
        lines.append(
            f"  {name:<9}{c.gt:>7}{c.dt:>8}{c.tp:>8}{c.fp_wrong_id:>8}"
            f"{c.fp_wrong_box:>8}{c.fn:>8}{c.precision:>7.3f}{c.recall:>8.3f}"
        )
    return lines


@cli.command("eval")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path(),
              help="Machine-readable metric,class,value CSV.")
@click.option("--iou", default=0.5, show_default=True, help="IoU threshold for the count table.")
@click.option("--conf", default=0.4, show_default=True, help="Confidence cut for the count table.")
@click.option("--split-visibility", is_flag=True,
              help="Also evaluate still (visibility 0.0) and moving (1.0) ground truth separately.")
@mapped_errors
def eval_cmd(gt_path, dets_path, output_path, iou, conf, split_visibility):
    """Evaluate detections against ground truth (greedy matching, 101-point AP)."""
    gts = read_label_csv(gt_path)
    dets = read_label_csv(dets_path)
    summary = metrics.map_eval(dets, gts)
    report = metrics.fine_grained(dets, gts, conf=conf, iou_thresh=iou)
    rows = _report_rows(summary, report)
    lines = _text_report(summary, report, "detection evaluation")
    if split_visibility:
        still, moving = metrics.split_still_moving(gts)
        for name, subset, other in (("still", still, moving), ("moving", moving, still)):
            sub_summary = metrics.map_eval(dets, subset, ignore_gts=other)
            sub_report = metrics.fine_grained(dets, subset, conf=conf, iou_thresh=iou, ignore_gts=other)
            rows.extend(_report_rows(sub_summary, sub_report, suffix=f"_{name}"))
            lines.extend(_text_report(sub_summary, sub_report, f"{name} ground truth only"))
    text = "metric,class,value\n" + "".join(",".join(r) + "\n" for r in rows)
    atomic_write_text(output_path, text)
    click.echo("\n".join(lines))


@cli.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", required=True, type=click.Path())
@mapped_errors
def synth_cmd(spec_path, events_path, labels_path):
    """Generate a synthetic scene: EVS1 events plus ground-truth labels."""
    spec = synth.parse_scene_file(spec_path)
    result = synth.generate(spec)
    write_event_file(events_path, result.stream)
    write_label_csv(labels_path, result.labels, spec.dt_us)
    click.echo(
        f"generated {len(result.stream)} events over {result.frames} frames, "
        f"{sum(len(v) for v in result.labels.values())} boxes"
    )


@cli.command()
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
@click.option("--dt-us", default=DEFAULT_DT_US, show_default=True, help="Window length in microseconds.")
@mapped_errors
def render(events_path, labels_path, outdir, dt_us):
    """Write one PNG per frame: events colored by polarity, boxes by class."""
    stream = read_event_file(events_path)
    labels = read_label_csv(labels_path) if labels_path else {}
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    max_frame = max(max(labels, default=0), frame_count(stream, dt_us))
    count = 0
    for window in window_iter(stream, dt_us, min_frames=max_frame):
        img = render_frame(window, labels.get(window.index, []), stream.width, stream.height)
        write_png(outdir / f"{window.index:06d}.png", img)
        count += 1
    click.echo(f"rendered {count} frames to {outdir}")


@cli.command("consistency-check")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True),
              help="CSV with dx,dy,c,v columns, one visible-object sample per row.")
@mapped_errors
def consistency_check(samples_path):
    """Evaluate the consistency penalty and its gradients on sampled centers."""
    with open(samples_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"dx", "dy", "c", "v"} <= set(reader.fieldnames):
            raise FormatError("samples csv needs columns dx,dy,c,v")
        try:
            rows = [
                (float(r["dx"]), float(r["dy"]), float(r["c"]), float(r["v"]))
                for r in reader
            ]
        except (TypeError, ValueError) as exc:
            raise FormatError(f"samples csv: {exc}") from exc
    d = np.array([(dx, dy) for dx, dy, _, _ in rows], np.float64).reshape(-1, 2)
    c = np.array([c for _, _, c, _ in rows], np.float64)
    v = np.array([v for _, _, _, v in rows], np.float64)
    assert np.all(v >= 0.5), "consistency samples must come from visible objects"
    loss = consistency_mod.consistency_loss(d, c, v)
    gd, gc, gv = consistency_mod.consistency_loss_grad(d, c, v)
    click.echo(f"samples: {len(rows)}")
    click.echo(f"loss: {loss:.9f}")
    click.echo(
        f"grad norms: d {np.linalg.norm(gd):.9f}  c {np.linalg.norm(gc):.9f}  "
        f"v {np.linalg.norm(gv):.9f}"
    )


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
