"""Regenerate the checked-in golden outputs from scene.spec.

Run from the repository root:

    python3 tests/golden/regen.py

Rewrites autolabel.csv, report.csv, and render_000008.png next to this
script by driving the CLI exactly the way the golden test does.
"""

import shutil
import tempfile
from pathlib import Path

from click.testing import CliRunner

from evtrack.cli import cli

GOLDEN = Path(__file__).resolve().parent


def run(*args):
    result = CliRunner().invoke(cli, [str(a) for a in args])
    if result.exit_code != 0:
        raise SystemExit(f"command {args} failed:\n{result.output}")
    return result


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        events, gt = tmp / "events.evs1", tmp / "gt.csv"
        run("synth", "--spec", GOLDEN / "scene.spec", "--events", events, "--labels", gt)
        run("convert", "--events", events, "--outdir", tmp / "tensors", "--repr", "volume")
        run("autolabel", "--events", events, "--labels", gt, "--output", tmp / "clean.csv")
        run(
            "eval", "--gt", gt, "--dets", tmp / "clean.csv",
            "--output", tmp / "report.csv", "--split-visibility",
        )
        run("render", "--events", events, "--labels", tmp / "clean.csv",
            "--outdir", tmp / "frames")
        shutil.copy(tmp / "clean.csv", GOLDEN / "autolabel.csv")
        shutil.copy(tmp / "report.csv", GOLDEN / "report.csv")
        shutil.copy(tmp / "frames" / "000008.png", GOLDEN / "render_000008.png")
    print("golden files regenerated")


if __name__ == "__main__":
    main()
