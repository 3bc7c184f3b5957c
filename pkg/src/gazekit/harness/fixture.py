"""Evaluation-fixture replay.

A fixture is a CSV of (actual, estimated) screen points. Replay recomputes
the error aggregates from the raw rows: per-target mean L2 error, the 3x3
screen-grid mm statistics, and the overall pixel mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from gazekit.gaze import GridReport, ScreenSpec, evaluate_grid, gaze_error

FIXTURE_HEADER = ["actual_x", "actual_y", "est_x", "est_y"]

_ROW_NAMES = ("top", "middle", "bottom")  # cell_y 0..2
_COL_NAMES = ("left", "middle", "right")  # cell_x 0..2


@dataclass(frozen=True)
class TargetStat:
    actual: tuple
    mean_px: float
    count: int


@dataclass(frozen=True)
class ReplayReport:
    records: tuple
    targets: tuple  # TargetStat per distinct actual point, sorted by (x, y)
    grid: GridReport
    overall_mean_px: float


def load_fixture(path, screen: ScreenSpec):
    """EvalRecords from a fixture CSV; ValueError on malformed or empty files."""
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != FIXTURE_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(FIXTURE_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                ax, ay, ex, ey = (float(v) for v in row)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
            records.append(gaze_error((ax, ay), (ex, ey), screen))
    if not records:
        raise ValueError(f"{path}: fixture has no data rows")
    return records


def replay_fixture(path, screen: ScreenSpec | None = None) -> ReplayReport:
    """Recompute aggregates for a stored fixture.

    The default screen matches the shipped fixtures: 1280x720 at the
    default mm-per-px scale.
    """
    if screen is None:
        screen = ScreenSpec(1280, 720)
    records = load_fixture(path, screen)
    by_target = {}
    for rec in records:
        by_target.setdefault(rec.actual, []).append(rec.error_px)
    targets = tuple(
        TargetStat(actual, float(np.mean(errs)), len(errs))
        for actual, errs in sorted(by_target.items())
    )
    grid = evaluate_grid(records, screen)
    return ReplayReport(tuple(records), targets, grid, grid.overall_mean_px)


def format_report(report: ReplayReport) -> str:
    """Human-readable report; the machine contract stays CSV."""
    lines = ["per-target mean L2 error (px)"]
    lines.append(f"  {'actual':>16}  {'mean_px':>9}  {'n':>4}")
    for stat in report.targets:
        ax, ay = stat.actual
        lines.append(f"  ({ax:7.1f},{ay:7.1f})  {stat.mean_px:9.3f}  {stat.count:4d}")
    lines.append(
        f"overall mean: {report.overall_mean_px:.3f} px over {len(report.records)} records"
    )
    lines.append("")
    lines.append("3x3 grid, mm error mean (sigma) [n]")
    header = "  " + " " * 8 + "".join(f"{name:>22}" for name in _COL_NAMES)
    lines.append(header)
    for cy, row_name in enumerate(_ROW_NAMES):
        cells = []
        for cx in range(3):
            stat = report.grid.cells.get((cx, cy))
            if stat is None:
                cells.append(f"{'-':>22}")
            else:
                cells.append(f"{stat.mean_mm:10.2f} ({stat.std_mm:5.2f}) [{stat.count:2d}]")
        lines.append(f"  {row_name:<8}" + "".join(cells))
    return "\n".join(lines)
