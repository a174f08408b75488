"""Accuracy of predicted satisfaction surfaces against a naive baseline."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiment import RunReport, read_table_csv


class EmptySelectionError(ValueError):
    """No baseline point exceeds the threshold."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    """Statistics of absolute errors on the retained points.

    ``error_std`` is a standard deviation (not a variance).
    """

    error_mean: float
    error_std: float
    error_max: float
    rmse: float
    n_retained: int


def metrics(predicted, baseline, threshold: float = 0.02) -> Metrics:
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    baseline = np.asarray(baseline, dtype=float).reshape(-1)
    if predicted.shape != baseline.shape:
        raise GridMismatchError("surfaces have different sizes")
    keep = baseline > threshold
    if not keep.any():
        raise EmptySelectionError(f"no baseline value exceeds threshold {threshold}")
    diff = predicted[keep] - baseline[keep]
    err = np.abs(diff)
    return Metrics(
        error_mean=float(err.mean()),
        error_std=float(err.std()),
        error_max=float(err.max()),
        rmse=float(np.sqrt(np.mean(diff**2))),
        n_retained=int(keep.sum()),
    )


@dataclass
class SurfaceRecord:
    """What a comparison needs from a run: the surface and its timings."""

    name: str
    points: np.ndarray
    mean: np.ndarray
    timings: dict

    @classmethod
    def from_report(cls, name: str, report: RunReport) -> "SurfaceRecord":
        return cls(name, report.eval_points, report.surface_mean, dict(report.timings))

    @classmethod
    def from_dir(cls, directory, name: str | None = None) -> "SurfaceRecord":
        d = Path(directory)
        points, cols = read_table_csv(d / "surface.csv", ["mean"])
        meta_path = d / "metadata.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(name or meta.get("method", d.name), points, cols["mean"], meta.get("timings", {}))


def _check_grid(a: np.ndarray, b: np.ndarray, name: str):
    if a.shape != b.shape or not np.allclose(a, b, rtol=1e-9, atol=1e-12):
        raise GridMismatchError(f"{name}: evaluation grid differs from the baseline grid")


COLUMNS = ["method", "error_mean", "error_std", "max", "rmse", "n", "ssa", "inference", "query", "total"]


def compare_reports(records, baseline_points, baseline_values, threshold: float = 0.02) -> list[dict]:
    """One row per method: accuracy metrics and the timing breakdown."""
    records = list(records)
    if not records:
        raise ValueError("nothing to compare")
    baseline_points = np.asarray(baseline_points, dtype=float)
    rows = []
    for rec in records:
        _check_grid(np.asarray(rec.points, dtype=float), baseline_points, rec.name)
        m = metrics(rec.mean, baseline_values, threshold)
        t = rec.timings
        rows.append(
            {
                "method": rec.name,
                "error_mean": m.error_mean,
                "error_std": m.error_std,
                "max": m.error_max,
                "rmse": m.rmse,
                "n": m.n_retained,
                "ssa": t.get("ssa"),
                "inference": t.get("inference"),
                "query": t.get("query"),
                "total": t.get("total"),
            }
        )
    return rows


def _fmt(v) -> str:
    if v is None:
        return "N/A"
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) >= 1e-3 or v == 0 else f"{v:.2e}"
    return str(v)


def format_table(rows: list[dict]) -> str:
    cells = [COLUMNS] + [[_fmt(r[c]) for c in COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in COLUMNS})
    return buf.getvalue()
