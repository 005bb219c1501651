#!/usr/bin/env python3
"""Render log-log convergence figures from rate-report CSV/JSON pairs.

Consumes the files the sweep harness emits: the CSV point table and the
JSON report with the fitted slope.  The script never refits the points;
the annotated slope is read from the JSON so figure and report cannot
disagree.  All parsing happens before the figure is created, so a bad
input leaves no output file behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

FIGSIZE = (6.0, 4.5)
DPI = 150


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    json_path: str
    out_path: str
    reference_slopes: tuple = ()
    title: str = ""
    label: str = "error"

    def __post_init__(self):
        for path in (self.csv_path, self.json_path):
            if not Path(path).is_file():
                raise FileNotFoundError(f"input file not found: {path}")
        for q in self.reference_slopes:
            if not math.isfinite(q):
                raise ValueError(f"reference slopes must be finite, got {q}")


def read_points(csv_path):
    """(epsilon, error) rows from a report CSV; extra columns are ignored."""
    with open(csv_path, newline="") as handle:
        reader = csv.DictReader(handle)
        cols = reader.fieldnames or []
        if "epsilon" not in cols or "error" not in cols:
            raise ValueError(
                f"{csv_path}: need epsilon and error columns, got {cols}"
            )
        points = [(float(row["epsilon"]), float(row["error"])) for row in reader]
    if not points:
        raise ValueError(f"{csv_path}: no data rows")
    if any(e <= 0.0 or v <= 0.0 for e, v in points):
        raise ValueError(f"{csv_path}: log-log axes need positive values")
    return points


def read_report(json_path):
    """Slope and intercept of the stored fit; never recomputed here."""
    try:
        payload = json.loads(Path(json_path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{json_path}: not valid JSON: {exc}") from exc
    try:
        slope = float(payload["slope"])
        intercept = float(payload["intercept"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{json_path}: not a rate report: {exc}") from exc
    if not (math.isfinite(slope) and math.isfinite(intercept)):
        raise ValueError(f"{json_path}: fit parameters must be finite")
    return slope, intercept


def render_rate_figure(spec: FigureSpec) -> dict:
    points = read_points(spec.csv_path)
    slope, intercept = read_report(spec.json_path)
    eps = [p[0] for p in points]
    err = [p[1] for p in points]
    lo, hi = min(eps), max(eps)
    annotation = f"slope {slope:.2f}"

    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.loglog(eps, err, "o", color="#1f77b4", label=spec.label, zorder=3)
    span = (lo, hi)
    ax.loglog(span, [math.exp(intercept) * x**slope for x in span],
              "-", color="#d62728", label=f"fit: {annotation}")
    # dashed guides anchored at the smallest-epsilon point
    y_anchor = err[eps.index(lo)]
    for q in spec.reference_slopes:
        ax.loglog(span, [y_anchor * (x / lo) ** q for x in span],
                  "--", color="0.45", linewidth=1.0,
                  label=f"reference slope {q:g}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel(spec.label)
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best")
    # axis ranges fixed by the data alone, so equal inputs give equal bytes
    ax.set_xlim(lo / 2.0, hi * 2.0)
    ax.set_ylim(min(err) / 4.0, max(err) * 4.0)
    fig.tight_layout()
    fig.savefig(spec.out_path)
    plt.close(fig)
    return {
        "out": spec.out_path,
        "annotation": annotation,
        "slope": slope,
        "n_points": len(points),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_rates",
        description="log-log convergence figure from a rate-report CSV/JSON pair",
    )
    parser.add_argument("--csv", required=True, help="report CSV (epsilon,error,...)")
    parser.add_argument("--json", required=True, help="report JSON with the fit")
    parser.add_argument("--out", required=True, help="output image path (.png)")
    parser.add_argument("--reference", action="append", type=float, default=[],
                        help="dashed reference slope; repeatable")
    parser.add_argument("--title", default="")
    parser.add_argument("--label", default="error")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            csv_path=args.csv,
            json_path=args.json,
            out_path=args.out,
            reference_slopes=tuple(args.reference),
            title=args.title,
            label=args.label,
        )
        result = render_rate_figure(spec)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result['out']} ({result['annotation']}, "
          f"{result['n_points']} points)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
