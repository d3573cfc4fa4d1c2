"""Burden-error reporting: per-severity histograms as CSV and figure.

The report path always writes the delimited data (histogram.csv) and a
rendered figure next to it, one panel of |E_AF| counts per severity group
present in the evaluation.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptyInput
from .metrics import AfbReport, SeverityGroup

SEVERITY_ORDER = [
    SeverityGroup.NON_AF,
    SeverityGroup.MILD,
    SeverityGroup.MODERATE,
    SeverityGroup.SEVERE,
]

DEFAULT_BIN_EDGES = np.arange(0.0, 105.0, 5.0)


def histogram_rows(reports: list[AfbReport], bin_edges: np.ndarray = DEFAULT_BIN_EDGES,
                   ) -> list[tuple[str, float, float, int]]:
    """(severity, bin_left, bin_right, count) rows for present groups only."""
    if not reports:
        raise EmptyInput("no patient reports to bin")
    rows = []
    for severity in SEVERITY_ORDER:
        values = [r.abs_e_af_percent for r in reports if r.severity is severity]
        if not values:
            continue
        counts, edges = np.histogram(values, bins=bin_edges)
        for left, right, count in zip(edges[:-1], edges[1:], counts):
            rows.append((severity.value, float(left), float(right), int(count)))
    return rows


def write_histogram_csv(reports: list[AfbReport], path: str | Path,
                        bin_edges: np.ndarray = DEFAULT_BIN_EDGES) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["severity", "bin_left", "bin_right", "count"])
        for row in histogram_rows(reports, bin_edges):
            writer.writerow(row)


def render_histogram_figure(reports: list[AfbReport], path: str | Path,
                            bin_edges: np.ndarray = DEFAULT_BIN_EDGES,
                            title: str | None = None) -> None:
    """Render one histogram panel per present severity group to an image file."""
    if not reports:
        raise EmptyInput("no patient reports to plot")
    present = [
        s for s in SEVERITY_ORDER if any(r.severity is s for r in reports)
    ]
    fig, axes = plt.subplots(
        1, len(present), figsize=(3.2 * len(present), 3.0), squeeze=False, sharey=True
    )
    for ax, severity in zip(axes[0], present):
        values = [r.abs_e_af_percent for r in reports if r.severity is severity]
        ax.hist(values, bins=bin_edges, color="#3465a4", edgecolor="black", linewidth=0.4)
        ax.set_title(f"{severity.value} (n={len(values)})", fontsize=10)
        ax.set_xlabel("|E_AF| (%)", fontsize=9)
        ax.tick_params(labelsize=8)
    axes[0][0].set_ylabel("patients", fontsize=9)
    if title:
        fig.suptitle(title, fontsize=11)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_patients_csv(reports: list[AfbReport], path: str | Path) -> None:
    """Per-patient burden table: record_id,afb_ref,afb_pred,e_af,abs_e_af,severity."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "afb_ref", "afb_pred", "e_af", "abs_e_af", "severity"])
        for r in reports:
            writer.writerow([
                r.record_id,
                f"{r.afb_percent:.6f}",
                f"{r.afb_pred_percent:.6f}",
                f"{r.e_af_percent:.6f}",
                f"{r.abs_e_af_percent:.6f}",
                r.severity.value,
            ])


def read_patients_csv(path: str | Path) -> list[AfbReport]:
    path = Path(path)
    reports = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            reports.append(
                AfbReport(
                    record_id=row["record_id"],
                    afb_percent=float(row["afb_ref"]),
                    afb_pred_percent=float(row["afb_pred"]),
                    e_af_percent=float(row["e_af"]),
                    abs_e_af_percent=float(row["abs_e_af"]),
                    severity=SeverityGroup(row["severity"]),
                )
            )
    return reports
