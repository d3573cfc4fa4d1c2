"""Window- and patient-level performance statistics.

Window statistics: sensitivity, specificity, positive predictive value,
F1 and AUROC.  Patient statistics: AF burden (time-weighted fraction of
positive windows, as a percent), the signed burden estimation error, and
the four-way severity grouping.

Undefined ratios (zero denominators) are reported as 0.0 together with an
explicit flag rather than NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyInput, LengthMismatch, OneClassOnly

#: Severity thresholds: seconds of AF below which a patient is Non-AF,
#: and the burden percentages separating mild / moderate / severe.
NON_AF_MAX_TIME_S = 30.0
MILD_MAX_AFB_PCT = 4.0
MODERATE_MAX_AFB_PCT = 80.0


class SeverityGroup(Enum):
    NON_AF = "NonAF"
    MILD = "Mild"
    MODERATE = "Moderate"
    SEVERE = "Severe"


@dataclass(frozen=True)
class MetricsReport:
    se: float
    sp: float
    ppv: float
    f1: float
    auroc: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    undefined: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "se": self.se, "sp": self.sp, "ppv": self.ppv, "f1": self.f1,
            "auroc": self.auroc, "threshold": self.threshold,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "undefined": list(self.undefined),
        }


@dataclass(frozen=True)
class AfbReport:
    record_id: str
    afb_percent: float
    afb_pred_percent: float
    e_af_percent: float
    abs_e_af_percent: float
    severity: SeverityGroup


def confusion_metrics(pred_binary, labels, threshold: float = 0.5,
                      auroc_value: float = 0.0) -> MetricsReport:
    """Se/Sp/PPV/F1 from binary predictions; zero denominators flag as undefined."""
    pred = np.asarray(pred_binary)
    y = np.asarray(labels)
    if pred.shape != y.shape:
        raise LengthMismatch(f"predictions shape {pred.shape} != labels shape {y.shape}")
    pred = pred.astype(bool)
    y = y.astype(bool)
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    tn = int(np.sum(~pred & ~y))
    fn = int(np.sum(~pred & y))

    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    se = ratio(tp, tp + fn, "se")
    sp = ratio(tn, tn + fp, "sp")
    ppv = ratio(tp, tp + fp, "ppv")
    f1 = ratio(2 * ppv * se, ppv + se, "f1")
    return MetricsReport(
        se=se, sp=sp, ppv=ppv, f1=f1, auroc=auroc_value, threshold=threshold,
        tp=tp, fp=fp, tn=tn, fn=fn, undefined=tuple(undefined),
    )


def f1_score(pred_binary, labels) -> float:
    """F1 alone (0.0 when undefined); cheap path for threshold sweeps."""
    pred = np.asarray(pred_binary).astype(bool)
    y = np.asarray(labels).astype(bool)
    tp = np.sum(pred & y)
    denom = 2 * tp + np.sum(pred & ~y) + np.sum(~pred & y)
    return float(2 * tp / denom) if denom > 0 else 0.0


def auroc(probs, labels) -> float:
    """Area under the ROC curve via rank sums (Mann-Whitney probability).

    Equals the fraction of (positive, negative) pairs ranked correctly,
    counting ties as half.  O(n log n).
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise LengthMismatch(f"probs shape {p.shape} != labels shape {y.shape}")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    ranks = _midranks(p)
    rank_sum_pos = float(ranks[y].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def afb(labels, lengths_s) -> float:
    """AF burden percent: 100 * sum(l_i * y_i) / sum(l_i)."""
    y = np.asarray(labels, dtype=np.float64)
    lengths = np.asarray(lengths_s, dtype=np.float64)
    if y.size == 0:
        raise EmptyInput("afb needs at least one window")
    if y.shape != lengths.shape:
        raise LengthMismatch(f"labels shape {y.shape} != lengths shape {lengths.shape}")
    if np.any(lengths <= 0):
        raise ValueError("window lengths must be positive")
    return 100.0 * float(np.sum(lengths * y) / np.sum(lengths))


def e_af(pred_labels, ref_labels, lengths_s) -> float:
    """Signed AF-burden estimation error percent:
    100 * sum(l_i * (yhat_i - y_i)) / sum(l_i)."""
    yhat = np.asarray(pred_labels, dtype=np.float64)
    y = np.asarray(ref_labels, dtype=np.float64)
    lengths = np.asarray(lengths_s, dtype=np.float64)
    if not (yhat.shape == y.shape == lengths.shape):
        raise LengthMismatch(
            f"shapes disagree: preds {yhat.shape}, refs {y.shape}, lengths {lengths.shape}"
        )
    if y.size == 0:
        raise EmptyInput("e_af needs at least one window")
    return 100.0 * float(np.sum(lengths * (yhat - y)) / np.sum(lengths))


def severity_group(total_af_time_s: float, afb_percent: float) -> SeverityGroup:
    """Four-way grouping: < 30 s AF is Non-AF; otherwise burden < 4 % is
    mild, burden in [4, 80] moderate, above 80 severe."""
    if total_af_time_s < 0:
        raise ValueError("total_af_time_s must be >= 0")
    if not 0.0 <= afb_percent <= 100.0:
        raise ValueError("afb_percent must be in [0, 100]")
    if total_af_time_s < NON_AF_MAX_TIME_S:
        return SeverityGroup.NON_AF
    if afb_percent < MILD_MAX_AFB_PCT:
        return SeverityGroup.MILD
    if afb_percent <= MODERATE_MAX_AFB_PCT:
        return SeverityGroup.MODERATE
    return SeverityGroup.SEVERE


@dataclass
class PatientWindows:
    """One record's per-window predictions and references."""

    record_id: str
    pred_labels: np.ndarray
    ref_labels: np.ndarray
    lengths_s: np.ndarray


@dataclass
class PatientSummary:
    reports: list[AfbReport]
    median_abs_e_af: float
    q1_abs_e_af: float
    q3_abs_e_af: float


def patient_report(patients: list[PatientWindows]) -> PatientSummary:
    """Per-record burden reports plus median / Q1 / Q3 of |E_AF|.

    Severity is taken from the reference labels: total AF time is the
    summed length of positive reference windows.
    """
    if not patients:
        raise EmptyInput("patient_report needs at least one record")
    reports = []
    for p in patients:
        ref = np.asarray(p.ref_labels, dtype=np.float64)
        lengths = np.asarray(p.lengths_s, dtype=np.float64)
        if ref.size == 0:
            raise EmptyInput(f"record {p.record_id!r} has no windows")
        afb_ref = afb(ref, lengths)
        afb_pred = afb(p.pred_labels, lengths)
        err = e_af(p.pred_labels, ref, lengths)
        total_af_time = float(np.sum(lengths * ref))
        reports.append(
            AfbReport(
                record_id=p.record_id,
                afb_percent=afb_ref,
                afb_pred_percent=afb_pred,
                e_af_percent=err,
                abs_e_af_percent=abs(err),
                severity=severity_group(total_af_time, afb_ref),
            )
        )
    abs_errs = np.array([r.abs_e_af_percent for r in reports])
    q1, med, q3 = np.quantile(abs_errs, [0.25, 0.5, 0.75])
    return PatientSummary(
        reports=reports, median_abs_e_af=float(med), q1_abs_e_af=float(q1),
        q3_abs_e_af=float(q3),
    )
