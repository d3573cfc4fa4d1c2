"""Paired model benchmarking on the 5-second grid.

The F1 of both models is recomputed on many random subsets of the test
records (sampling without replacement, patient record as the resampling
unit) and the two resulting F1 distributions are compared with the
Mann-Whitney rank test.  Slots where either model lacks a prediction are
excluded from both models' F1 so the comparison stays paired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, TooFewRecords
from .windowing import AlignmentGrid

DEFAULT_ALPHA = 0.05


@dataclass
class BootstrapResult:
    f1_a: np.ndarray
    f1_b: np.ndarray
    model_a: str
    model_b: str
    n_iter: int
    frac: float
    seed: int


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_value: float
    n_a: int
    n_b: int


@dataclass(frozen=True)
class ComparisonSummary:
    median_f1_a: float
    median_f1_b: float
    u_statistic: float
    p_value: float
    winner: str  # model_a name, model_b name, or "tie"


def _per_record_confusion(grids: list[AlignmentGrid], model_a: str, model_b: str,
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Per-record (tp, fp, fn) counts for each model on the shared covered slots."""
    counts_a = np.zeros((len(grids), 3), dtype=np.int64)
    counts_b = np.zeros((len(grids), 3), dtype=np.int64)
    for i, grid in enumerate(grids):
        mask = grid.covered([model_a, model_b])
        ref = grid.reference[mask].astype(bool)
        for counts, model in ((counts_a, model_a), (counts_b, model_b)):
            pred = grid.predictions[model][mask].astype(bool)
            counts[i, 0] = np.sum(pred & ref)
            counts[i, 1] = np.sum(pred & ~ref)
            counts[i, 2] = np.sum(~pred & ref)
    return counts_a, counts_b


def _f1_from_counts(counts: np.ndarray) -> float:
    tp, fp, fn = counts
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom > 0 else 0.0


def bootstrap_f1(grids: list[AlignmentGrid], model_a: str, model_b: str,
                 n_iter: int = 1000, frac: float = 0.8, seed: int = 0,
                 ) -> BootstrapResult:
    """F1 of both models over n_iter random record subsets.

    Each iteration draws floor(frac * n_records) records without
    replacement, pools their covered slots, and scores both models on the
    identical sample.  Fully determined by the seed; iteration k uses a
    sub-generator derived from (seed, k).
    """
    n_records = len(grids)
    if n_records < 2:
        raise TooFewRecords(f"need at least 2 test records, got {n_records}")
    n_sample = int(np.floor(frac * n_records))
    if n_sample < 1:
        raise TooFewRecords(f"frac {frac} yields an empty sample of {n_records} records")

    counts_a, counts_b = _per_record_confusion(grids, model_a, model_b)
    f1_a = np.empty(n_iter)
    f1_b = np.empty(n_iter)
    for k in range(n_iter):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        chosen = rng.choice(n_records, size=n_sample, replace=False)
        f1_a[k] = _f1_from_counts(counts_a[chosen].sum(axis=0))
        f1_b[k] = _f1_from_counts(counts_b[chosen].sum(axis=0))
    return BootstrapResult(
        f1_a=f1_a, f1_b=f1_b, model_a=model_a, model_b=model_b,
        n_iter=n_iter, frac=frac, seed=seed,
    )


def _midranks(values: np.ndarray) -> np.ndarray:
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


def _exact_u_distribution(n_a: int, n_b: int) -> np.ndarray:
    """count[u] of rank assignments with U statistic u, for tie-free samples.

    Classic recurrence over placing the next value into sample a or b.
    """
    max_u = n_a * n_b
    table = {(0, 0): np.array([1.0])}

    def counts(a: int, b: int) -> np.ndarray:
        if (a, b) in table:
            return table[(a, b)]
        out = np.zeros(a * b + 1)
        if a > 0:
            prev = counts(a - 1, b)
            out[b : b + prev.size] += prev  # largest value goes to sample a
        if b > 0:
            prev = counts(a, b - 1)
            out[: prev.size] += prev  # largest value goes to sample b
        table[(a, b)] = out
        return out

    dist = counts(n_a, n_b)
    assert dist.size == max_u + 1
    return dist


def mann_whitney_u(sample_a, sample_b, exact: bool | None = None) -> MannWhitneyResult:
    """Two-sided Mann-Whitney rank test.

    U is computed from rank sums with midrank tie handling.  The p-value
    uses the normal approximation with tie-corrected variance and a 0.5
    continuity correction; for small tie-free samples (both sizes <= 8,
    or ``exact=True``) the p-value comes from exact enumeration instead.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n_a, n_b = a.size, b.size
    if n_a == 0 or n_b == 0:
        raise EmptySample(f"both samples must be non-empty, got {n_a} and {n_b}")

    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    rank_sum_a = float(ranks[:n_a].sum())
    u_a = rank_sum_a - n_a * (n_a + 1) / 2.0

    has_ties = np.unique(pooled).size < pooled.size
    if exact is None:
        exact = n_a <= 8 and n_b <= 8 and not has_ties
    if exact and has_ties:
        raise ValueError("exact enumeration requires tie-free samples")

    if exact:
        dist = _exact_u_distribution(n_a, n_b)
        total = dist.sum()
        u_int = int(round(u_a))
        p_low = dist[: u_int + 1].sum() / total
        p_high = dist[u_int:].sum() / total
        p = min(1.0, 2.0 * min(p_low, p_high))
        return MannWhitneyResult(u_statistic=u_a, p_value=float(p), n_a=n_a, n_b=n_b)

    n = n_a + n_b
    mean_u = n_a * n_b / 2.0
    # Tie correction: subtract sum(t^3 - t) over tie groups from the variance.
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
    var_u = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var_u <= 0:
        return MannWhitneyResult(u_statistic=u_a, p_value=1.0, n_a=n_a, n_b=n_b)
    z = (abs(u_a - mean_u) - 0.5) / math.sqrt(var_u)
    z = max(z, 0.0)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return MannWhitneyResult(u_statistic=u_a, p_value=p, n_a=n_a, n_b=n_b)


def compare_models(result: BootstrapResult, alpha: float = DEFAULT_ALPHA,
                   ) -> ComparisonSummary:
    """Mann-Whitney on the two F1 distributions; higher median wins when
    significant, otherwise "tie"."""
    mw = mann_whitney_u(result.f1_a, result.f1_b)
    med_a = float(np.median(result.f1_a))
    med_b = float(np.median(result.f1_b))
    if mw.p_value < alpha and med_a != med_b:
        winner = result.model_a if med_a > med_b else result.model_b
    else:
        winner = "tie"
    return ComparisonSummary(
        median_f1_a=med_a, median_f1_b=med_b, u_statistic=mw.u_statistic,
        p_value=mw.p_value, winner=winner,
    )
