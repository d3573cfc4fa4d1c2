"""R-peak detection, beat-agreement quality index, and record gating.

Two deliberately independent detectors are compared: one works on the
band-passed signal energy, the other on the raw signal amplitude.  Their
agreement ratio (bSQI) gates out records that are too noisy: spurious or
missed beats in either detector push the ratio down.

All operations here are pure; records can be gated from parallel workers
without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import butter, sosfiltfilt

from .errors import TooFewPeaks, TooShort
from .io import EcgRecord

REFRACTORY_S = 0.2
DEFAULT_BSQI_THRESHOLD = 0.8
DEFAULT_MATCH_WINDOW_S = 0.15


class DetectorId(Enum):
    ENERGY = "Energy"
    AMPLITUDE = "Amplitude"


@dataclass(frozen=True)
class PeakTrain:
    """Strictly increasing sample indices of detected R-peaks."""

    indices: np.ndarray
    detector_id: DetectorId

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("peak indices must be strictly increasing")

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class RrSeries:
    """Beat-to-beat intervals plus the beat times they are derived from."""

    intervals_s: np.ndarray
    beat_times_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intervals_s", np.asarray(self.intervals_s, dtype=np.float64))
        object.__setattr__(self, "beat_times_s", np.asarray(self.beat_times_s, dtype=np.float64))
        if self.intervals_s.size != self.beat_times_s.size - 1:
            raise ValueError("need exactly one interval fewer than beat times")
        if np.any(self.intervals_s <= 0):
            raise ValueError("all RR intervals must be positive")


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices i with x[i-1] < x[i] >= x[i+1] (left edge of plateaus)."""
    if x.size < 3:
        return np.empty(0, dtype=np.int64)
    rising = x[1:-1] > x[:-2]
    not_falling_after = x[1:-1] >= x[2:]
    return np.nonzero(rising & not_falling_after)[0] + 1


def _refractory_tallest(candidates: np.ndarray, heights: np.ndarray, min_gap: int) -> np.ndarray:
    """Thin sorted candidates so no two survivors are closer than min_gap.

    Within a conflicting run the taller peak wins; deterministic scan order.
    """
    kept_idx: list[int] = []
    kept_h: list[float] = []
    for idx, h in zip(candidates.tolist(), heights.tolist()):
        if kept_idx and idx - kept_idx[-1] < min_gap:
            if h > kept_h[-1]:
                kept_idx[-1] = idx
                kept_h[-1] = h
        else:
            kept_idx.append(idx)
            kept_h.append(h)
    return np.asarray(kept_idx, dtype=np.int64)


def detect_r_peaks_energy(samples: np.ndarray, fs: float) -> PeakTrain:
    """QRS detection from band-passed signal energy.

    Pipeline: zero-phase 5-15 Hz band-pass, differentiation, squaring,
    150 ms moving-window integration, relative threshold against a rolling
    2 s maximum, then refinement of each detection to the nearest maximum
    of the band-passed energy.  A 200 ms refractory period is enforced.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < fs:
        raise TooShort(f"need at least 1 s of data ({int(fs)} samples), got {x.size}")

    sos = butter(2, [5.0, 15.0], btype="bandpass", fs=fs, output="sos")
    band = sosfiltfilt(sos, x)
    energy = np.gradient(band) ** 2

    win = max(1, int(round(0.15 * fs)))
    integ = np.convolve(energy, np.ones(win) / win, mode="same")

    roll_max = maximum_filter1d(integ, size=max(3, int(round(2.0 * fs))), mode="nearest")
    floor = 1e-12 * max(1.0, float(integ.max()))
    candidates = _local_maxima(integ)
    candidates = candidates[integ[candidates] > np.maximum(0.25 * roll_max[candidates], floor)]
    if candidates.size == 0:
        return PeakTrain(indices=np.empty(0, dtype=np.int64), detector_id=DetectorId.ENERGY)

    # Snap each detection to the sharpest point of the band-passed energy
    # nearby; the zero-phase filter keeps that aligned with the R-peak.
    half = max(1, int(round(0.06 * fs)))
    band_sq = band**2
    refined = np.empty(candidates.size, dtype=np.int64)
    for k, c in enumerate(candidates):
        lo = max(0, c - half)
        hi = min(x.size, c + half + 1)
        refined[k] = lo + int(np.argmax(band_sq[lo:hi]))

    order = np.argsort(refined, kind="stable")
    refined = refined[order]
    heights = integ[candidates][order]
    dedup_mask = np.concatenate(([True], np.diff(refined) > 0))
    refined, heights = refined[dedup_mask], heights[dedup_mask]

    peaks = _refractory_tallest(refined, heights, int(round(REFRACTORY_S * fs)))
    return PeakTrain(indices=peaks, detector_id=DetectorId.ENERGY)


def detect_r_peaks_amplitude(samples: np.ndarray, fs: float) -> PeakTrain:
    """QRS detection from the raw signal amplitude.

    A sample is a candidate when it is a local maximum of |signal| and
    exceeds 0.6 x the rolling 2 s maximum of |signal|; a 200 ms refractory
    period keeps the tallest candidate of each cluster.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < fs:
        raise TooShort(f"need at least 1 s of data ({int(fs)} samples), got {x.size}")

    mag = np.abs(x)
    roll_max = maximum_filter1d(mag, size=max(3, int(round(2.0 * fs))), mode="nearest")
    candidates = _local_maxima(mag)
    candidates = candidates[mag[candidates] > 0.6 * roll_max[candidates]]
    peaks = _refractory_tallest(candidates, mag[candidates], int(round(REFRACTORY_S * fs)))
    return PeakTrain(indices=peaks, detector_id=DetectorId.AMPLITUDE)


def bsqi(
    train_a: PeakTrain,
    train_b: PeakTrain,
    fs: float,
    match_window_s: float = DEFAULT_MATCH_WINDOW_S,
) -> float:
    """Agreement ratio n_match / (n_a + n_b - n_match) between two peak trains.

    Matching is a greedy earliest-first one-to-one sweep: walk both trains
    in time order and pair the current heads when they are within the match
    window, otherwise advance the earlier train.  Symmetric in its
    arguments and O(n).  Two empty trains agree perfectly (1.0).
    """
    if match_window_s <= 0:
        raise ValueError("match_window_s must be > 0")
    a = np.asarray(train_a.indices, dtype=np.float64)
    b = np.asarray(train_b.indices, dtype=np.float64)
    n_a, n_b = a.size, b.size
    if n_a == 0 and n_b == 0:
        return 1.0

    window = match_window_s * fs
    i = j = n_match = 0
    while i < n_a and j < n_b:
        delta = a[i] - b[j]
        if abs(delta) <= window:
            n_match += 1
            i += 1
            j += 1
        elif delta < 0:
            i += 1
        else:
            j += 1
    return n_match / (n_a + n_b - n_match)


def rr_from_peaks(train: PeakTrain, fs: float) -> RrSeries:
    """Convert a peak train to RR intervals (seconds)."""
    if len(train) < 2:
        raise TooFewPeaks(f"need at least 2 peaks for an RR series, got {len(train)}")
    times = train.indices.astype(np.float64) / fs
    return RrSeries(intervals_s=np.diff(times), beat_times_s=times)


def quality_gate(
    record: EcgRecord,
    threshold: float = DEFAULT_BSQI_THRESHOLD,
    match_window_s: float = DEFAULT_MATCH_WINDOW_S,
) -> tuple[float, bool]:
    """Record-level bSQI between the two detectors plus the keep decision."""
    train_a = detect_r_peaks_energy(record.samples, record.sampling_rate_hz)
    train_b = detect_r_peaks_amplitude(record.samples, record.sampling_rate_hz)
    value = bsqi(train_a, train_b, record.sampling_rate_hz, match_window_s)
    return value, value >= threshold
