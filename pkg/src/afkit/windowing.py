"""Segmentation into labeled windows and alignment onto a 5-second grid.

Two window kinds feed the two model families: fixed 30 s raw-ECG windows
(6000 samples at 200 Hz) and 60-beat RR windows.  Both carry a binary
label (1 = AF or AFL) assigned by majority time over the window span,
with ties breaking positive and unannotated time counting negative.
Segmentation and alignment are pure functions over immutable records and
parallelize per record.

Window cache file format (little-endian throughout):

* magic ``AFKWIN1\\n`` (8 bytes)
* u8 kind (0 = raw ECG, 1 = RR)
* f64 sampling rate in Hz (0 for RR caches)
* u64 window count
* per window: u16 record-id byte length, record-id UTF-8 bytes,
  f64 start_s, f64 end_s, u8 label, u32 value count, f32 values
  (samples in millivolts for raw windows, RR intervals in seconds for
  RR windows).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoFailure
from .io import EcgRecord, RhythmInterval, is_afl_positive
from .quality import RrSeries

RAW_WINDOW_S = 30.0
BEATS_PER_WINDOW = 60
GRID_SLOT_S = 5.0

_MAGIC = b"AFKWIN1\n"


@dataclass(frozen=True)
class Window:
    """A 30 s raw-ECG segment with a binary reference label."""

    record_id: str
    start_s: float
    duration_s: float
    samples: np.ndarray
    label: int

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class BeatWindow:
    """Sixty consecutive RR intervals spanning [start_s, end_s]."""

    record_id: str
    rr_s: np.ndarray
    start_s: float
    end_s: float
    label: int


@dataclass
class AlignmentGrid:
    """Per-record 5 s slots: reference label + per-model optional predictions.

    ``predictions[model_id][k]`` is -1 where no window of that model covers
    slot k's midpoint.
    """

    record_id: str
    slot_s: float
    reference: np.ndarray
    predictions: dict[str, np.ndarray]

    @property
    def n_slots(self) -> int:
        return int(self.reference.size)

    def covered(self, model_ids: list[str] | None = None) -> np.ndarray:
        """Boolean mask of slots covered by every listed model."""
        ids = list(self.predictions) if model_ids is None else model_ids
        mask = np.ones(self.n_slots, dtype=bool)
        for mid in ids:
            mask &= self.predictions[mid] >= 0
        return mask


def window_label(
    start_s: float, duration_s: float, annotations: list[RhythmInterval]
) -> int:
    """Majority label over [start_s, start_s + duration_s].

    Returns 1 iff AF/AFL time covers at least half the span (tie counts
    positive); unannotated time counts as non-AF.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    end_s = start_s + duration_s
    positive = 0.0
    for ann in annotations:
        if not is_afl_positive(ann.label):
            continue
        overlap = min(end_s, ann.offset_s) - max(start_s, ann.onset_s)
        if overlap > 0:
            positive += overlap
    return 1 if positive >= duration_s / 2 else 0


def segment_windows(record: EcgRecord) -> list[Window]:
    """Non-overlapping 30 s windows at starts 0, 30, 60, ...

    A trailing segment shorter than 30 s is dropped so every window holds
    exactly round(30 * fs) samples.
    """
    fs = record.sampling_rate_hz
    n_per_window = int(round(RAW_WINDOW_S * fs))
    n_windows = record.n_samples // n_per_window
    windows = []
    for k in range(n_windows):
        start_s = k * RAW_WINDOW_S
        samples = record.samples[k * n_per_window : (k + 1) * n_per_window]
        windows.append(
            Window(
                record_id=record.record_id,
                start_s=start_s,
                duration_s=RAW_WINDOW_S,
                samples=samples,
                label=window_label(start_s, RAW_WINDOW_S, record.annotations),
            )
        )
    return windows


def segment_beat_windows(
    rr_series: RrSeries, annotations: list[RhythmInterval], record_id: str = ""
) -> list[BeatWindow]:
    """Non-overlapping runs of 60 RR intervals (stride 60 beats).

    The trailing partial run is dropped; fewer than 60 intervals yields an
    empty list rather than an error.
    """
    intervals = rr_series.intervals_s
    times = rr_series.beat_times_s
    n_windows = intervals.size // BEATS_PER_WINDOW
    windows = []
    for k in range(n_windows):
        lo = k * BEATS_PER_WINDOW
        hi = lo + BEATS_PER_WINDOW
        start_s = float(times[lo])
        end_s = float(times[hi])
        windows.append(
            BeatWindow(
                record_id=record_id,
                rr_s=intervals[lo:hi],
                start_s=start_s,
                end_s=end_s,
                label=window_label(start_s, end_s - start_s, annotations),
            )
        )
    return windows


@dataclass(frozen=True)
class PredictedSpan:
    """A model's prediction over a time span of one record."""

    start_s: float
    end_s: float
    label: int


def align_to_grid(
    record_duration_s: float,
    reference_annotations: list[RhythmInterval],
    spans_by_model: dict[str, list[PredictedSpan]],
    record_id: str = "",
    slot_s: float = GRID_SLOT_S,
) -> AlignmentGrid:
    """Align per-model window predictions onto a common 5 s grid.

    Each slot's reference is the majority label over the slot; each model
    contributes the prediction of the unique span covering the slot
    midpoint, or -1 when no span covers it.
    """
    n_slots = int(np.floor(record_duration_s / slot_s))
    reference = np.array(
        [
            window_label(k * slot_s, slot_s, reference_annotations)
            for k in range(n_slots)
        ],
        dtype=np.int8,
    )
    predictions: dict[str, np.ndarray] = {}
    for model_id, spans in spans_by_model.items():
        pred = np.full(n_slots, -1, dtype=np.int8)
        for span in spans:
            # Slots whose midpoint (k + 0.5) * slot_s lies in [start, end).
            first = int(np.ceil(span.start_s / slot_s - 0.5))
            last = int(np.ceil(span.end_s / slot_s - 0.5))  # exclusive
            first = max(first, 0)
            last = min(last, n_slots)
            if first < last:
                pred[first:last] = span.label
        predictions[model_id] = pred
    return AlignmentGrid(
        record_id=record_id, slot_s=slot_s, reference=reference, predictions=predictions
    )


def save_window_cache(
    path: str | Path,
    windows: list[Window] | list[BeatWindow],
    fs_hz: float = 0.0,
    kind: int | None = None,
) -> None:
    """Serialize windows to the binary cache format (see module docstring).

    ``kind`` (0 raw, 1 RR) is inferred from the first window when omitted;
    pass it explicitly for empty caches.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if kind is None:
        kind = 1 if windows and isinstance(windows[0], BeatWindow) else 0
    try:
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<BdQ", kind, fs_hz, len(windows)))
            for w in windows:
                rid = w.record_id.encode("utf-8")
                values = np.asarray(
                    w.samples if kind == 0 else w.rr_s, dtype="<f4"
                )
                fh.write(struct.pack("<H", len(rid)))
                fh.write(rid)
                fh.write(
                    struct.pack(
                        "<ddBI", float(w.start_s), float(w.end_s), int(w.label), values.size
                    )
                )
                fh.write(values.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write window cache {path}: {exc}") from exc


def load_window_cache(path: str | Path) -> tuple[list[Window] | list[BeatWindow], float]:
    """Read a window cache; returns (windows, fs_hz). fs_hz is 0 for RR caches."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read window cache {path}: {exc}") from exc
    if blob[: len(_MAGIC)] != _MAGIC:
        raise IoFailure(f"not a window cache (bad magic): {path}")
    off = len(_MAGIC)
    kind, fs_hz, n_windows = struct.unpack_from("<BdQ", blob, off)
    off += struct.calcsize("<BdQ")
    windows: list = []
    for _ in range(n_windows):
        (id_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        rid = blob[off : off + id_len].decode("utf-8")
        off += id_len
        start_s, end_s, label, n_values = struct.unpack_from("<ddBI", blob, off)
        off += struct.calcsize("<ddBI")
        values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=off)
        off += 4 * n_values
        if kind == 0:
            windows.append(
                Window(
                    record_id=rid,
                    start_s=start_s,
                    duration_s=end_s - start_s,
                    samples=values,
                    label=int(label),
                )
            )
        else:
            windows.append(
                BeatWindow(
                    record_id=rid, rr_s=values, start_s=start_s, end_s=end_s, label=int(label)
                )
            )
    return windows, fs_hz
