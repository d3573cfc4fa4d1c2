"""Synthetic single-lead ECG with ground-truth rhythm annotations.

Morphology is deliberately stylized -- Gaussian P/QRS/T bumps, a sinusoid
with phase jitter for fibrillatory waves, a sawtooth for flutter waves --
but it keeps the distinction that matters: fibrillation has irregular RR
and f-waves instead of P-waves, flutter has regular RR with visible
flutter waves, so rhythm-only inputs cannot see flutter while raw-ECG
inputs can.

Everything is driven by a single seed: per-record generators are derived
from (seed, record index), so datasets regenerate byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import sawtooth

from .errors import InvalidSpec
from .io import (
    EcgRecord,
    Manifest,
    ManifestEntry,
    RhythmInterval,
    RhythmLabel,
    save_manifest,
    save_record,
)
from .metrics import SeverityGroup, severity_group
from .windowing import RAW_WINDOW_S, window_label


class SegmentKind(Enum):
    NSR = "NSR"
    AF = "AF"
    AFL = "AFL"


#: Annotation label written for each segment kind.
SEGMENT_LABELS = {
    SegmentKind.NSR: RhythmLabel.OTHER,
    SegmentKind.AF: RhythmLabel.AF,
    SegmentKind.AFL: RhythmLabel.AFL,
}

AF_RR_RANGE_S = (0.35, 1.1)
NSR_RR_CLIP_S = (0.4, 2.0)
NSR_RR_CV = 0.04
MILD_BURDEN_LIMIT = 4.0


@dataclass(frozen=True)
class RhythmSegmentSpec:
    kind: SegmentKind
    duration_s: float
    mean_hr_bpm: float = 75.0       # NSR ventricular rate
    pvc_prob: float = 0.0           # chance a beat is an ectopic wide complex
    f_wave_amp_mv: float = 0.08     # AF fibrillatory wave
    f_wave_hz: float = 6.0
    flutter_hz: float = 5.0         # AFL atrial rate (300/min)
    conduction_ratio: int = 4       # AFL ventricular beats every N flutter waves
    rr_jitter_s: float = 0.010
    flutter_amp_mv: float = 0.2

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidSpec(f"segment duration must be > 0, got {self.duration_s}")
        if not 0.0 <= self.pvc_prob <= 1.0:
            raise InvalidSpec(f"pvc_prob must be in [0, 1], got {self.pvc_prob}")
        if self.kind == SegmentKind.NSR and self.mean_hr_bpm <= 0:
            raise InvalidSpec(f"mean_hr_bpm must be > 0, got {self.mean_hr_bpm}")
        if self.kind == SegmentKind.AFL and self.conduction_ratio < 1:
            raise InvalidSpec(f"conduction_ratio must be >= 1, got {self.conduction_ratio}")


@dataclass(frozen=True)
class SynthRecordSpec:
    record_id: str
    segments: tuple[RhythmSegmentSpec, ...]
    fs_hz: float = 200.0
    noise_std_mv: float = 0.03
    baseline_wander_amp_mv: float = 0.05
    age_years: float | None = 57.0
    seed: int = 0

    def __post_init__(self):
        if not self.segments:
            raise InvalidSpec("record spec needs at least one segment")
        if self.fs_hz <= 0:
            raise InvalidSpec(f"fs_hz must be > 0, got {self.fs_hz}")
        if self.noise_std_mv < 0 or self.baseline_wander_amp_mv < 0:
            raise InvalidSpec("noise and wander amplitudes must be >= 0")

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)


@dataclass
class SegmentGroundTruth:
    kind: SegmentKind
    start_s: float
    end_s: float
    beat_times_s: np.ndarray
    pvc_flags: np.ndarray


@dataclass
class SynthResult:
    record: EcgRecord
    beat_times_s: np.ndarray
    segments: list[SegmentGroundTruth]


def _draw_rr(seg: RhythmSegmentSpec, rng: np.random.Generator) -> float:
    if seg.kind == SegmentKind.AF:
        return float(rng.uniform(*AF_RR_RANGE_S))
    if seg.kind == SegmentKind.AFL:
        base = seg.conduction_ratio / seg.flutter_hz
        return base + float(rng.uniform(-seg.rr_jitter_s, seg.rr_jitter_s))
    mean_rr = 60.0 / seg.mean_hr_bpm
    return float(np.clip(rng.normal(mean_rr, NSR_RR_CV * mean_rr), *NSR_RR_CLIP_S))


def _add_bump(signal: np.ndarray, fs: float, center_s: float, amp_mv: float,
              sigma_s: float) -> None:
    """Accumulate a Gaussian bump, truncated at 4 sigma."""
    half = 4.0 * sigma_s
    lo = max(0, int(np.ceil((center_s - half) * fs)))
    hi = min(signal.size, int(np.floor((center_s + half) * fs)) + 1)
    if lo >= hi:
        return
    t = np.arange(lo, hi) / fs - center_s
    signal[lo:hi] += amp_mv * np.exp(-0.5 * (t / sigma_s) ** 2)


def _add_beat(signal: np.ndarray, fs: float, beat_s: float, kind: SegmentKind,
              is_pvc: bool) -> None:
    if is_pvc:
        # Wide (~120 ms) inverted-dominant ventricular complex, no P-wave.
        _add_bump(signal, fs, beat_s, -1.5, 0.030)
        _add_bump(signal, fs, beat_s + 0.10, 0.40, 0.045)
        return
    if kind == SegmentKind.NSR:
        _add_bump(signal, fs, beat_s - 0.08, 0.15, 0.020)  # P-wave
    _add_bump(signal, fs, beat_s, 1.0, 0.012)              # R
    _add_bump(signal, fs, beat_s + 0.030, -0.30, 0.014)    # S
    _add_bump(signal, fs, beat_s + 0.20, 0.30, 0.050)      # T-wave


def synth_record(spec: SynthRecordSpec) -> SynthResult:
    """Generate one record; deterministic in the spec (including its seed)."""
    rng = np.random.default_rng(np.random.SeedSequence((int(spec.seed),)))
    fs = spec.fs_hz
    n_total = int(round(spec.duration_s * fs))
    duration_s = n_total / fs
    signal = np.zeros(n_total, dtype=np.float64)

    annotations = []
    segments_gt = []
    all_beats = []
    cursor = 0.0
    for seg_idx, seg in enumerate(spec.segments):
        seg_start = cursor
        seg_end = cursor + seg.duration_s
        cursor = seg_end

        # Beat times for this segment.  Near the end of the record stop a
        # little early so the final QRS renders completely.
        beat_limit = min(seg_end, duration_s - 0.06)
        beats = []
        t = seg_start + _draw_rr(seg, rng)
        pending_pause = 0.0
        while t < beat_limit:
            is_pvc = seg.pvc_prob > 0 and rng.random() < seg.pvc_prob
            if is_pvc:
                # Premature beat: pull it earlier, then pad the next gap so
                # the pause is compensatory.
                rr_prev = _draw_rr(seg, rng)
                t_pvc = t - 0.3 * rr_prev
                if t_pvc <= (beats[-1][0] if beats else seg_start) + 0.25:
                    t_pvc = t
                beats.append((t_pvc, True))
                pending_pause = t - t_pvc
                t = t_pvc + _draw_rr(seg, rng) + pending_pause
                continue
            beats.append((t, False))
            t += _draw_rr(seg, rng)

        seg_beat_times = np.array([b[0] for b in beats])
        seg_pvc_flags = np.array([b[1] for b in beats], dtype=bool)
        segments_gt.append(
            SegmentGroundTruth(
                kind=seg.kind, start_s=seg_start, end_s=min(seg_end, duration_s),
                beat_times_s=seg_beat_times, pvc_flags=seg_pvc_flags,
            )
        )
        all_beats.extend(beats)

        for beat_s, is_pvc in beats:
            _add_beat(signal, fs, beat_s, seg.kind, is_pvc)

        seg_slice = slice(int(round(seg_start * fs)), min(int(round(seg_end * fs)), n_total))
        n_seg = seg_slice.stop - seg_slice.start
        if n_seg > 0 and seg.kind == SegmentKind.AF:
            t_seg = np.arange(n_seg) / fs
            phase_walk = np.cumsum(rng.normal(0.0, 0.03, n_seg))
            signal[seg_slice] += seg.f_wave_amp_mv * np.sin(
                2 * np.pi * seg.f_wave_hz * t_seg + phase_walk
            )
        elif n_seg > 0 and seg.kind == SegmentKind.AFL:
            t_seg = np.arange(n_seg) / fs
            signal[seg_slice] += seg.flutter_amp_mv * sawtooth(
                2 * np.pi * seg.flutter_hz * t_seg, width=0.3
            )

        is_last = seg_idx == len(spec.segments) - 1
        annotations.append(
            RhythmInterval(
                onset_s=seg_start,
                offset_s=min(seg_end, duration_s) if is_last else seg_end,
                label=SEGMENT_LABELS[seg.kind],
            )
        )

    _check_rr_dispersion(segments_gt)

    t_all = np.arange(n_total) / fs
    if spec.baseline_wander_amp_mv > 0:
        signal += spec.baseline_wander_amp_mv * np.sin(
            2 * np.pi * 0.25 * t_all + rng.uniform(0, 2 * np.pi)
        )
    if spec.noise_std_mv > 0:
        signal += rng.normal(0.0, spec.noise_std_mv, n_total)

    record = EcgRecord(
        record_id=spec.record_id,
        sampling_rate_hz=fs,
        samples=signal.astype(np.float32),
        age_years=spec.age_years,
        annotations=annotations,
    )
    beat_times = np.array([b[0] for b in all_beats])
    return SynthResult(record=record, beat_times_s=beat_times, segments=segments_gt)


def _check_rr_dispersion(segments: list[SegmentGroundTruth]) -> None:
    """Generator sanity: AF RR must be irregular, NSR/AFL regular.

    Checked only on segments with enough intervals that the sample CV sits
    many sigmas from the bound (population CVs are ~0.3 AF, 0.04 NSR,
    ~0.007 AFL); intervals touching an ectopic beat are excluded
    (premature beats and compensatory pauses perturb the rhythm by
    design).
    """
    for seg in segments:
        rr = np.diff(seg.beat_times_s)
        near_pvc = seg.pvc_flags[:-1] | seg.pvc_flags[1:]
        rr = rr[~near_pvc]
        if rr.size < 200:
            continue
        cv = float(np.std(rr) / np.mean(rr))
        if seg.kind == SegmentKind.AF and cv <= 0.2:
            raise RuntimeError(f"AF segment RR dispersion too low: cv={cv:.3f}")
        if seg.kind in (SegmentKind.NSR, SegmentKind.AFL) and cv >= 0.05:
            raise RuntimeError(f"{seg.kind.value} segment RR dispersion too high: cv={cv:.3f}")


# ---------------------------------------------------------------------------
# Dataset-level generation
# ---------------------------------------------------------------------------

PROFILES = ("non_af", "mild", "moderate", "severe", "afl_only")

PROFILE_SEVERITY = {
    "non_af": SeverityGroup.NON_AF,
    "mild": SeverityGroup.MILD,
    "moderate": SeverityGroup.MODERATE,
    "severe": SeverityGroup.SEVERE,
    "afl_only": SeverityGroup.SEVERE,  # 100 % burden by construction
}


@dataclass
class DatasetScenario:
    """Profile-driven dataset description (the generator scenario file).

    ``splits`` maps split name -> {profile: record count}.  Mild records
    need more than 750 s of signal (one 30 s window must stay under a 4 %
    burden), hence their own duration.
    """

    splits: dict[str, dict[str, int]]
    seed: int = 0
    fs_hz: float = 200.0
    duration_s: float = 600.0
    mild_duration_s: float = 900.0
    noise_std_mv: float = 0.03
    baseline_wander_amp_mv: float = 0.05
    pvc_prob: float = 0.01
    records: list[SynthRecordSpec] = field(default_factory=list)

    def __post_init__(self):
        for split, counts in self.splits.items():
            for profile, count in counts.items():
                if profile not in PROFILES:
                    raise InvalidSpec(f"unknown profile {profile!r} in split {split!r}")
                if count < 0:
                    raise InvalidSpec(f"negative count for {profile!r} in {split!r}")
        if self.mild_duration_s <= RAW_WINDOW_S / (MILD_BURDEN_LIMIT / 100.0):
            raise InvalidSpec(
                f"mild_duration_s must exceed {RAW_WINDOW_S / (MILD_BURDEN_LIMIT / 100.0):.0f} s"
            )


def default_scenario(seed: int = 0) -> DatasetScenario:
    """Desk-scale dataset: 200 records, 40-record test split with 4 AFL-only."""
    return DatasetScenario(
        seed=seed,
        splits={
            "train": {"non_af": 40, "mild": 10, "moderate": 56, "severe": 24, "afl_only": 10},
            "validation": {"non_af": 4, "mild": 2, "moderate": 8, "severe": 4, "afl_only": 2},
            "test": {"non_af": 10, "mild": 4, "moderate": 14, "severe": 8, "afl_only": 4},
        },
    )


def _window_pattern_segments(pattern: np.ndarray, kind_on: SegmentKind,
                             hr_bpm: float, pvc_prob: float,
                             ) -> list[RhythmSegmentSpec]:
    """Merge a per-window on/off pattern into alternating aligned segments."""
    segments = []
    i = 0
    while i < pattern.size:
        j = i
        while j + 1 < pattern.size and pattern[j + 1] == pattern[i]:
            j += 1
        duration = (j - i + 1) * RAW_WINDOW_S
        if pattern[i]:
            segments.append(RhythmSegmentSpec(kind=kind_on, duration_s=duration))
        else:
            segments.append(
                RhythmSegmentSpec(
                    kind=SegmentKind.NSR, duration_s=duration,
                    mean_hr_bpm=hr_bpm, pvc_prob=pvc_prob,
                )
            )
        i = j + 1
    return segments


def _profile_segments(profile: str, scenario: DatasetScenario,
                      rng: np.random.Generator) -> list[RhythmSegmentSpec]:
    duration = scenario.mild_duration_s if profile == "mild" else scenario.duration_s
    n_windows = int(duration // RAW_WINDOW_S)
    hr = float(rng.uniform(60.0, 90.0))
    pvc = scenario.pvc_prob

    if profile == "non_af":
        return [RhythmSegmentSpec(kind=SegmentKind.NSR, duration_s=duration,
                                  mean_hr_bpm=hr, pvc_prob=pvc)]
    if profile == "afl_only":
        # Per-patient flutter rate, conduction and jitter are drawn so the
        # ventricular RR statistics of flutter sit inside the sinus-rhythm
        # cloud (regular, CV well under 0.05): flutter is then visible in
        # the waveform but not in the RR series, which is the distinction
        # the study population carries.
        flutter_hz = float(rng.uniform(4.3, 5.5))
        ratio = int(rng.choice([3, 4]))
        rr_base = ratio / flutter_hz
        cv_target = float(rng.uniform(0.025, 0.045))
        jitter = min(cv_target * rr_base * np.sqrt(3.0), 0.06 * rr_base)
        return [
            RhythmSegmentSpec(
                kind=SegmentKind.AFL, duration_s=duration, flutter_hz=flutter_hz,
                conduction_ratio=ratio, rr_jitter_s=jitter,
            )
        ]

    pattern = np.zeros(n_windows, dtype=bool)
    if profile == "mild":
        # Exactly one positive window keeps the burden under 4 %.
        pattern[int(rng.integers(1, n_windows - 1))] = True
    elif profile == "moderate":
        n_af = int(rng.integers(2, max(3, int(0.78 * n_windows) + 1)))
        pattern[rng.choice(n_windows, size=n_af, replace=False)] = True
    elif profile == "severe":
        pattern[:] = True
        n_off = int(rng.integers(0, max(1, int(0.10 * n_windows) + 1)))
        if n_off:
            pattern[rng.choice(n_windows, size=n_off, replace=False)] = False
    return _window_pattern_segments(pattern, SegmentKind.AF, hr, pvc)


def _reference_severity(record: EcgRecord) -> tuple[SeverityGroup, float]:
    """Severity from the windowed reference labels, as evaluation computes it."""
    n_windows = int(record.duration_s // RAW_WINDOW_S)
    labels = np.array(
        [window_label(k * RAW_WINDOW_S, RAW_WINDOW_S, record.annotations)
         for k in range(n_windows)],
        dtype=np.float64,
    )
    afb_pct = 100.0 * labels.mean() if n_windows else 0.0
    total_time = float(labels.sum() * RAW_WINDOW_S)
    return severity_group(total_time, afb_pct), afb_pct


def build_record_spec(profile: str, record_id: str, scenario: DatasetScenario,
                      seed_seq: tuple[int, int]) -> SynthRecordSpec:
    """Record spec for a severity profile, verified to land in its group."""
    for attempt in range(20):
        rng = np.random.default_rng(np.random.SeedSequence(seed_seq + (attempt,)))
        segments = _profile_segments(profile, scenario, rng)
        spec = SynthRecordSpec(
            record_id=record_id,
            segments=tuple(segments),
            fs_hz=scenario.fs_hz,
            noise_std_mv=scenario.noise_std_mv,
            baseline_wander_amp_mv=scenario.baseline_wander_amp_mv,
            age_years=float(rng.uniform(25.0, 85.0)),
            seed=int(rng.integers(0, 2**31)),
        )
        result = synth_record(spec)
        severity, afb_pct = _reference_severity(result.record)
        if severity is PROFILE_SEVERITY[profile]:
            if profile == "afl_only" and afb_pct < 100.0:
                continue
            return spec
    raise InvalidSpec(
        f"could not realize profile {profile!r} after 20 attempts (record {record_id})"
    )


def synth_dataset(scenario: DatasetScenario, out_dir: str | Path) -> Manifest:
    """Generate all records plus a manifest under out_dir.

    Record generation order (and thus rng derivation) is fixed: splits in
    train/validation/test order, profiles in declaration order.
    """
    out_dir = Path(out_dir)
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    global_idx = 0
    for split in ("train", "validation", "test"):
        counts = scenario.splits.get(split, {})
        for profile in PROFILES:
            for _ in range(counts.get(profile, 0)):
                record_id = f"rec{global_idx:04d}_{profile}"
                spec = build_record_spec(
                    profile, record_id, scenario, (int(scenario.seed), global_idx)
                )
                result = synth_record(spec)
                samples_rel = f"records/{record_id}.f32le"
                sidecar_rel = f"records/{record_id}.json"
                save_record(result.record, out_dir / samples_rel, out_dir / sidecar_rel)
                entries.append(
                    ManifestEntry(
                        record_id=record_id, samples_path=samples_rel,
                        sidecar_path=sidecar_rel, split=split,
                    )
                )
                global_idx += 1

    for spec in scenario.records:
        result = synth_record(spec)
        samples_rel = f"records/{spec.record_id}.f32le"
        sidecar_rel = f"records/{spec.record_id}.json"
        save_record(result.record, out_dir / samples_rel, out_dir / sidecar_rel)
        entries.append(
            ManifestEntry(
                record_id=spec.record_id, samples_path=samples_rel,
                sidecar_path=sidecar_rel, split="train",
            )
        )

    manifest = Manifest(entries=entries, base_dir=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest


# ---------------------------------------------------------------------------
# Scenario file parsing
# ---------------------------------------------------------------------------

def _segment_from_dict(d: dict) -> RhythmSegmentSpec:
    try:
        kind = SegmentKind(d["kind"])
        kwargs = {k: v for k, v in d.items() if k != "kind"}
        return RhythmSegmentSpec(kind=kind, **kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"bad segment spec {d}: {exc}") from exc


def _record_from_dict(d: dict) -> SynthRecordSpec:
    try:
        segments = tuple(_segment_from_dict(s) for s in d["segments"])
        kwargs = {k: v for k, v in d.items() if k not in ("segments",)}
        kwargs["segments"] = segments
        return SynthRecordSpec(**kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"bad record spec: {exc}") from exc


def load_scenario(path: str | Path) -> DatasetScenario:
    """Parse a scenario JSON file into a DatasetScenario."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidSpec(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"scenario is not valid JSON: {path}: {exc}") from exc
    try:
        records = [_record_from_dict(r) for r in data.pop("records", [])]
        scenario = DatasetScenario(records=records, **data)
    except (TypeError, ValueError) as exc:
        raise InvalidSpec(f"bad scenario {path}: {exc}") from exc
    return scenario
