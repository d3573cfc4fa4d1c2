"""ECG data model and on-disk formats.

A record is stored as two files:

* ``<id>.f32le`` -- raw little-endian float32 samples, one value per
  sample, in millivolts.
* ``<id>.json`` -- sidecar with metadata and rhythm annotations::

    {
      "record_id": str,
      "fs_hz": number,
      "age_years": number | null,
      "n_samples": int,
      "annotations": [
        {"onset_s": number, "offset_s": number,
         "label": "AF" | "AFL" | "OtherSVT" | "Other"},
        ...
      ]
    }

Datasets are indexed by a manifest CSV with header
``record_id,samples_path,sidecar_path,split`` whose paths are relative to
the manifest file itself.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateRecordId,
    MalformedSidecar,
    MissingFile,
    OverlappingAnnotations,
    SampleCountMismatch,
    UnknownSplit,
)

VALID_SPLITS = ("train", "validation", "test")

#: Tolerance for annotation containment checks, in seconds.
CONTAINMENT_TOL_S = 1e-9


class RhythmLabel(Enum):
    AF = "AF"
    AFL = "AFL"
    OTHER_SVT = "OtherSVT"
    OTHER = "Other"


def is_afl_positive(label: RhythmLabel) -> bool:
    """True iff the label belongs to the merged positive class (AF or AFL)."""
    return label in (RhythmLabel.AF, RhythmLabel.AFL)


@dataclass(frozen=True)
class RhythmInterval:
    onset_s: float
    offset_s: float
    label: RhythmLabel

    def __post_init__(self):
        if not (0.0 <= self.onset_s < self.offset_s):
            raise ValueError(
                f"interval bounds must satisfy 0 <= onset < offset, "
                f"got [{self.onset_s}, {self.offset_s}]"
            )

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


@dataclass
class EcgRecord:
    """Single-lead ECG voltage trace with metadata and rhythm annotations.

    Records are treated as immutable after construction; reading one from
    many threads is safe.
    """

    record_id: str
    sampling_rate_hz: float
    samples: np.ndarray
    age_years: float | None = None
    annotations: list[RhythmInterval] = field(default_factory=list)

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValueError(f"sampling_rate_hz must be > 0, got {self.sampling_rate_hz}")
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz


def _check_annotations(annotations: list[RhythmInterval]) -> None:
    """Raise OverlappingAnnotations unless intervals are sorted and disjoint."""
    for prev, cur in zip(annotations, annotations[1:]):
        if cur.onset_s < prev.offset_s - CONTAINMENT_TOL_S:
            raise OverlappingAnnotations(
                f"annotations overlap: [{prev.onset_s}, {prev.offset_s}] and "
                f"[{cur.onset_s}, {cur.offset_s}]"
            )


def load_record(samples_path: str | Path, sidecar_path: str | Path) -> EcgRecord:
    """Load a record pair (.f32le samples + .json sidecar) from disk."""
    samples_path = Path(samples_path)
    sidecar_path = Path(sidecar_path)
    if not samples_path.is_file():
        raise MissingFile(f"samples file not found: {samples_path}")
    if not sidecar_path.is_file():
        raise MissingFile(f"sidecar file not found: {sidecar_path}")

    raw = samples_path.read_bytes()
    if len(raw) % 4 != 0:
        raise MalformedSidecar(
            f"samples file length {len(raw)} is not a multiple of 4: {samples_path}"
        )
    samples = np.frombuffer(raw, dtype="<f4")

    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedSidecar(f"sidecar is not valid JSON: {sidecar_path}") from exc

    try:
        record_id = str(meta["record_id"])
        fs_hz = float(meta["fs_hz"])
        n_samples = int(meta["n_samples"])
        age = meta.get("age_years")
        age_years = None if age is None else float(age)
        annotations = [
            RhythmInterval(
                onset_s=float(a["onset_s"]),
                offset_s=float(a["offset_s"]),
                label=RhythmLabel(a["label"]),
            )
            for a in meta.get("annotations", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSidecar(f"sidecar missing or invalid field: {exc}") from exc

    if n_samples != samples.shape[0]:
        raise SampleCountMismatch(
            f"sidecar n_samples={n_samples} but samples file holds {samples.shape[0]}"
        )

    annotations.sort(key=lambda a: a.onset_s)
    _check_annotations(annotations)
    return EcgRecord(
        record_id=record_id,
        sampling_rate_hz=fs_hz,
        samples=samples,
        age_years=age_years,
        annotations=annotations,
    )


def save_record(record: EcgRecord, samples_path: str | Path, sidecar_path: str | Path) -> None:
    """Write the two-file on-disk form; ``load_record`` inverts it bit-exactly."""
    samples_path = Path(samples_path)
    sidecar_path = Path(sidecar_path)
    _check_annotations(sorted(record.annotations, key=lambda a: a.onset_s))

    samples_path.parent.mkdir(parents=True, exist_ok=True)
    samples_path.write_bytes(np.asarray(record.samples, dtype="<f4").tobytes())

    meta = {
        "record_id": record.record_id,
        "fs_hz": record.sampling_rate_hz,
        "age_years": record.age_years,
        "n_samples": record.n_samples,
        "annotations": [
            {"onset_s": a.onset_s, "offset_s": a.offset_s, "label": a.label.value}
            for a in sorted(record.annotations, key=lambda a: a.onset_s)
        ],
    }
    sidecar_path.parent.mkdir(parents=True, exist_ok=True)
    sidecar_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


class Violation(Enum):
    """Record-level exclusion reasons; an empty list means admissible."""

    UNDER_18 = "Under18"
    NON_FINITE = "NonFinite"
    ANNOTATION_OUT_OF_RANGE = "AnnotationOutOfRange"
    ANNOTATION_OVERLAP = "AnnotationOverlap"


def validate_record(record: EcgRecord) -> list[Violation]:
    """Return exclusion reasons for a record (pure; never raises).

    A missing age is admissible: only patients known to be under 18 are
    excluded.
    """
    violations = []
    if record.age_years is not None and record.age_years < 18:
        violations.append(Violation.UNDER_18)
    if not np.all(np.isfinite(record.samples)):
        violations.append(Violation.NON_FINITE)

    duration = record.duration_s
    anns = sorted(record.annotations, key=lambda a: a.onset_s)
    if any(a.offset_s > duration + CONTAINMENT_TOL_S for a in anns):
        violations.append(Violation.ANNOTATION_OUT_OF_RANGE)
    if any(
        cur.onset_s < prev.offset_s - CONTAINMENT_TOL_S
        for prev, cur in zip(anns, anns[1:])
    ):
        violations.append(Violation.ANNOTATION_OVERLAP)
    return violations


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    samples_path: str
    sidecar_path: str
    split: str


@dataclass
class Manifest:
    """Dataset index; paths are relative to ``base_dir`` (the manifest's dir)."""

    entries: list[ManifestEntry]
    base_dir: Path = field(default_factory=Path)

    def for_split(self, split: str) -> list[ManifestEntry]:
        if split not in VALID_SPLITS:
            raise UnknownSplit(f"unknown split {split!r}; expected one of {VALID_SPLITS}")
        return [e for e in self.entries if e.split == split]

    def resolve(self, entry: ManifestEntry) -> tuple[Path, Path]:
        return self.base_dir / entry.samples_path, self.base_dir / entry.sidecar_path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    entries = []
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["record_id", "samples_path", "sidecar_path", "split"]
        if reader.fieldnames != expected:
            raise MalformedSidecar(
                f"manifest header {reader.fieldnames} != {expected}: {path}"
            )
        for row in reader:
            rid = row["record_id"]
            if rid in seen:
                raise DuplicateRecordId(f"duplicate record_id {rid!r} in {path}")
            seen.add(rid)
            split = row["split"]
            if split not in VALID_SPLITS:
                raise UnknownSplit(f"unknown split {split!r} for record {rid!r}")
            entries.append(
                ManifestEntry(
                    record_id=rid,
                    samples_path=row["samples_path"],
                    sidecar_path=row["sidecar_path"],
                    split=split,
                )
            )
    return Manifest(entries=entries, base_dir=path.parent)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "samples_path", "sidecar_path", "split"])
        for e in manifest.entries:
            writer.writerow([e.record_id, e.samples_path, e.sidecar_path, e.split])


def split_records(manifest: Manifest, split: str) -> list[EcgRecord]:
    """Load every record of a split, in manifest order."""
    records = []
    for entry in manifest.for_split(split):
        samples_path, sidecar_path = manifest.resolve(entry)
        records.append(load_record(samples_path, sidecar_path))
    return records
