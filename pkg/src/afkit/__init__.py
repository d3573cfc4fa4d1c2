"""afkit: AF event detection and AF-burden estimation over single-lead ECG."""

__version__ = "0.1.0"

from .io import EcgRecord, Manifest, RhythmInterval, RhythmLabel, is_afl_positive
from .metrics import MetricsReport, SeverityGroup, afb, auroc, e_af, severity_group
from .models import ModelConfig, build_arnet_ecg, build_rr_baseline, load_checkpoint, save_checkpoint
from .quality import bsqi, detect_r_peaks_amplitude, detect_r_peaks_energy, quality_gate
from .synth import DatasetScenario, SynthRecordSpec, synth_dataset, synth_record
from .windowing import BeatWindow, Window, segment_beat_windows, segment_windows, window_label

__all__ = [
    "EcgRecord", "Manifest", "RhythmInterval", "RhythmLabel", "is_afl_positive",
    "MetricsReport", "SeverityGroup", "afb", "auroc", "e_af", "severity_group",
    "ModelConfig", "build_arnet_ecg", "build_rr_baseline", "load_checkpoint", "save_checkpoint",
    "bsqi", "detect_r_peaks_amplitude", "detect_r_peaks_energy", "quality_gate",
    "DatasetScenario", "SynthRecordSpec", "synth_dataset", "synth_record",
    "BeatWindow", "Window", "segment_beat_windows", "segment_windows", "window_label",
]
