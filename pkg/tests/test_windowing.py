"""Window segmentation, majority labeling, grid alignment, cache format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afkit.io import EcgRecord, RhythmInterval, RhythmLabel
from afkit.metrics import afb
from afkit.quality import RrSeries
from afkit.windowing import (
    BeatWindow,
    PredictedSpan,
    Window,
    align_to_grid,
    load_window_cache,
    save_window_cache,
    segment_beat_windows,
    segment_windows,
    window_label,
)

FS = 200.0


def record_of(duration_s, annotations=(), seed=0):
    rng = np.random.default_rng(seed)
    return EcgRecord(
        record_id="rec",
        sampling_rate_hz=FS,
        samples=rng.normal(size=int(duration_s * FS)).astype(np.float32),
        annotations=list(annotations),
    )


def af(onset, offset):
    return RhythmInterval(onset, offset, RhythmLabel.AF)


class TestWindowLabel:
    def test_fully_inside_af(self):
        assert window_label(30.0, 30.0, [af(0.0, 100.0)]) == 1

    def test_majority_af(self):
        anns = [af(0.0, 20.0), RhythmInterval(20.0, 30.0, RhythmLabel.OTHER)]
        assert window_label(0.0, 30.0, anns) == 1

    def test_minority_afl_with_unannotated_rest(self):
        anns = [RhythmInterval(0.0, 10.0, RhythmLabel.AFL)]
        assert window_label(0.0, 30.0, anns) == 0

    def test_exact_tie_is_positive(self):
        assert window_label(0.0, 30.0, [af(0.0, 15.0)]) == 1

    def test_other_svt_counts_negative(self):
        anns = [RhythmInterval(0.0, 30.0, RhythmLabel.OTHER_SVT)]
        assert window_label(0.0, 30.0, anns) == 0

    @given(
        start=st.floats(0, 100),
        cuts=st.lists(st.floats(0.01, 0.99), min_size=0, max_size=5),
    )
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_interval_splitting(self, start, cuts):
        onset, offset = start + 2.0, start + 25.0
        whole = [af(onset, offset)]
        points = [onset] + sorted(onset + c * (offset - onset) for c in cuts) + [offset]
        parts = [af(a, b) for a, b in zip(points, points[1:]) if b > a]
        assert window_label(start, 30.0, whole) == window_label(start, 30.0, parts)


class TestSegmentWindows:
    def test_exact_multiple(self):
        windows = segment_windows(record_of(90.0))
        assert [w.start_s for w in windows] == [0.0, 30.0, 60.0]
        assert all(w.samples.size == 6000 for w in windows)

    def test_trailing_partial_dropped(self):
        assert len(segment_windows(record_of(100.0))) == 3

    def test_too_short_record(self):
        assert segment_windows(record_of(29.0)) == []

    def test_labels_from_annotations(self):
        rec = record_of(90.0, annotations=[af(0.0, 45.0)])
        labels = [w.label for w in segment_windows(rec)]
        assert labels == [1, 1, 0]

    def test_windows_disjoint_and_inside_record(self):
        rec = record_of(125.0)
        windows = segment_windows(rec)
        starts = [w.start_s for w in windows]
        assert starts == sorted(starts)
        for a, b in zip(windows, windows[1:]):
            assert a.end_s <= b.start_s
        assert windows[-1].end_s <= rec.duration_s


class TestSegmentBeatWindows:
    def rr_of(self, intervals):
        times = np.concatenate([[0.0], np.cumsum(intervals)])
        return RrSeries(intervals_s=np.asarray(intervals), beat_times_s=times)

    def test_two_full_windows(self):
        rr = self.rr_of([0.8] * 120)
        windows = segment_beat_windows(rr, [], record_id="r")
        assert len(windows) == 2
        assert windows[0].rr_s.size == 60

    def test_single_window_span(self):
        rr = self.rr_of([1.0] * 60)
        (w,) = segment_beat_windows(rr, [])
        assert w.start_s == 0.0
        assert w.end_s == pytest.approx(60.0)

    def test_too_few_intervals_empty(self):
        rr = self.rr_of([0.8] * 59)
        assert segment_beat_windows(rr, []) == []

    def test_label_over_span(self):
        rr = self.rr_of([1.0] * 60)
        assert segment_beat_windows(rr, [af(0.0, 40.0)])[0].label == 1
        assert segment_beat_windows(rr, [af(0.0, 20.0)])[0].label == 0


class TestAlignToGrid:
    def test_single_positive_window_covers_six_slots(self):
        spans = {"m": [PredictedSpan(0.0, 30.0, 1)]}
        grid = align_to_grid(30.0, [], spans)
        assert grid.n_slots == 6
        np.testing.assert_array_equal(grid.predictions["m"], [1] * 6)

    def test_62s_record_has_12_slots(self):
        grid = align_to_grid(62.0, [], {"m": [PredictedSpan(0.0, 60.0, 0)]})
        assert grid.n_slots == 12

    def test_no_windows_all_absent(self):
        grid = align_to_grid(30.0, [], {"m": []})
        np.testing.assert_array_equal(grid.predictions["m"], [-1] * 6)

    def test_reference_uses_annotations(self):
        grid = align_to_grid(30.0, [af(0.0, 12.0)], {"m": []})
        np.testing.assert_array_equal(grid.reference, [1, 1, 0, 0, 0, 0])
        # slot [10, 15) holds 2 s of AF: minority, negative

    def test_midpoint_coverage_rule(self):
        # Span [0, 32.5) covers slot 6 midpoint (32.5 s)? No: end exclusive.
        grid = align_to_grid(40.0, [], {"m": [PredictedSpan(0.0, 32.5, 1)]})
        assert grid.predictions["m"][5] == 1   # midpoint 27.5
        assert grid.predictions["m"][6] == -1  # midpoint 32.5 not < 32.5
        grid = align_to_grid(40.0, [], {"m": [PredictedSpan(0.0, 32.6, 1)]})
        assert grid.predictions["m"][6] == 1

    def test_covered_mask_intersection(self):
        spans = {
            "a": [PredictedSpan(0.0, 30.0, 1)],
            "b": [PredictedSpan(10.0, 40.0, 0)],
        }
        grid = align_to_grid(45.0, [], spans)
        mask = grid.covered(["a", "b"])
        # Midpoints 12.5..27.5 are inside both spans.
        np.testing.assert_array_equal(
            mask, [False, False, True, True, True, True, False, False, False]
        )

    def test_thirty_second_windows_give_six_slots_each(self):
        rec_windows = [PredictedSpan(k * 30.0, (k + 1) * 30.0, k % 2) for k in range(4)]
        grid = align_to_grid(120.0, [], {"m": rec_windows})
        pred = grid.predictions["m"]
        for k in range(4):
            np.testing.assert_array_equal(pred[6 * k : 6 * (k + 1)], [k % 2] * 6)


class TestAfbConsistency:
    @given(labels=st.lists(st.integers(0, 1), min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_window_afb_identity(self, labels):
        lengths = [30.0] * len(labels)
        expected = 100.0 * sum(30.0 * l for l in labels) / sum(lengths)
        assert afb(labels, lengths) == pytest.approx(expected, abs=1e-12)


class TestWindowCache:
    def test_raw_round_trip(self, tmp_path):
        rec = record_of(90.0, annotations=[af(0.0, 45.0)])
        windows = segment_windows(rec)
        path = tmp_path / "raw.bin"
        save_window_cache(path, windows, fs_hz=FS)
        loaded, fs = load_window_cache(path)
        assert fs == FS
        assert len(loaded) == len(windows)
        for a, b in zip(windows, loaded):
            assert isinstance(b, Window)
            assert (a.record_id, a.start_s, a.label) == (b.record_id, b.start_s, b.label)
            np.testing.assert_array_equal(a.samples, b.samples)

    def test_rr_round_trip(self, tmp_path):
        rr = np.full(60, 0.8, dtype=np.float32)
        windows = [BeatWindow(record_id="r", rr_s=rr, start_s=1.0, end_s=49.0, label=1)]
        path = tmp_path / "rr.bin"
        save_window_cache(path, windows)
        loaded, fs = load_window_cache(path)
        assert fs == 0.0
        assert isinstance(loaded[0], BeatWindow)
        np.testing.assert_array_equal(loaded[0].rr_s, rr)
        assert loaded[0].end_s == 49.0

    def test_empty_cache_kinds(self, tmp_path):
        save_window_cache(tmp_path / "e.bin", [], kind=1)
        loaded, _ = load_window_cache(tmp_path / "e.bin")
        assert loaded == []

    def test_identical_bytes_for_identical_windows(self, tmp_path):
        rec = record_of(60.0)
        save_window_cache(tmp_path / "a.bin", segment_windows(rec), fs_hz=FS)
        save_window_cache(tmp_path / "b.bin", segment_windows(rec), fs_hz=FS)
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
