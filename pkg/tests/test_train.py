"""Training loop, threshold selection, and weighting rules."""

import numpy as np
import pytest

from afkit.errors import EmptySplit, NoPositives, TrainingDiverged
from afkit.metrics import f1_score
from afkit.models import build_rr_baseline
from afkit.train import (
    TrainConfig,
    resolve_pos_weight,
    select_threshold,
    train,
    windows_to_arrays,
)
from afkit.windowing import BeatWindow


def toy_beat_windows(n, seed, positive_fraction=0.5):
    """Separable toy set: class 1 has short irregular RR, class 0 long regular."""
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(n):
        label = int(rng.random() < positive_fraction)
        if label:
            rr = rng.uniform(0.35, 1.1, size=60)
        else:
            rr = rng.normal(0.85, 0.03, size=60)
        start = 100.0 * i
        windows.append(
            BeatWindow(record_id=f"r{i}", rr_s=rr.astype(np.float32),
                       start_s=start, end_s=start + float(rr.sum()), label=label)
        )
    return windows


class TestSelectThreshold:
    def test_two_point_case(self):
        assert select_threshold([0.1, 0.9], [0, 1]) == 0.5

    def test_all_positive_gives_zero(self):
        assert select_threshold([0.3, 0.7, 0.5], [1, 1, 1]) == 0.0

    def test_needs_positive(self):
        with pytest.raises(NoPositives):
            select_threshold([0.2, 0.4], [0, 0])

    def test_dominates_random_thresholds(self):
        rng = np.random.default_rng(0)
        probs = rng.random(300)
        labels = (probs + rng.normal(0, 0.3, 300) > 0.5).astype(int)
        if labels.max() == 0:
            labels[0] = 1
        t_star = select_threshold(probs, labels)
        best = f1_score(probs >= t_star, labels)
        for t in rng.random(1000):
            assert best >= f1_score(probs >= t, labels) - 1e-12

    def test_ties_prefer_smallest(self):
        # Any threshold in (0.2, 0.8) yields F1 = 1; candidates are midpoints,
        # so 0.5 is the unique interior candidate here.
        assert select_threshold([0.2, 0.8], [0, 1]) == 0.5
        # Separated duplicates: midpoint candidates {0, .35, 1}.
        t = select_threshold([0.2, 0.5, 0.5], [0, 1, 1])
        assert t == 0.35


class TestPosWeight:
    def test_auto_ratio(self):
        labels = np.array([0] * 90 + [1] * 10, dtype=float)
        assert resolve_pos_weight("auto", labels) == pytest.approx(9.0)

    def test_explicit_value(self):
        assert resolve_pos_weight(2.5, np.array([0.0, 1.0])) == 2.5

    def test_degenerate_labels_fall_back_to_one(self):
        assert resolve_pos_weight("auto", np.zeros(10)) == 1.0
        assert resolve_pos_weight("auto", np.ones(10)) == 1.0

    def test_invalid_value(self):
        with pytest.raises(ValueError):
            resolve_pos_weight(-1.0, np.array([0.0, 1.0]))


class TestWindowsToArrays:
    def test_shapes(self):
        windows = toy_beat_windows(8, seed=1)
        x, y = windows_to_arrays(windows)
        assert x.shape == (8, 1, 60)
        assert y.shape == (8,)
        assert x.dtype == np.float32

    def test_empty_raises(self):
        with pytest.raises(EmptySplit):
            windows_to_arrays([])


class TestTrain:
    def test_separable_toy_set_learns(self):
        model = build_rr_baseline(seed=0)
        cfg = TrainConfig(epochs=2, batch_size=32, seed=0)
        model, threshold, history = train(
            model, toy_beat_windows(240, seed=2), toy_beat_windows(80, seed=3), cfg
        )
        assert len(history.epochs) == 2
        assert history.epochs[1].train_loss < history.epochs[0].train_loss
        assert history.epochs[-1].val_f1 >= 0.95
        assert 0.0 <= threshold <= 1.0

    def test_pos_weight_recorded(self):
        model = build_rr_baseline(seed=0)
        cfg = TrainConfig(epochs=1, seed=0)
        _, _, history = train(
            model, toy_beat_windows(100, seed=4, positive_fraction=0.1),
            toy_beat_windows(40, seed=5), cfg,
        )
        labels = np.array([w.label for w in toy_beat_windows(100, seed=4,
                                                             positive_fraction=0.1)])
        expected = (labels == 0).sum() / (labels == 1).sum()
        assert history.pos_weight == pytest.approx(expected)

    def test_fixed_seed_reproducible(self):
        runs = []
        for _ in range(2):
            model = build_rr_baseline(seed=7)
            cfg = TrainConfig(epochs=1, seed=7)
            model, threshold, _ = train(
                model, toy_beat_windows(120, seed=8), toy_beat_windows(40, seed=9), cfg
            )
            runs.append((threshold, {k: v.copy() for k, v in model.named_params().items()}))
        assert runs[0][0] == runs[1][0]
        for name, arr in runs[0][1].items():
            np.testing.assert_array_equal(arr, runs[1][1][name])

    def test_nan_input_diverges(self):
        windows = toy_beat_windows(40, seed=10)
        poisoned = windows[0].rr_s.copy()
        poisoned[5] = np.nan
        windows[0] = BeatWindow(record_id="bad", rr_s=poisoned, start_s=0.0,
                                end_s=50.0, label=windows[0].label)
        model = build_rr_baseline(seed=0)
        with pytest.raises(TrainingDiverged):
            train(model, windows, toy_beat_windows(20, seed=11),
                  TrainConfig(epochs=1, seed=0))

    def test_empty_split_raises(self):
        model = build_rr_baseline(seed=0)
        with pytest.raises(EmptySplit):
            train(model, [], toy_beat_windows(10, seed=12), TrainConfig(seed=0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
