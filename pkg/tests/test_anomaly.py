import numpy as np
import pytest

from fedlora.anomaly import (
    DEFAULT_PERCENTILE_GRID,
    GridSpec,
    classify,
    grid_search_autoencoder,
    grid_search_iforest,
    initial_threshold,
    reconstruction_errors,
    select_threshold,
    squared_deviations,
)
from fedlora.autoencoder import ArchSpec, build_autoencoder, forward, set_weights
from fedlora.frame import FeatureFrame
from fedlora.metrics import confusion, f1


def _identity_like_model():
    # zero weights reconstruct zero: perfect on zero input
    model = build_autoencoder(ArchSpec(), seed=0)
    set_weights(model, np.zeros(model.n_params))
    return model


def _frame(values):
    values = np.asarray(values, dtype=float)
    return FeatureFrame(values, np.array(["Manitou"] * len(values)))


class TestReconstructionErrors:
    def test_perfect_reconstructor_zero_scores(self):
        model = _identity_like_model()
        assert np.all(reconstruction_errors(model, np.zeros((10, 5))) == 0.0)

    def test_farther_instance_scores_higher(self):
        model = _identity_like_model()  # reconstruction is always 0
        x = np.vstack([np.full(5, 0.1), np.full(5, 2.0)])
        scores = reconstruction_errors(model, x)
        assert scores[1] > scores[0]

    def test_scores_match_per_row_oracle(self):
        model = build_autoencoder(ArchSpec(), seed=1)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 5))
        recon = forward(model, x)
        scores = reconstruction_errors(model, x)
        for i in range(30):
            acc = 0.0
            for j in range(5):
                acc += (x[i, j] - recon[i, j]) ** 2
            assert scores[i] == pytest.approx(acc / 5, rel=1e-12)

    def test_squared_deviations_shape(self):
        model = build_autoencoder(ArchSpec(), seed=3)
        x = np.random.default_rng(4).normal(size=(7, 5))
        assert squared_deviations(model, x).shape == (7, 5)


class TestInitialThreshold:
    def test_hundred_scores_interpolated(self):
        assert initial_threshold(np.arange(100.0)) == pytest.approx(83.16)

    def test_constant_scores(self):
        assert initial_threshold([3.3] * 10) == pytest.approx(3.3)

    def test_appending_larger_max_never_lowers(self):
        rng = np.random.default_rng(5)
        scores = rng.uniform(0, 1, size=50)
        base = initial_threshold(scores)
        widened = initial_threshold(np.append(scores, 100.0))
        assert widened >= base

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            initial_threshold([])

    def test_pooled_population_accepts_matrix(self):
        model = build_autoencoder(ArchSpec(), seed=6)
        x = np.random.default_rng(7).normal(size=(40, 5))
        pooled = initial_threshold(squared_deviations(model, x).ravel())
        assert pooled >= 0.0


class TestClassify:
    def test_infinite_threshold_all_normal(self):
        assert not classify([1.0, 5.0, 9.0], np.inf).any()

    def test_below_min_all_anomalous(self):
        assert classify([1.0, 5.0, 9.0], 0.5).all()

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(8)
        scores = rng.uniform(0, 1, size=200)
        t = 0.4
        assert np.array_equal(classify(scores, t), scores > t)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(9)
        scores = rng.uniform(0, 1, size=100)
        lower = classify(scores, 0.3)
        higher = classify(scores, 0.6)
        # raising the threshold never turns a normal into an anomaly
        assert not np.any(higher & ~lower)


def _midpoint_oracle_f1(scores, labels):
    uniq = np.unique(scores)
    candidates = [(uniq[i] + uniq[i + 1]) / 2 for i in range(len(uniq) - 1)]
    candidates.append(uniq[-1] + 1.0)
    return max(f1(confusion(labels, scores > t)) for t in candidates)


class TestSelectThreshold:
    def test_separable_case(self):
        scores = np.array([0.1, 0.2, 0.9, 1.0])
        labels = np.array([False, False, True, True])
        res = select_threshold(scores, labels)
        assert res.f1 == 100.0
        assert 0.2 <= res.threshold < 0.9
        assert not res.degenerate

    def test_all_normal_degenerate(self):
        scores = np.array([0.5, 0.6, 0.7])
        res = select_threshold(scores, np.zeros(3, dtype=bool))
        assert res.degenerate
        assert res.threshold > 0.7
        assert res.f1 == 100.0
        assert not classify(scores, res.threshold).any()

    def test_all_anomalous_degenerate(self):
        scores = np.array([0.5, 0.6, 0.7])
        res = select_threshold(scores, np.ones(3, dtype=bool))
        assert res.degenerate
        assert classify(scores, res.threshold).all()

    def test_matches_midpoint_oracle_on_random_cases(self):
        rng = np.random.default_rng(10)
        full_grid = np.arange(0, 1001) / 10.0
        for _ in range(40):
            n = int(rng.integers(10, 200))
            labels = rng.random(n) < rng.uniform(0.1, 0.5)
            if labels.all() or not labels.any():
                continue
            scores = rng.normal(size=n)
            res = select_threshold(scores, labels, full_grid)
            assert res.f1 == pytest.approx(_midpoint_oracle_f1(scores, labels), abs=1e-9)

    def test_never_below_initial_threshold_f1(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(20, 300))
            labels = rng.random(n) < 0.2
            if labels.all() or not labels.any():
                continue
            scores = np.abs(rng.normal(size=n)) + labels * rng.uniform(0, 3)
            res = select_threshold(scores, labels)
            ref = f1(confusion(labels, classify(scores, initial_threshold(scores))))
            assert res.f1 >= ref - 1e-12

    def test_tie_breaks_to_lowest_percentile(self):
        # a flat stretch of the F1 landscape: every candidate separates
        # perfectly, so the lowest percentile must win
        scores = np.array([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])
        labels = np.array([False, False, False, True, True, True])
        res = select_threshold(scores, labels, np.array([50.0, 60.0, 70.0]))
        assert res.f1 == 100.0
        assert res.percentile == 50.0

    def test_default_grid_contains_84(self):
        assert 84.0 in DEFAULT_PERCENTILE_GRID

    def test_errors(self):
        with pytest.raises(ValueError):
            select_threshold([], [])
        with pytest.raises(ValueError):
            select_threshold([1.0, 2.0], [True])
        with pytest.raises(ValueError):
            select_threshold([np.nan, 1.0], [True, False])


class TestGridSearchAutoencoder:
    def _tiny_frames(self):
        rng = np.random.default_rng(12)
        train = _frame(rng.normal(size=(60, 5)))
        val = _frame(rng.normal(size=(30, 5)))
        return train, val

    def test_single_point_grid(self):
        train, val = self._tiny_frames()
        grid = GridSpec(hidden_sizes=(8,), epochs=(5,), batch_sizes=(16,), activations=("tanh",))
        res = grid_search_autoencoder(train, val, grid, seed=0)
        assert res.best_params == {
            "hidden": 8,
            "epochs": 5,
            "batch_size": 16,
            "activation": "tanh",
        }
        assert len(res.table) == 1

    def test_trained_point_beats_untrained(self):
        train, val = self._tiny_frames()
        grid = GridSpec(hidden_sizes=(8,), epochs=(0, 40), batch_sizes=(16,), activations=("tanh",))
        res = grid_search_autoencoder(train, val, grid, seed=1)
        assert res.best_params["epochs"] == 40

    def test_deterministic(self):
        train, val = self._tiny_frames()
        grid = GridSpec(hidden_sizes=(4, 8), epochs=(3,), batch_sizes=(16,), activations=("tanh",))
        a = grid_search_autoencoder(train, val, grid, seed=2)
        b = grid_search_autoencoder(train, val, grid, seed=2)
        assert a.best_params == b.best_params
        assert [r["score"] for r in a.table] == [r["score"] for r in b.table]

    def test_empty_axis_errors(self):
        train, val = self._tiny_frames()
        with pytest.raises(ValueError):
            grid_search_autoencoder(train, val, GridSpec(hidden_sizes=()), seed=0)

    def test_table_covers_product(self):
        train, val = self._tiny_frames()
        grid = GridSpec(
            hidden_sizes=(4, 8), epochs=(2, 3), batch_sizes=(16, 32), activations=("tanh", "relu")
        )
        res = grid_search_autoencoder(train, val, grid, seed=3)
        assert len(res.table) == 16


class TestGridSearchIForest:
    def test_single_point(self):
        rng = np.random.default_rng(13)
        train = _frame(rng.normal(size=(100, 5)))
        val_values = rng.normal(size=(50, 5))
        labels = np.zeros(50, dtype=bool)
        labels[:5] = True
        val_values[:5] += 8.0
        grid = GridSpec(contaminations=(0.1,), max_samples=(0.3,))
        res = grid_search_iforest(train, _frame(val_values), labels, grid, seed=0)
        assert res.best_params == {"max_samples": 0.3, "contamination": 0.1}

    def test_planted_contamination_recovered(self):
        rng = np.random.default_rng(14)
        planted = 0.10
        n = 600
        train_values = rng.uniform(0, 1, size=(n, 5))
        train_labels = rng.random(n) < planted
        train_values[train_labels] += 6.0
        val_values = rng.uniform(0, 1, size=(n, 5))
        val_labels = rng.random(n) < planted
        val_values[val_labels] += 6.0
        grid = GridSpec(
            contaminations=tuple(round(0.02 * i, 2) for i in range(1, 11)),
            max_samples=(0.3,),
        )
        res = grid_search_iforest(
            _frame(train_values), _frame(val_values), val_labels, grid, seed=1
        )
        assert abs(res.best_params["contamination"] - val_labels.mean()) <= 0.03

    def test_empty_axis(self):
        with pytest.raises(ValueError):
            grid_search_iforest(
                _frame(np.zeros((10, 5))), _frame(np.zeros((4, 5))), np.zeros(4, bool),
                GridSpec(contaminations=()), seed=0,
            )


def test_write_grid_csv(tmp_path):
    rng = np.random.default_rng(20)
    train = _frame(rng.normal(size=(40, 5)))
    val = _frame(rng.normal(size=(20, 5)))
    grid = GridSpec(hidden_sizes=(4,), epochs=(2, 3), batch_sizes=(16,), activations=("tanh",))
    res = grid_search_autoencoder(train, val, grid, seed=0)
    from fedlora.anomaly import write_grid_csv

    path = tmp_path / "grid.csv"
    write_grid_csv(res, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "hidden,epochs,batch_size,activation,score"
    assert len(lines) == 3
