"""Reconstruction-error scoring, threshold selection and grid searches.

An instance's anomaly score is the mean of its squared reconstruction
deviations over the five features, so scalar thresholds stay comparable
regardless of feature count. The decision threshold starts from the
84th percentile of the score distribution (acknowledging roughly 16%
outliers) and is then refined by sweeping score percentiles for the
best F1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autoencoder as ae
from . import iforest as iso
from .frame import FeatureFrame
from .metrics import confusion, f1 as f1_score

# Percentile sweep grid: 50.0, 50.1, ..., 99.9
DEFAULT_PERCENTILE_GRID = np.arange(500, 1000) / 10.0
INITIAL_PERCENTILE = 84.0


def squared_deviations(model: ae.AutoencoderModel, frame) -> np.ndarray:
    """Per-instance, per-feature squared reconstruction deviations (n, 5)."""
    x = frame.values if isinstance(frame, FeatureFrame) else np.asarray(frame, dtype=np.float64)
    err = ae.forward(model, x) - x
    return err * err


def reconstruction_errors(model: ae.AutoencoderModel, frame) -> np.ndarray:
    """Anomaly score per instance: mean squared deviation over features."""
    return squared_deviations(model, frame).mean(axis=1)


def initial_threshold(scores, percentile: float = INITIAL_PERCENTILE) -> float:
    """Percentile of the score distribution (linear interpolation).

    Feed per-instance scores for the default per-instance convention, or
    a flattened squared_deviations matrix to pool per-feature deviations
    into one population instead.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no scores")
    return float(np.percentile(arr.ravel(), percentile))


@dataclass
class ThresholdResult:
    threshold: float
    f1: float  # percent
    percentile: float
    degenerate: bool = False


def classify(scores, threshold: float) -> np.ndarray:
    """True (anomalous) where score exceeds the threshold."""
    return np.asarray(scores, dtype=np.float64) > threshold


def select_threshold(scores, labels, percentile_grid=None) -> ThresholdResult:
    """Pick the F1-maximizing score-percentile threshold.

    Candidates are percentiles of the scores themselves (default grid
    50.0-99.9 in steps of 0.1); an instance is called anomalous when its
    score exceeds the candidate. Ties resolve to the lowest percentile.
    Single-class labels short-circuit to a degenerate result: a
    threshold above the max score when everything is normal, below the
    min when everything is anomalous.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.size == 0 or y.size == 0:
        raise ValueError("empty scores or labels")
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")

    if not y.any():  # all normal
        t = float(np.nextafter(s.max(), np.inf))
        return ThresholdResult(t, 100.0, 100.0, degenerate=True)
    if y.all():  # all anomalous
        t = float(np.nextafter(s.min(), -np.inf))
        return ThresholdResult(t, 0.0, 0.0, degenerate=True)

    grid = DEFAULT_PERCENTILE_GRID if percentile_grid is None else np.asarray(percentile_grid)
    if grid.size == 0:
        raise ValueError("empty percentile grid")
    candidates = np.percentile(s, grid)

    # Sort scores once; prefix sums give the confusion counts for every
    # candidate without rescanning the data.
    order = np.argsort(s, kind="stable")
    sorted_scores = s[order]
    anom_prefix = np.concatenate([[0], np.cumsum(y[order])])
    n = s.size
    n_anom = int(y.sum())

    # predicted normal = scores <= t, i.e. the first k sorted instances
    k = np.searchsorted(sorted_scores, candidates, side="right")
    fp = anom_prefix[k]  # anomalies predicted normal
    tp = k - fp  # normals predicted normal
    fn = (n - n_anom) - tp  # normals predicted anomalous
    f1_values = np.where(tp > 0, 100.0 * tp / (tp + 0.5 * (fp + fn)), 0.0)

    best = int(np.argmax(f1_values))
    return ThresholdResult(
        threshold=float(candidates[best]),
        f1=float(f1_values[best]),
        percentile=float(grid[best]),
    )


@dataclass
class GridSpec:
    """Exhaustive search axes for the autoencoder and the isolation forest."""

    hidden_sizes: tuple[int, ...] = (16, 32, 64, 128)
    epochs: tuple[int, ...] = tuple(range(10, 101, 10))
    batch_sizes: tuple[int, ...] = (16, 32, 64, 128)
    activations: tuple[str, ...] = ("relu", "tanh", "sigmoid")
    contaminations: tuple[float, ...] = tuple(round(0.01 * i, 2) for i in range(1, 21))
    max_samples: tuple[float, ...] = tuple(round(0.10 + 0.05 * i, 2) for i in range(9))


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    table: list[dict]  # one row per grid point, axis order


def grid_search_autoencoder(
    train_frame, val_frame, grid: GridSpec | None = None, seed: int = 0
) -> GridResult:
    """Exhaustive sweep scored by negative validation reconstruction MSE.

    Every point trains a fresh seeded model; the argmax is taken in
    declared axis order, first winner on ties, so results are
    reproducible.
    """
    grid = grid or GridSpec()
    axes = (grid.hidden_sizes, grid.epochs, grid.batch_sizes, grid.activations)
    if any(len(a) == 0 for a in axes):
        raise ValueError("empty grid axis")
    x_val = val_frame.values if isinstance(val_frame, FeatureFrame) else val_frame

    best = None
    table = []
    for hidden, epochs, batch, activation in itertools.product(*axes):
        arch = ae.ArchSpec(hidden_sizes=(hidden,), activation=activation)
        model = ae.build_autoencoder(arch, seed=seed)
        cfg = ae.TrainConfig(epochs=epochs, batch_size=batch, shuffle_seed=seed)
        ae.train(model, train_frame, cfg)
        score = -ae.mse(ae.forward(model, x_val), x_val)
        row = {
            "hidden": hidden,
            "epochs": epochs,
            "batch_size": batch,
            "activation": activation,
            "score": score,
        }
        table.append(row)
        if best is None or score > best[0]:
            best = (score, row)
    params = {k: v for k, v in best[1].items() if k != "score"}
    return GridResult(best_params=params, best_score=best[0], table=table)


def grid_search_iforest(
    train_frame, val_frame, val_labels, grid: GridSpec | None = None, seed: int = 0
) -> GridResult:
    """Exhaustive (contamination, max_samples) sweep maximizing validation F1."""
    grid = grid or GridSpec()
    if len(grid.contaminations) == 0 or len(grid.max_samples) == 0:
        raise ValueError("empty grid axis")
    y = np.asarray(val_labels, dtype=bool)

    best = None
    table = []
    for fraction in grid.max_samples:
        forest = iso.fit_iforest(train_frame, max_samples=fraction, seed=seed)
        for contamination in grid.contaminations:
            preds = iso.iforest_classify(forest, val_frame, contamination)
            score = f1_score(confusion(y, preds))
            row = {"max_samples": fraction, "contamination": contamination, "score": score}
            table.append(row)
            if best is None or score > best[0]:
                best = (score, row)
    params = {k: v for k, v in best[1].items() if k != "score"}
    return GridResult(best_params=params, best_score=best[0], table=table)


def grid_table_rows(result: GridResult) -> list[dict]:
    """Grid scores as export-ready rows, one per point."""
    return list(result.table)


def write_grid_csv(result: GridResult, path) -> None:
    """Export a grid-search table: one CSV row per grid point."""
    import csv

    rows = grid_table_rows(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
