"""Federated training loop: local epochs, weighted aggregation, evaluation.

One client per machine. Every round the server pushes the global weight
vector, each client trains locally for the round's epoch budget on its
own partition, and the server aggregates the returned vectors weighted
by client sample counts. Clients keep their optimizer state and batch
shuffle stream across rounds, so a single-client schedule follows
exactly the same trajectory as uninterrupted local training.

Aggregation accumulates in extended precision before rounding back to
float64; that keeps the result inside the elementwise envelope of the
inputs and makes averaging identical vectors an exact no-op.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import anomaly
from . import autoencoder as ae
from .anomaly import ThresholdResult
from .frame import FeatureFrame
from .metrics import ConfusionMatrix, confusion

logger = logging.getLogger(__name__)

REFERENCE_THRESHOLD = 0.16225


def fedavg(updates: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-count-weighted average of client weight vectors.

    Summation runs in the given (client-index) order, so the result is a
    pure function of the ordered update list.
    """
    if not updates:
        raise ValueError("no client updates to aggregate")
    dim = np.asarray(updates[0][0]).shape
    total = 0
    for _, count in updates:
        if count <= 0:
            raise ValueError("sample counts must be positive")
        total += count
    total_ld = np.longdouble(total)
    acc = np.zeros(dim, dtype=np.longdouble)
    for vec, count in updates:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != dim:
            raise ValueError("client weight vectors differ in length")
        acc += (np.longdouble(count) / total_ld) * v.astype(np.longdouble)
    return np.asarray(acc, dtype=np.float64)


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit checksum (round-history fingerprint of weight bytes)."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


HISTORY_COLUMNS = ("round", "client", "epochs", "mean_loss", "global_checksum")


def write_history_csv(history: list[dict], path) -> None:
    """Export a run_schedule history: one row per (round, client)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        writer.writerows(history)


@dataclass
class FLSchedule:
    """Epochs per round x rounds; the product must equal the epoch budget."""

    epochs_per_round: int
    rounds: int
    budget: int = 80

    def __post_init__(self):
        if self.epochs_per_round < 1 or self.rounds < 1:
            raise ValueError("epochs_per_round and rounds must be >= 1")
        if self.epochs_per_round * self.rounds != self.budget:
            raise ValueError(
                f"schedule {self.epochs_per_round}x{self.rounds} does not meet "
                f"the budget of {self.budget} epochs"
            )


# epoch-per-round / round combinations explored for an 80-epoch budget
SCHEDULE_COMBOS = ((1, 80), (2, 40), (4, 20), (5, 16), (8, 10), (10, 8), (16, 5), (20, 4), (40, 2), (80, 1))


@dataclass
class ClientState:
    """One machine's local data, model and training state."""

    client_id: str
    train_frame: FeatureFrame
    val_frame: FeatureFrame
    model: ae.AutoencoderModel
    optimizer: ae.AdamState
    shuffle_rng: np.random.Generator
    threshold: float | None = None

    @property
    def n_samples(self) -> int:
        return len(self.train_frame)


@dataclass
class GlobalModel:
    """Server-side weight vector plus round index and loss history."""

    arch: ae.ArchSpec
    weights: np.ndarray
    round_index: int = 0
    loss_history: list[float] = field(default_factory=list)

    def materialize(self) -> ae.AutoencoderModel:
        model = ae.AutoencoderModel(self.arch)
        ae.set_weights(model, self.weights)
        return model


def init_global(arch: ae.ArchSpec, seed: int) -> GlobalModel:
    model = ae.build_autoencoder(arch, seed=seed)
    return GlobalModel(arch=arch, weights=ae.get_weights(model))


def make_clients(
    train_by_machine: dict[str, FeatureFrame],
    val_by_machine: dict[str, FeatureFrame],
    arch: ae.ArchSpec,
    seed: int,
) -> list[ClientState]:
    """One client per machine, each with an independent derived RNG stream."""
    clients = []
    for idx, (machine_id, train_frame) in enumerate(train_by_machine.items()):
        if len(train_frame) == 0:
            raise ValueError(f"client {machine_id!r} has no training data")
        init_seed = np.random.SeedSequence([seed, idx, 0xC11E])
        clients.append(
            ClientState(
                client_id=machine_id,
                train_frame=train_frame,
                val_frame=val_by_machine.get(machine_id, train_frame.take([])),
                model=ae.build_autoencoder(arch, seed=int(init_seed.generate_state(1)[0])),
                optimizer=ae.AdamState(ae.param_count(arch)),
                shuffle_rng=np.random.default_rng(np.random.SeedSequence([seed, idx])),
            )
        )
    return clients


def run_round(
    global_model: GlobalModel,
    clients: list[ClientState],
    epochs: int,
    cfg: ae.TrainConfig,
) -> dict[str, float]:
    """One federated round; returns each client's mean local training loss."""
    updates = []
    losses: dict[str, float] = {}
    round_cfg = ae.TrainConfig(
        epochs=epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    for client in clients:
        ae.set_weights(client.model, global_model.weights)
        trace = ae.train(
            client.model,
            client.train_frame,
            round_cfg,
            optimizer=client.optimizer,
            shuffle_rng=client.shuffle_rng,
        )
        losses[client.client_id] = float(np.mean(trace)) if trace else float("nan")
        updates.append((ae.get_weights(client.model), client.n_samples))

    global_model.weights = fedavg(updates)
    global_model.round_index += 1
    finite = [v for v in losses.values() if np.isfinite(v)]
    global_model.loss_history.append(float(np.mean(finite)) if finite else float("nan"))
    return losses


def run_schedule(
    schedule: FLSchedule,
    clients: list[ClientState],
    global_model: GlobalModel,
    cfg: ae.TrainConfig | None = None,
) -> tuple[GlobalModel, list[dict]]:
    """Execute all rounds of a schedule, recording a per-round history.

    History rows carry each client's epoch count and mean loss plus a
    checksum of the aggregated global weights after the round.
    """
    cfg = cfg or ae.TrainConfig()
    scratch = global_model.materialize()
    history = []
    for _ in range(schedule.rounds):
        losses = run_round(global_model, clients, schedule.epochs_per_round, cfg)
        ae.set_weights(scratch, global_model.weights)
        checksum = fnv1a64(ae.serialize(scratch))
        for client in clients:
            history.append(
                {
                    "round": global_model.round_index,
                    "client": client.client_id,
                    "epochs": schedule.epochs_per_round,
                    "mean_loss": losses[client.client_id],
                    "global_checksum": checksum,
                }
            )
    return global_model, history


def tune_client_thresholds(
    global_model: GlobalModel,
    clients: list[ClientState],
    percentile_grid=None,
    reference: float = REFERENCE_THRESHOLD,
) -> dict[str, ThresholdResult]:
    """Per-client F1-maximizing thresholds on local validation errors.

    The shared reference threshold is kept alongside each result for
    comparison. Clients without validation data are skipped with a
    warning.
    """
    model = global_model.materialize()
    results: dict[str, ThresholdResult] = {}
    for client in clients:
        if len(client.val_frame) == 0:
            logger.warning("client %s has no validation data; skipping", client.client_id)
            continue
        if client.val_frame.labels is None:
            raise ValueError(f"client {client.client_id!r} validation data has no labels")
        errors = anomaly.reconstruction_errors(model, client.val_frame)
        result = anomaly.select_threshold(errors, client.val_frame.labels, percentile_grid)
        client.threshold = result.threshold
        results[client.client_id] = result
        logger.debug(
            "client %s threshold %.5f (reference %.5f)",
            client.client_id,
            result.threshold,
            reference,
        )
    return results


def evaluate_global(
    global_model: GlobalModel, test_frame: FeatureFrame, threshold: float
) -> ConfusionMatrix:
    """Confusion matrix of the global model on a labeled test frame."""
    if test_frame.labels is None:
        raise ValueError("test frame has no labels")
    model = global_model.materialize()
    errors = anomaly.reconstruction_errors(model, test_frame)
    return confusion(test_frame.labels, anomaly.classify(errors, threshold))


def evaluate_per_client(
    global_model: GlobalModel,
    test_frame: FeatureFrame,
    threshold: float | dict[str, float],
) -> dict[str, ConfusionMatrix]:
    """Per-machine confusion matrices; threshold may be shared or per client."""
    out = {}
    for machine_id, sub in test_frame.by_machine().items():
        t = threshold[machine_id] if isinstance(threshold, dict) else threshold
        out[machine_id] = evaluate_global(global_model, sub, t)
    return out
