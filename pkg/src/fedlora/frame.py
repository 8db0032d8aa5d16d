"""Core feature-matrix container shared by the whole pipeline.

Every model in this package consumes the same five machine signals:
battery voltage, fuel consumption, engine RPM, water temperature and
oil pressure. A FeatureFrame is a plain numpy matrix of those signals
plus the machine each row came from and (optionally) anomaly labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEATURE_NAMES = ("battery", "consumption", "rpm", "water_temp", "oil_pressure")
N_FEATURES = len(FEATURE_NAMES)


class Machine(str, Enum):
    """The four monitored machines."""

    MANITOU = "Manitou"
    ATLAS_D7 = "AtlasD7"
    JAW_CRUSHER = "JawCrusher"
    DOOSAN_DL200 = "DoosanDL200"


MACHINES = tuple(Machine)


def machine_from_name(name: str) -> Machine:
    """Resolve a machine from a loosely formatted identifier.

    Accepts enum values in any case plus identifiers with separators
    stripped (e.g. "atlas-d7", "doosan_dl200").
    """
    key = "".join(ch for ch in name.lower() if ch.isalnum())
    for m in Machine:
        if key == "".join(ch for ch in m.value.lower() if ch.isalnum()):
            return m
    raise ValueError(f"unknown machine id: {name!r}")


@dataclass
class FeatureFrame:
    """Instances x 5 selected features, with machine ids and optional labels.

    `values` is float64 with columns in FEATURE_NAMES order. `labels`,
    when present, marks anomalous instances with True.
    """

    values: np.ndarray
    machine_ids: np.ndarray
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != N_FEATURES:
            raise ValueError(
                f"feature matrix must be (n, {N_FEATURES}), got {self.values.shape}"
            )
        self.machine_ids = np.asarray(self.machine_ids)
        if self.machine_ids.shape != (self.values.shape[0],):
            raise ValueError("machine_ids length must match instance count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape != (self.values.shape[0],):
                raise ValueError("labels length must match instance count")

    def __len__(self) -> int:
        return self.values.shape[0]

    def take(self, indices) -> "FeatureFrame":
        """Row subset by integer indices or boolean mask (copy)."""
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        else:
            idx = idx.astype(np.intp)
        return FeatureFrame(
            values=self.values[idx].copy(),
            machine_ids=self.machine_ids[idx].copy(),
            labels=None if self.labels is None else self.labels[idx].copy(),
        )

    def with_labels(self, labels) -> "FeatureFrame":
        return FeatureFrame(self.values.copy(), self.machine_ids.copy(), labels)

    def machines(self) -> list[str]:
        """Machine ids present, in canonical machine order."""
        present = set(self.machine_ids.tolist())
        return [m.value for m in MACHINES if m.value in present]

    def by_machine(self) -> dict[str, "FeatureFrame"]:
        """Split into one frame per machine, canonical order."""
        out = {}
        for mid in self.machines():
            out[mid] = self.take(np.flatnonzero(self.machine_ids == mid))
        return out

    def counts_by_machine(self) -> dict[str, int]:
        return {mid: int(np.sum(self.machine_ids == mid)) for mid in self.machines()}


def concat_frames(frames: list[FeatureFrame]) -> FeatureFrame:
    """Stack frames row-wise. Labels are kept only if every frame has them."""
    if not frames:
        raise ValueError("nothing to concatenate")
    values = np.concatenate([f.values for f in frames], axis=0)
    machine_ids = np.concatenate([f.machine_ids for f in frames], axis=0)
    labels = None
    if all(f.labels is not None for f in frames):
        labels = np.concatenate([f.labels for f in frames], axis=0)
    return FeatureFrame(values, machine_ids, labels)
