"""Telemetry acquisition: file ingestion and calibrated synthetic generation.

Records carry the five selected machine signals with per-field validity
flags. Sources are a canonical CSV layout, TTN-style uplink JSON
documents, or a synthetic generator tuned to the default per-machine
instance counts and anomaly rate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .frame import FEATURE_NAMES, MACHINES, N_FEATURES, FeatureFrame, Machine, machine_from_name
from .labeling import DEFAULT_RANGES, RangeSpec

# CSV column layout (header names, in order)
CSV_COLUMNS = (
    "timestamp",
    "machine_id",
    "battery_v",
    "consumption_lph",
    "rpm",
    "water_c",
    "oil_bar",
)
# CSV feature columns mapped onto internal feature order
CSV_FEATURES = ("battery_v", "consumption_lph", "rpm", "water_c", "oil_bar")

# The source bus marks unusable readings with an all-ones byte pattern;
# in text form that is the token "FF". An empty cell counts too.
INVALID_SENTINEL = "FF"

# Default per-machine instance counts of the calibration dataset.
DEFAULT_COUNTS = {
    Machine.MANITOU.value: 10150,
    Machine.ATLAS_D7.value: 388,
    Machine.JAW_CRUSHER.value: 6677,
    Machine.DOOSAN_DL200.value: 11507,
}
DEFAULT_ANOMALY_FRACTION = 0.1644

# 2023-03-01T00:00:00Z, start of the monitoring campaign
_SYNTHETIC_EPOCH = 1677628800


@dataclass
class Record:
    """One telemetry reading: five feature values plus validity flags.

    Invalid fields hold NaN in `values` and False in `valid`.
    """

    timestamp: float
    machine: Machine
    values: np.ndarray  # (5,) float64, FEATURE_NAMES order
    valid: np.ndarray  # (5,) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != (N_FEATURES,) or self.valid.shape != (N_FEATURES,):
            raise ValueError("record must carry exactly 5 feature values and flags")

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.machine == other.machine
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def all_valid(self) -> bool:
        return bool(self.valid.all())


@dataclass
class RecordSet:
    """Ordered records plus provenance and an ingestion/cleaning audit."""

    records: list[Record]
    provenance: str  # "csv", "ttn_json" or "synthetic"
    audit: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def counts_by_machine(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.records:
            counts[rec.machine.value] = counts.get(rec.machine.value, 0) + 1
        return {m.value: counts.get(m.value, 0) for m in MACHINES if m.value in counts}


@dataclass
class GenConfig:
    """Synthetic generator settings.

    `counts` gives instances per machine; `scale` shrinks or grows all
    counts proportionally (rounded per machine). Anomalous instances get
    exactly one feature displaced beyond its normal range by 10-50% of
    the range width, on a uniformly chosen side.
    """

    counts: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    anomaly_fraction: float = DEFAULT_ANOMALY_FRACTION
    ranges: RangeSpec = field(default_factory=lambda: DEFAULT_RANGES)
    seed: int = 7
    scale: float = 1.0

    def validate(self):
        for mid, n in self.counts.items():
            machine_from_name(mid)
            if n < 0:
                raise ValueError(f"count for {mid} must be >= 0")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ValueError("anomaly_fraction must lie in [0, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def effective_counts(self) -> dict[str, int]:
        return {mid: int(round(n * self.scale)) for mid, n in self.counts.items()}


def _parse_cell(text: str) -> tuple[float, bool]:
    """Parse one feature cell: number, or the invalid sentinel / empty."""
    token = text.strip()
    if token == "" or token.upper() == INVALID_SENTINEL:
        return math.nan, False
    return float(token), True  # may raise ValueError


def ingest_csv(path, schema: dict[str, str] | None = None) -> RecordSet:
    """Read telemetry records from a CSV file.

    `schema` maps canonical column names (CSV_COLUMNS) to the file's
    actual header names; by default the canonical names are expected.
    Rows whose timestamp or machine id fail to parse, or whose feature
    cells hold neither a number nor the invalid sentinel, are skipped
    and counted in the returned set's audit.
    """
    mapping = dict(schema) if schema else {c: c for c in CSV_COLUMNS}
    for canonical in CSV_COLUMNS:
        if canonical not in mapping:
            raise ValueError(f"schema missing mapping for column {canonical!r}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [mapping[c] for c in CSV_COLUMNS if mapping[c] not in header]
        if missing:
            raise ValueError(f"CSV is missing mapped columns: {missing}")

        records: list[Record] = []
        skipped = 0
        for row in reader:
            try:
                ts = float(row[mapping["timestamp"]])
                machine = machine_from_name(row[mapping["machine_id"]])
                values = np.empty(N_FEATURES)
                valid = np.empty(N_FEATURES, dtype=bool)
                for j, col in enumerate(CSV_FEATURES):
                    values[j], valid[j] = _parse_cell(row[mapping[col]])
            except (ValueError, TypeError):
                skipped += 1
                continue
            records.append(Record(ts, machine, values, valid))

    if not records:
        raise ValueError(f"no parseable rows in {path}")
    return RecordSet(records, provenance="csv", audit={"rows_skipped": skipped})


def write_csv(rs: RecordSet, path) -> None:
    """Write records in the canonical CSV layout (invalid fields as the sentinel)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in rs:
            cells = [repr(rec.timestamp) if rec.timestamp % 1 else str(int(rec.timestamp)),
                     rec.machine.value]
            for j in range(N_FEATURES):
                cells.append(repr(float(rec.values[j])) if rec.valid[j] else INVALID_SENTINEL)
            writer.writerow(cells)


def _parse_rfc3339(text: str) -> float:
    """RFC 3339 timestamp to unix seconds. Tolerates 'Z' and long fractions."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    # fromisoformat on 3.10 only takes up to 6 fractional digits
    if "." in t:
        head, _, rest = t.partition(".")
        frac = ""
        i = 0
        while i < len(rest) and rest[i].isdigit():
            frac += rest[i]
            i += 1
        t = head + "." + (frac[:6] or "0") + rest[i:]
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def decode_ttn_uplink(text: str) -> Record:
    """Decode one TTN-style uplink JSON document into a Record.

    Expected shape: `end_device_ids.device_id`, `received_at` (RFC 3339)
    and `uplink_message.decoded_payload` with the five feature fields.
    Missing payload fields become invalid flags; unknown extras are
    ignored.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed uplink JSON: {exc}") from exc

    device = (doc.get("end_device_ids") or {}).get("device_id")
    if not device:
        raise ValueError("uplink is missing end_device_ids.device_id")
    received = doc.get("received_at")
    if not received:
        raise ValueError("uplink is missing received_at")

    payload = (doc.get("uplink_message") or {}).get("decoded_payload") or {}
    values = np.full(N_FEATURES, math.nan)
    valid = np.zeros(N_FEATURES, dtype=bool)
    for j, col in enumerate(CSV_FEATURES):
        if col in payload and payload[col] is not None:
            values[j] = float(payload[col])
            valid[j] = True
    return Record(_parse_rfc3339(received), machine_from_name(device), values, valid)


def encode_ttn_uplink(rec: Record) -> str:
    """Render a Record in the uplink JSON shape accepted by decode_ttn_uplink."""
    payload = {
        col: float(rec.values[j])
        for j, col in enumerate(CSV_FEATURES)
        if rec.valid[j]
    }
    received = datetime.fromtimestamp(rec.timestamp, tz=timezone.utc)
    doc = {
        "end_device_ids": {"device_id": rec.machine.value},
        "received_at": received.isoformat().replace("+00:00", "Z"),
        "uplink_message": {"decoded_payload": payload},
    }
    return json.dumps(doc)


def ingest_ttn_json(path) -> RecordSet:
    """Read a file of TTN uplink documents (one JSON object per line)."""
    records: list[Record] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(decode_ttn_uplink(line))
            except ValueError:
                skipped += 1
    if not records:
        raise ValueError(f"no parseable uplinks in {path}")
    return RecordSet(records, provenance="ttn_json", audit={"rows_skipped": skipped})


def clean(rs: RecordSet) -> RecordSet:
    """Drop records with any invalid feature or a non-positive timestamp.

    Removal counts by reason land in the returned set's audit. Cleaning
    is idempotent and preserves record order.
    """
    kept: list[Record] = []
    invalid_feature = 0
    invalid_epoch = 0
    for rec in rs:
        if not rec.all_valid():
            invalid_feature += 1
        elif rec.timestamp <= 0:
            invalid_epoch += 1
        else:
            kept.append(rec)
    return RecordSet(
        kept,
        provenance=rs.provenance,
        audit={"removed_invalid_feature": invalid_feature, "removed_invalid_epoch": invalid_epoch},
    )


def select_features(rs: RecordSet) -> FeatureFrame:
    """Project cleaned records onto the 5-feature matrix, keeping machine ids."""
    if len(rs) == 0:
        raise ValueError("cannot select features from an empty record set")
    values = np.stack([rec.values for rec in rs])
    machine_ids = np.array([rec.machine.value for rec in rs])
    return FeatureFrame(values, machine_ids)


def generate_synthetic(cfg: GenConfig | None = None) -> RecordSet:
    """Generate a labeled-ready synthetic dataset.

    Normal instances sample every feature uniformly inside the machine's
    normal range. Anomalous instances (probability `anomaly_fraction`)
    displace one uniformly chosen feature beyond a uniformly chosen
    bound by 10-50% of the range width. Deterministic for a fixed seed.
    """
    cfg = cfg or GenConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    records: list[Record] = []
    counts = cfg.effective_counts()

    for machine in MACHINES:
        count = counts.get(machine.value, 0)
        if count == 0:
            continue
        lows = np.array([cfg.ranges.bounds(machine.value, f)[0] for f in FEATURE_NAMES])
        highs = np.array([cfg.ranges.bounds(machine.value, f)[1] for f in FEATURE_NAMES])
        widths = highs - lows

        values = rng.uniform(lows, highs, size=(count, N_FEATURES))
        anomalous = rng.random(count) < cfg.anomaly_fraction
        n_anom = int(anomalous.sum())
        if n_anom:
            # real faults rarely disturb a single signal: displace a
            # uniform 1..5 features per anomalous instance
            n_displaced = rng.integers(1, N_FEATURES + 1, size=n_anom)
            rows = np.flatnonzero(anomalous)
            for row, k in zip(rows, n_displaced):
                feats = rng.choice(N_FEATURES, size=k, replace=False)
                upper_side = rng.random(k) < 0.5
                offset = rng.uniform(0.1, 0.5, size=k) * widths[feats]
                values[row, feats] = np.where(
                    upper_side, highs[feats] + offset, lows[feats] - offset
                )

        valid = np.ones(N_FEATURES, dtype=bool)
        for i in range(count):
            records.append(
                Record(
                    timestamp=float(_SYNTHETIC_EPOCH + 60 * i),
                    machine=machine,
                    values=values[i],
                    valid=valid.copy(),
                )
            )
    return RecordSet(records, provenance="synthetic")
