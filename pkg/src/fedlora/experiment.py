"""Configuration-driven experiment runner and report writer.

One JSON config describes the whole study: data source, labeling,
splits, model defaults, the federated schedule, budget-plan axes, run
count and seeds. run_experiment() executes the requested stages over
`runs` seeds (base_seed + i), summarizes the metrics, and writes the
CSV/JSON report artifacts. Reports contain no wall-clock state, so a
fixed config and seed reproduce them byte for byte.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import anomaly
from . import autoencoder as ae
from . import federated as fl
from . import lorawan
from .data import (
    DEFAULT_ANOMALY_FRACTION,
    DEFAULT_COUNTS,
    GenConfig,
    clean,
    generate_synthetic,
    ingest_csv,
    ingest_ttn_json,
    select_features,
)
from .frame import FeatureFrame, concat_frames
from .iforest import fit_iforest, iforest_classify
from .labeling import DEFAULT_RANGES, RangeSpec, label_by_iqr, label_by_range
from .metrics import all_metrics, confusion, summarize_runs
from .preprocess import SplitSpec, apply_standardizer, fit_standardizer, stratified_split

# sub-stream tags for deriving per-component seeds from a run seed
_TAG_SPLIT, _TAG_AE_INIT, _TAG_AE_SHUFFLE, _TAG_IFOREST, _TAG_FL = 1, 2, 3, 4, 5

STAGE_CENTRAL = "central"
STAGE_FEDERATED = "federated"
STAGE_SWEEP = "sweep"
STAGE_LORAWAN = "lorawan"


@dataclass
class DataSection:
    source: str = "synthetic"  # synthetic | csv | ttn_json
    csv_path: str | None = None
    ttn_path: str | None = None
    counts: dict = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    anomaly_fraction: float = DEFAULT_ANOMALY_FRACTION
    gen_seed: int = 7
    scale: float = 1.0
    ranges: dict | None = None  # overrides the built-in normal ranges


@dataclass
class LabelingSection:
    method: str = "range"  # range | iqr
    iqr_k: float = 1.5


@dataclass
class SplitSection:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15


@dataclass
class ModelSection:
    hidden_sizes: list = field(default_factory=lambda: [32])
    activation: str = "tanh"
    epochs: int = 80
    batch_size: int = 16
    learning_rate: float = 0.001


@dataclass
class IForestSection:
    n_trees: int = 100
    contamination: float = 0.07
    max_samples: float = 0.27


@dataclass
class FederatedSection:
    # one epoch per round for the model-comparison protocol; the sweep
    # explores the other budget splits
    epochs_per_round: int = 1
    rounds: int = 80
    budget: int = 80
    # per_client scaling keeps client data homogeneous (and raw statistics
    # private); "global" fits one scaler on the joined training data
    standardize: str = "per_client"


@dataclass
class SweepSection:
    enabled: bool = False
    budget: int = 80
    runs: int | None = None  # defaults to the experiment run count


@dataclass
class LoRaWANSection:
    hidden_sizes: list = field(default_factory=lambda: [16, 32, 64, 128])
    spreading_factors: list = field(default_factory=lambda: [7, 8, 9, 10, 11, 12])
    rounds: list = field(default_factory=lambda: [1, 2, 4, 5, 8, 10, 16, 20, 40, 80])
    convention: str = "per_round"


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    labeling: LabelingSection = field(default_factory=LabelingSection)
    split: SplitSection = field(default_factory=SplitSection)
    model: ModelSection = field(default_factory=ModelSection)
    iforest: IForestSection = field(default_factory=IForestSection)
    federated: FederatedSection = field(default_factory=FederatedSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    lorawan: LoRaWANSection = field(default_factory=LoRaWANSection)
    runs: int = 13
    base_seed: int = 1234
    out_dir: str | None = None
    standardize_scope: str = "train_only"  # train_only | joined
    threshold_population: str = "per_instance"  # per_instance | pooled
    threshold_reference: float = fl.REFERENCE_THRESHOLD

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def validate(self):
        if self.data.source not in ("synthetic", "csv", "ttn_json"):
            raise ValueError(f"unknown data source {self.data.source!r}")
        if self.labeling.method not in ("range", "iqr"):
            raise ValueError(f"unknown labeling method {self.labeling.method!r}")
        if self.standardize_scope not in ("train_only", "joined"):
            raise ValueError("standardize_scope must be train_only or joined")
        if self.threshold_population not in ("per_instance", "pooled"):
            raise ValueError("threshold_population must be per_instance or pooled")
        if self.federated.standardize not in ("global", "per_client"):
            raise ValueError("federated.standardize must be global or per_client")
        if self.lorawan.convention not in lorawan.CONVENTIONS:
            raise ValueError(f"lorawan.convention must be one of {lorawan.CONVENTIONS}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        fl.FLSchedule(self.federated.epochs_per_round, self.federated.rounds, self.federated.budget)


def _build_section(cls, raw: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"unknown config key(s) under {path!r}: {sorted(unknown)}")
    return cls(**{name: raw[name] for name in names if name in raw})


_SECTION_TYPES = {
    "data": DataSection,
    "labeling": LabelingSection,
    "split": SplitSection,
    "model": ModelSection,
    "iforest": IForestSection,
    "federated": FederatedSection,
    "sweep": SweepSection,
    "lorawan": LoRaWANSection,
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config, rejecting unknown keys anywhere in the document."""
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def _derive_seed(run_seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([run_seed, tag]).generate_state(1)[0])


def load_dataset(cfg: ExperimentConfig) -> tuple[FeatureFrame, dict]:
    """Acquire, clean, project and label the dataset named by the config."""
    section = cfg.data
    if section.source == "synthetic":
        gen = GenConfig(
            counts=dict(section.counts),
            anomaly_fraction=section.anomaly_fraction,
            ranges=RangeSpec.from_dict(section.ranges) if section.ranges else DEFAULT_RANGES,
            seed=section.gen_seed,
            scale=section.scale,
        )
        rs = generate_synthetic(gen)
    elif section.source == "csv":
        if not section.csv_path:
            raise ValueError("data.source is csv but data.csv_path is not set")
        rs = ingest_csv(section.csv_path)
    else:
        if not section.ttn_path:
            raise ValueError("data.source is ttn_json but data.ttn_path is not set")
        rs = ingest_ttn_json(section.ttn_path)

    cleaned = clean(rs)
    frame = select_features(cleaned)
    ranges = RangeSpec.from_dict(section.ranges) if section.ranges else DEFAULT_RANGES
    range_lv = label_by_range(frame, ranges)
    iqr_lv = label_by_iqr(frame, k=cfg.labeling.iqr_k)
    chosen = range_lv if cfg.labeling.method == "range" else iqr_lv
    frame = frame.with_labels(chosen.instance_labels)

    info = {
        "provenance": rs.provenance,
        "ingest_audit": rs.audit,
        "clean_audit": cleaned.audit,
        "n_instances": len(frame),
        "counts_by_machine": frame.counts_by_machine(),
        "labeling": {
            "method": cfg.labeling.method,
            "range_fraction": range_lv.anomaly_fraction(),
            "iqr_fraction": iqr_lv.anomaly_fraction(),
            "iqr_scope": "per_machine",
        },
    }
    return frame, info


def _partitions(frame: FeatureFrame, cfg: ExperimentConfig, run_seed: int):
    spec = SplitSpec(cfg.split.train, cfg.split.val, cfg.split.test, seed=_derive_seed(run_seed, _TAG_SPLIT))
    tr_raw, va_raw, te_raw = stratified_split(frame, spec)
    fit_on = frame if cfg.standardize_scope == "joined" else tr_raw
    scaler = fit_standardizer(fit_on)
    return tr_raw, va_raw, te_raw, scaler


def _arch(cfg: ExperimentConfig) -> ae.ArchSpec:
    return ae.ArchSpec(hidden_sizes=tuple(cfg.model.hidden_sizes), activation=cfg.model.activation)


def _normal_rows(frame: FeatureFrame) -> FeatureFrame:
    """Training view for the semi-supervised autoencoder: drop labeled anomalies."""
    if frame.labels is None or not frame.labels.any() or frame.labels.all():
        return frame
    return frame.take(~frame.labels)


def _run_central(tr, va, te, cfg: ExperimentConfig, run_seed: int) -> dict:
    """Centralized autoencoder + isolation forest on standardized partitions.

    The autoencoder fits on normal-labeled instances only, so anomalies
    stay off the learned manifold; the isolation forest fits on the full
    partition, which is what its contamination parameter models.
    """
    arch = _arch(cfg)
    model = ae.build_autoencoder(arch, seed=_derive_seed(run_seed, _TAG_AE_INIT))
    train_cfg = ae.TrainConfig(
        epochs=cfg.model.epochs,
        batch_size=cfg.model.batch_size,
        learning_rate=cfg.model.learning_rate,
        shuffle_seed=_derive_seed(run_seed, _TAG_AE_SHUFFLE),
    )
    trace = ae.train(model, _normal_rows(tr), train_cfg)

    val_errors = anomaly.reconstruction_errors(model, va)
    if cfg.threshold_population == "pooled":
        initial = anomaly.initial_threshold(anomaly.squared_deviations(model, va).ravel())
    else:
        initial = anomaly.initial_threshold(val_errors)
    chosen = anomaly.select_threshold(val_errors, va.labels)

    test_errors = anomaly.reconstruction_errors(model, te)
    cm_ae = confusion(te.labels, anomaly.classify(test_errors, chosen.threshold))

    forest = fit_iforest(
        tr,
        n_trees=cfg.iforest.n_trees,
        max_samples=cfg.iforest.max_samples,
        seed=_derive_seed(run_seed, _TAG_IFOREST),
    )
    preds_if = iforest_classify(forest, te, cfg.iforest.contamination)
    cm_if = confusion(te.labels, preds_if)

    return {
        "AE": {"metrics": all_metrics(cm_ae), "confusion": dataclasses.asdict(cm_ae)},
        "IF": {"metrics": all_metrics(cm_if), "confusion": dataclasses.asdict(cm_if)},
        "ae_threshold": {
            "initial": initial,
            "selected": chosen.threshold,
            "percentile": chosen.percentile,
            "val_f1": chosen.f1,
            "degenerate": chosen.degenerate,
        },
        "ae_loss": {"first_epoch": trace[0], "last_epoch": trace[-1]},
    }


def _standardize_fl(tr_raw, va_raw, te_raw, scaler, mode: str):
    """Client frames per machine plus the global test frame, standardized."""
    if mode == "global":
        tr = apply_standardizer(tr_raw, scaler)
        va = apply_standardizer(va_raw, scaler)
        te = apply_standardizer(te_raw, scaler)
        return tr.by_machine(), va.by_machine(), te
    train_by_m, val_by_m, test_parts = {}, {}, []
    va_split = va_raw.by_machine()
    te_split = te_raw.by_machine()
    for mid, tr_m in tr_raw.by_machine().items():
        local = fit_standardizer(tr_m)
        train_by_m[mid] = apply_standardizer(tr_m, local)
        if mid in va_split:
            val_by_m[mid] = apply_standardizer(va_split[mid], local)
        if mid in te_split:
            test_parts.append(apply_standardizer(te_split[mid], local))
    return train_by_m, val_by_m, concat_frames(test_parts)


def _run_federated(tr_raw, va_raw, te_raw, scaler, cfg: ExperimentConfig, run_seed: int, schedule: fl.FLSchedule) -> dict:
    train_by_m, val_by_m, te = _standardize_fl(
        tr_raw, va_raw, te_raw, scaler, cfg.federated.standardize
    )
    train_by_m = {mid: _normal_rows(f) for mid, f in train_by_m.items()}
    arch = _arch(cfg)
    fl_seed = _derive_seed(run_seed, _TAG_FL)
    clients = fl.make_clients(train_by_m, val_by_m, arch, seed=fl_seed)
    global_model = fl.init_global(arch, seed=fl_seed)
    train_cfg = ae.TrainConfig(
        batch_size=cfg.model.batch_size, learning_rate=cfg.model.learning_rate
    )

    joined_train = concat_frames(list(train_by_m.values()))
    initial_loss = ae.mse(
        ae.forward(global_model.materialize(), joined_train.values), joined_train.values
    )
    global_model, history = fl.run_schedule(schedule, clients, global_model, train_cfg)
    final_loss = ae.mse(
        ae.forward(global_model.materialize(), joined_train.values), joined_train.values
    )

    # global threshold: F1 sweep over the pooled client validation errors
    model = global_model.materialize()
    pooled_frames = [val_by_m[mid] for mid in val_by_m if len(val_by_m[mid])]
    pooled = concat_frames(pooled_frames)
    pooled_errors = anomaly.reconstruction_errors(model, pooled)
    chosen = anomaly.select_threshold(pooled_errors, pooled.labels)

    cm_global = fl.evaluate_global(global_model, te, chosen.threshold)

    client_results = fl.tune_client_thresholds(
        global_model, clients, reference=cfg.threshold_reference
    )
    per_client_thresholds = {
        mid: res.threshold for mid, res in client_results.items()
    }
    thresholds_for_eval = {
        mid: per_client_thresholds.get(mid, chosen.threshold) for mid in te.machines()
    }
    per_client_cm = fl.evaluate_per_client(global_model, te, thresholds_for_eval)

    return {
        "AEFL": {"metrics": all_metrics(cm_global), "confusion": dataclasses.asdict(cm_global)},
        "per_client": {
            mid: {"metrics": all_metrics(cm), "confusion": dataclasses.asdict(cm)}
            for mid, cm in per_client_cm.items()
        },
        "threshold": {
            "reference": cfg.threshold_reference,
            "global": chosen.threshold,
            "global_percentile": chosen.percentile,
            "per_client": per_client_thresholds,
        },
        "schedule": {"epochs_per_round": schedule.epochs_per_round, "rounds": schedule.rounds},
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "final_checksum": history[-1]["global_checksum"] if history else None,
    }


def run_single(frame: FeatureFrame, cfg: ExperimentConfig, run_seed: int, stages) -> dict:
    """Execute the requested stages for one seed; pure given its arguments."""
    tr_raw, va_raw, te_raw, scaler = _partitions(frame, cfg, run_seed)
    out: dict = {"run_seed": run_seed}
    if STAGE_CENTRAL in stages:
        tr = apply_standardizer(tr_raw, scaler)
        va = apply_standardizer(va_raw, scaler)
        te = apply_standardizer(te_raw, scaler)
        out["central"] = _run_central(tr, va, te, cfg, run_seed)
    if STAGE_FEDERATED in stages:
        schedule = fl.FLSchedule(
            cfg.federated.epochs_per_round, cfg.federated.rounds, cfg.federated.budget
        )
        out["federated"] = _run_federated(tr_raw, va_raw, te_raw, scaler, cfg, run_seed, schedule)
    return out


def _run_single_args(args):
    return run_single(*args)


def _execute_runs(frame, cfg, stages, deterministic: bool) -> list[dict]:
    seeds = [cfg.base_seed + i for i in range(cfg.runs)]
    tasks = [(frame, cfg, seed, tuple(stages)) for seed in seeds]
    if deterministic or cfg.runs == 1:
        return [run_single(*t) for t in tasks]
    workers = min(cfg.runs, os.cpu_count() or 1)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_single_args, tasks))


def sweep_schedules(frame: FeatureFrame, cfg: ExperimentConfig, deterministic: bool = False) -> list[dict]:
    """Run every epoch/round combination of the budget; one row per combo."""
    budget = cfg.sweep.budget
    combos = [(e, r) for e, r in fl.SCHEDULE_COMBOS if e * r == budget]
    if not combos:
        raise ValueError(f"no schedule combinations for budget {budget}")
    runs = cfg.sweep.runs or cfg.runs
    rows = []
    for epochs_per_round, rounds in combos:
        combo_cfg = dataclasses.replace(
            cfg,
            federated=dataclasses.replace(
                cfg.federated, epochs_per_round=epochs_per_round, rounds=rounds, budget=budget
            ),
            runs=runs,
        )
        results = _execute_runs(frame, combo_cfg, (STAGE_FEDERATED,), deterministic)
        metrics = [r["federated"]["AEFL"]["metrics"] for r in results]
        rows.append(
            {
                "epochs_per_round": epochs_per_round,
                "rounds": rounds,
                "f1": float(np.mean([m["f1"] for m in metrics])),
                "accuracy": float(np.mean([m["accuracy"] for m in metrics])),
                "tpr": float(np.mean([m["tpr"] for m in metrics])),
                "tnr": float(np.mean([m["tnr"] for m in metrics])),
                "initial_loss": float(np.mean([r["federated"]["initial_loss"] for r in results])),
                "final_loss": float(np.mean([r["federated"]["final_loss"] for r in results])),
            }
        )
    return rows


def _lorawan_rows(cfg: ExperimentConfig, convention: str | None = None) -> list[dict]:
    section = cfg.lorawan
    archs = [
        ae.ArchSpec(hidden_sizes=(h,), activation=cfg.model.activation)
        for h in section.hidden_sizes
    ]
    return lorawan.plan_table(
        archs, section.spreading_factors, section.rounds, convention or section.convention
    )


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    deterministic: bool = False,
    stages: tuple = (STAGE_CENTRAL, STAGE_FEDERATED, STAGE_LORAWAN),
) -> dict:
    """Execute the configured study and assemble the report.

    Writes comparison.csv, per_client.csv, sweep.csv, lorawan_plan.csv
    and report.json under out_dir when given. The report holds only
    config- and seed-determined values.
    """
    cfg.validate()
    if cfg.sweep.enabled and STAGE_SWEEP not in stages:
        stages = tuple(stages) + (STAGE_SWEEP,)

    frame, dataset_info = load_dataset(cfg)
    report: dict = {
        "provenance": {
            "config_hash": cfg.config_hash(),
            "base_seed": cfg.base_seed,
            "runs": cfg.runs,
            "versions": {
                "fedlora": __version__,
                "numpy": np.__version__,
                "python": f"{sys.version_info.major}.{sys.version_info.minor}",
            },
        },
        "config": cfg.to_dict(),
        "dataset": dataset_info,
    }

    model_stages = tuple(s for s in stages if s in (STAGE_CENTRAL, STAGE_FEDERATED))
    if model_stages:
        results = _execute_runs(frame, cfg, model_stages, deterministic)
        report["runs_detail"] = results
        comparison = {}
        if STAGE_CENTRAL in stages:
            comparison["AE"] = summarize_runs([r["central"]["AE"]["metrics"] for r in results])
            comparison["IF"] = summarize_runs([r["central"]["IF"]["metrics"] for r in results])
        if STAGE_FEDERATED in stages:
            comparison["AEFL"] = summarize_runs(
                [r["federated"]["AEFL"]["metrics"] for r in results]
            )
            machines = sorted(
                {mid for r in results for mid in r["federated"]["per_client"]},
            )
            report["per_client"] = {
                mid: dataclasses.asdict(
                    summarize_runs(
                        [
                            r["federated"]["per_client"][mid]["metrics"]
                            for r in results
                            if mid in r["federated"]["per_client"]
                        ]
                    )
                )
                for mid in machines
            }
        report["comparison"] = {k: dataclasses.asdict(v) for k, v in comparison.items()}

    if STAGE_SWEEP in stages:
        report["sweep"] = sweep_schedules(frame, cfg, deterministic)
    if STAGE_LORAWAN in stages:
        report["lorawan_plan"] = _lorawan_rows(cfg)

    if out_dir:
        write_report_files(report, out_dir)
    return report


def _pyify(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {k: _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def write_report_files(report: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    report = _pyify(report)

    if "comparison" in report:
        rows = []
        for model_name, summary in report["comparison"].items():
            for metric, label in (
                ("accuracy", "Acc"),
                ("precision", "Pre"),
                ("tnr", "TNR"),
                ("tpr", "TPR"),
                ("f1", "F1"),
            ):
                for stat, value in summary["stats"][metric].items():
                    rows.append(
                        {"model": model_name, "metric": label, "statistic": stat, "value": value}
                    )
        _write_csv(
            os.path.join(out_dir, "comparison.csv"),
            ["model", "metric", "statistic", "value"],
            rows,
        )

    if "per_client" in report:
        rows = []
        for machine, summary in report["per_client"].items():
            for metric, label in (
                ("accuracy", "Acc"),
                ("precision", "Pre"),
                ("tnr", "TNR"),
                ("tpr", "TPR"),
                ("f1", "F1"),
            ):
                for stat, value in summary["stats"][metric].items():
                    rows.append(
                        {
                            "model": "AEFL",
                            "machine": machine,
                            "metric": label,
                            "statistic": stat,
                            "value": value,
                        }
                    )
        _write_csv(
            os.path.join(out_dir, "per_client.csv"),
            ["model", "machine", "metric", "statistic", "value"],
            rows,
        )

    if "sweep" in report:
        _write_csv(
            os.path.join(out_dir, "sweep.csv"),
            ["epochs_per_round", "rounds", "f1", "accuracy", "tpr", "tnr", "initial_loss", "final_loss"],
            report["sweep"],
        )

    if "lorawan_plan" in report:
        _write_csv(
            os.path.join(out_dir, "lorawan_plan.csv"),
            ["arch", "hidden", "params", "bytes", "sf", "rounds", "convention", "messages", "hours"],
            report["lorawan_plan"],
        )

    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
