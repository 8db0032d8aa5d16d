"""Self-checks behind the CLI --check flag.

Each check is a scaled-down version of a release gate: size accounting,
planner figures, aggregation properties, threshold-sweep optimality,
metric identities, gradient correctness, isolation-forest recovery, and
(when the report carries the sections) end-to-end model quality. The
full-scale gates live in the test suite; these exist so a pipeline run
can fail fast on its own output.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import anomaly
from . import autoencoder as ae
from . import federated as fl
from . import lorawan
from .frame import FeatureFrame
from .iforest import fit_iforest, iforest_classify
from .metrics import ConfusionMatrix, all_metrics, confusion, f1, precision, tpr


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def check_size_accounting() -> CheckResult:
    expected = {16: 181, 32: 357, 64: 709, 128: 1413}
    kb = {16: 0.70, 32: 1.39, 64: 2.77, 128: 5.52}
    for h, params in expected.items():
        arch = ae.ArchSpec(hidden_sizes=(h,))
        if ae.param_count(arch) != params:
            return CheckResult("size_accounting", False, f"h={h} param count mismatch")
        if abs(ae.payload_kb(params) - kb[h]) > 0.01:
            return CheckResult("size_accounting", False, f"h={h} KB mismatch")
    return CheckResult("size_accounting", True, "181/357/709/1413 params, KB column matches")


def check_planner_figures() -> CheckResult:
    cases = [
        (0.70 * 1024, 7, 1, 4),
        (1.39 * 1024, 7, 80, 513),
        (1.39 * 1024, 12, 80, 2233),
        (5.52 * 1024, 12, 80, 8867),
    ]
    for nbytes, sf, rounds, expected in cases:
        req = lorawan.PlanRequest(nbytes, rounds, lorawan.profile_for(sf), "total")
        got = lorawan.messages_required(req)
        if got != expected:
            return CheckResult(
                "planner_figures", False, f"{nbytes:.0f}B SF{sf} x{rounds}: {got} != {expected}"
            )
    hours = lorawan.training_hours(513, lorawan.profile_for(7))
    if abs(hours - 0.8835) > 1e-4:
        return CheckResult("planner_figures", False, f"Nh(513, SF7) = {hours}")
    return CheckResult("planner_figures", True, "4/513/2233/8867 messages, 0.8835 h")


def check_fedavg_properties(cases: int = 200) -> CheckResult:
    rng = np.random.default_rng(2024)
    for _ in range(cases):
        k = int(rng.integers(1, 6))
        dim = int(rng.integers(1, 40))
        vecs = rng.normal(size=(k, dim)) * 10.0 ** float(rng.integers(-2, 3))
        counts = [int(c) for c in rng.integers(1, 10_000, size=k)]
        out = fl.fedavg(list(zip(vecs, counts)))
        total = sum(counts)
        oracle = sum((c / total) * v for v, c in zip(vecs, counts))
        tol = 1e-12 * max(1.0, float(np.abs(vecs).max()))
        if not np.allclose(out, oracle, rtol=1e-12, atol=tol):
            return CheckResult("fedavg_properties", False, "oracle mismatch")
        if not (np.all(out >= vecs.min(axis=0)) and np.all(out <= vecs.max(axis=0))):
            return CheckResult("fedavg_properties", False, "left the convex envelope")
        same = fl.fedavg([(vecs[0], c) for c in counts])
        if not np.array_equal(same, vecs[0]):
            return CheckResult("fedavg_properties", False, "not idempotent")
    return CheckResult("fedavg_properties", True, f"{cases} random cases")


def check_threshold_sweep(cases: int = 20) -> CheckResult:
    rng = np.random.default_rng(7)
    grid = np.arange(0, 1001) / 10.0
    for _ in range(cases):
        n = int(rng.integers(20, 200))
        labels = rng.random(n) < rng.uniform(0.1, 0.45)
        if labels.all() or not labels.any():
            continue
        scores = np.abs(rng.normal(size=n)) + labels * rng.uniform(0.0, 2.0)
        got = anomaly.select_threshold(scores, labels, grid)
        best = _midpoint_oracle(scores, labels)
        if abs(got.f1 - best) > 1e-9:
            return CheckResult("threshold_sweep", False, f"{got.f1} != oracle {best}")
        ref = anomaly.initial_threshold(scores)
        ref_f1 = f1(confusion(labels, anomaly.classify(scores, ref)))
        default = anomaly.select_threshold(scores, labels)
        if default.f1 < ref_f1 - 1e-12:
            return CheckResult("threshold_sweep", False, "below the initial-threshold F1")
    return CheckResult("threshold_sweep", True, f"{cases} random cases vs midpoint oracle")


def _midpoint_oracle(scores, labels) -> float:
    uniq = np.unique(scores)
    candidates = [(uniq[i] + uniq[i + 1]) / 2.0 for i in range(len(uniq) - 1)]
    candidates.append(uniq[-1] + 1.0)  # everything normal
    best = 0.0
    for t in candidates:
        best = max(best, f1(confusion(labels, scores > t)))
    return best


def check_metric_identities(cases: int = 2000) -> CheckResult:
    rng = np.random.default_rng(99)
    hand = ConfusionMatrix(tp=3, fp=1, tn=4, fn=2)
    got = all_metrics(hand)
    want = {"accuracy": 70.0, "precision": 75.0, "tnr": 80.0, "tpr": 60.0}
    for key, val in want.items():
        if abs(got[key] - val) > 1e-12:
            return CheckResult("metric_identities", False, f"hand case {key}")
    if abs(got["f1"] - 200.0 / 3.0) > 1e-12:
        return CheckResult("metric_identities", False, "hand case f1")
    for _ in range(cases):
        cm = ConfusionMatrix(*(int(v) for v in rng.integers(0, 500, size=4)))
        pre, rec = precision(cm), tpr(cm)
        if pre > 0 and rec > 0:
            harmonic = 2 * pre * rec / (pre + rec)
            if abs(f1(cm) - harmonic) > 1e-9:
                return CheckResult("metric_identities", False, "harmonic form")
        p, n = cm.tp + cm.fn, cm.tn + cm.fp
        if p > 0 and n > 0:
            lhs = Fraction(100 * (cm.tp + cm.tn), cm.total)
            rhs = (p * Fraction(100 * cm.tp, p) + n * Fraction(100 * cm.tn, n)) / (p + n)
            if lhs != rhs:
                return CheckResult("metric_identities", False, "accuracy decomposition")
    return CheckResult("metric_identities", True, f"hand case + {cases} random matrices")


def check_gradients() -> CheckResult:
    rng = np.random.default_rng(5)
    for activation in ("tanh", "sigmoid"):
        arch = ae.ArchSpec(hidden_sizes=(2,), activation=activation)
        model = ae.build_autoencoder(arch, seed=int(rng.integers(1 << 30)))
        x = rng.normal(size=(6, 5))
        _, grad = ae.loss_and_gradient(model, x)
        fd = _fd_gradient(model, x)
        if np.max(np.abs(grad - fd)) > 1e-5:
            return CheckResult("gradients", False, f"{activation} mismatch")
    return CheckResult("gradients", True, "central differences within 1e-5")


def _fd_gradient(model, x, step: float = 1e-4) -> np.ndarray:
    base = ae.get_weights(model)
    fd = np.zeros_like(base)
    for i in range(base.size):
        for sign in (1.0, -1.0):
            w = base.copy()
            w[i] += sign * step
            ae.set_weights(model, w)
            fd[i] += sign * ae.mse(ae.forward(model, x), x)
        fd[i] /= 2 * step
    ae.set_weights(model, base)
    return fd


def check_iforest_recovery() -> CheckResult:
    frame = _planted_outlier_frame(n=1500, seed=3)
    forest = fit_iforest(frame, n_trees=100, max_samples=0.27, seed=3)
    preds = iforest_classify(forest, frame, contamination=0.07)
    recovered = np.sum(preds & frame.labels) / max(1, np.sum(frame.labels))
    if recovered < 0.8:
        return CheckResult("iforest_recovery", False, f"recovered {recovered:.0%}")
    return CheckResult("iforest_recovery", True, f"recovered {recovered:.0%} of planted outliers")


def _planted_outlier_frame(n: int, seed: int, outlier_fraction: float = 0.07) -> FeatureFrame:
    """Clustered data with a fraction of rows displaced by 10x the range."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 1.0, size=(n, 5))
    labels = rng.random(n) < outlier_fraction
    rows = np.flatnonzero(labels)
    feats = rng.integers(0, 5, size=rows.size)
    values[rows, feats] += 10.0
    machine_ids = np.array(["Manitou"] * n)
    return FeatureFrame(values, machine_ids, labels)


def check_report_quality(report: dict) -> list[CheckResult]:
    """Gates evaluated on a produced report, when its sections exist."""
    results = []
    comparison = report.get("comparison", {})
    if "AE" in comparison and "AEFL" in comparison:
        ae_f1 = comparison["AE"]["stats"]["f1"]["mean"]
        fl_f1 = comparison["AEFL"]["stats"]["f1"]["mean"]
        ae_tnr = comparison["AE"]["stats"]["tnr"]["mean"]
        fl_tnr = comparison["AEFL"]["stats"]["tnr"]["mean"]
        results.append(
            CheckResult("e2e_ae_f1", ae_f1 >= 90.0, f"centralized F1 {ae_f1:.2f} (>= 90)")
        )
        results.append(
            CheckResult(
                "e2e_fl_gap",
                abs(ae_f1 - fl_f1) <= 5.0,
                f"federated F1 {fl_f1:.2f} within 5 of {ae_f1:.2f}",
            )
        )
        results.append(
            CheckResult(
                "e2e_tnr_gap",
                abs(ae_tnr - fl_tnr) <= 10.0,
                f"federated TNR {fl_tnr:.2f} within 10 of {ae_tnr:.2f}",
            )
        )
    sweep = report.get("sweep")
    if sweep:
        ok = len(sweep) == 10 and all(
            row["epochs_per_round"] * row["rounds"] == 80 for row in sweep
        )
        results.append(CheckResult("sweep_combos", ok, f"{len(sweep)} combos, budget 80"))
        losses_ok = all(row["final_loss"] < row["initial_loss"] for row in sweep)
        results.append(CheckResult("sweep_losses", losses_ok, "final loss < initial loss per combo"))
    return results


def run_all_checks(report: dict | None = None) -> list[CheckResult]:
    results = [
        check_size_accounting(),
        check_planner_figures(),
        check_fedavg_properties(),
        check_threshold_sweep(),
        check_metric_identities(),
        check_gradients(),
        check_iforest_recovery(),
    ]
    if report is not None:
        results.extend(check_report_quality(report))
    return results
