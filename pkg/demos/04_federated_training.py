"""Federated training across the four machine clients.

Each machine standardizes and trains on its own normal data; the server
aggregates weight vectors by sample-count-weighted averaging after every
local epoch (80 rounds of 1 epoch, the model-comparison protocol). The
global threshold comes from the pooled validation sweep; each client
then fine-tunes a local threshold on its own validation errors.
"""

import numpy as np

from fedlora import (
    ArchSpec,
    FLSchedule,
    GenConfig,
    SplitSpec,
    TrainConfig,
    all_metrics,
    apply_standardizer,
    concat_frames,
    evaluate_global,
    evaluate_per_client,
    fit_standardizer,
    generate_synthetic,
    init_global,
    label_by_range,
    make_clients,
    reconstruction_errors,
    run_schedule,
    select_features,
    select_threshold,
    stratified_split,
    tune_client_thresholds,
)

REFERENCE = 0.16225  # recorded alongside every tuned threshold

frame = select_features(generate_synthetic(GenConfig(scale=0.1, seed=7)))
frame = frame.with_labels(label_by_range(frame).instance_labels)
tr, va, te = stratified_split(frame, SplitSpec(seed=2))

# per-client standardization: each machine scales with its own statistics
train_by_m, val_by_m, test_parts = {}, {}, []
for machine, tr_m in tr.by_machine().items():
    scaler = fit_standardizer(tr_m)
    normal = tr_m.take(~tr_m.labels)
    train_by_m[machine] = apply_standardizer(normal, scaler)
    val_by_m[machine] = apply_standardizer(va.by_machine()[machine], scaler)
    test_parts.append(apply_standardizer(te.by_machine()[machine], scaler))
test = concat_frames(test_parts)

arch = ArchSpec(hidden_sizes=(32,), activation="tanh")
clients = make_clients(train_by_m, val_by_m, arch, seed=0)
for c in clients:
    print(f"client {c.client_id:12s} {c.n_samples:5d} training instances")

global_model = init_global(arch, seed=0)
schedule = FLSchedule(epochs_per_round=1, rounds=80)
global_model, history = run_schedule(schedule, clients, global_model, TrainConfig(batch_size=16))
print(f"\nran {global_model.round_index} rounds; "
      f"mean client loss round 1: {global_model.loss_history[0]:.4f}, "
      f"round 80: {global_model.loss_history[-1]:.6f}")
print(f"final global weight checksum: {history[-1]['global_checksum']:#018x}")

pooled_val = concat_frames(list(val_by_m.values()))
errors = reconstruction_errors(global_model.materialize(), pooled_val)
chosen = select_threshold(errors, pooled_val.labels)
print(f"\nglobal threshold {chosen.threshold:.6f} "
      f"(percentile {chosen.percentile}, reference {REFERENCE})")

cm = evaluate_global(global_model, test, chosen.threshold)
print("global test metrics:", {k: round(v, 2) for k, v in all_metrics(cm).items()})

results = tune_client_thresholds(global_model, clients, reference=REFERENCE)
per_client = evaluate_per_client(
    global_model, test, {m: r.threshold for m, r in results.items()}
)
print("\nper-client thresholds and test F1:")
for machine, cm in per_client.items():
    print(f"  {machine:12s} threshold {results[machine].threshold:.6f} "
          f"F1 {all_metrics(cm)['f1']:6.2f}")
