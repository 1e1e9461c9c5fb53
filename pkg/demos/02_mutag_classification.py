#!/usr/bin/env python3
# Graph classification on MUTAG with a reduced grid, RGC-Net against a GCN.
#
# The full protocol (3 seeds, every learning rate and schedule step) is what
# the acceptance suite runs; this keeps to one seed so it finishes in seconds.

from pathlib import Path

from rgcnet.data import describe_dataset, format_description, load_tu_dataset
from rgcnet.harness import ExperimentConfig, nested_cv_run

root = Path(__file__).resolve().parents[1] / "data" / "tu" / "MUTAG"
d = load_tu_dataset(root)
print(format_description(describe_dataset(d)))
print()

grid = {"lr": [0.01, 0.005], "scheduler_step": [100], "k": [1], "alpha": [0.8]}
for kind in ("rgc", "gcn"):
    cfg = ExperimentConfig(task="classify", layer_kind=kind, grid=grid, seeds=[0])
    s = nested_cv_run(cfg, d)["summary"]
    acc, sd = s["accuracy"]
    print(f"{kind:4s} accuracy {acc:.3f} +- {sd:.3f}  epochs {s['epochs'][0]:.1f}  "
          f"trainable {s['n_trainable']}  time/trial {s['training_time'][0]:.2f}s")
