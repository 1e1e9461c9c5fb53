import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcnet.data import Dataset, SimulatorParams, simulate_longitudinal
from rgcnet.errors import ConfigurationError, StratificationError
from rgcnet.graph import Graph
from rgcnet.harness import (
    DEFAULT_GRID,
    AuditedDataset,
    ExperimentConfig,
    aggregate,
    grid_cells,
    group_folds,
    learning_rate,
    nested_cv_run,
    resource_probe,
    stratified_folds,
    train_val_split,
    write_aggregate_csv,
    write_trials_csv,
)

from oracles import random_connected

TINY_GRID = {"lr": [0.01], "scheduler_step": [100], "k": [1], "alpha": [0.8]}


def toy_classification(n=24, seed=0):
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n):
        size = int(rng.integers(4, 8))
        graphs.append(Graph(random_connected(rng, size), rng.random((size, 2)) + (i % 2), label=i % 2))
    return Dataset(graphs, "classification", name="toy")


def test_grid_size():
    assert len(grid_cells(DEFAULT_GRID, reservoir=True)) == 108
    assert len(grid_cells(DEFAULT_GRID, reservoir=False)) == 9
    assert ExperimentConfig(layer_kind="gcn").cells()[0] == {"lr": 0.01, "scheduler_step": 500}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=12, max_size=60), st.integers(0, 100))
def test_stratified_folds_partition(labels, seed):
    labels = np.array(labels)
    if np.bincount(labels, minlength=3).min() < 3:
        labels[:9] = np.repeat([0, 1, 2], 3)
    folds = stratified_folds(labels, 3, seed)
    allidx = np.sort(np.concatenate(folds))
    assert allidx.tolist() == list(range(len(labels)))
    for c in np.unique(labels):
        counts = [int(np.sum(labels[f] == c)) for f in folds]
        assert max(counts) - min(counts) <= 1
    again = stratified_folds(labels, 3, seed)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


def test_stratified_single_class_fold():
    with pytest.raises(StratificationError):
        stratified_folds([0] * 9 + [1], 3)


def test_group_folds_keep_groups_together():
    groups = np.repeat(np.arange(10), 2)
    folds = group_folds(groups, 3, seed=1)
    seen = [set(groups[f]) for f in folds]
    assert not (seen[0] & seen[1]) and not (seen[1] & seen[2])
    with pytest.raises(StratificationError):
        group_folds([1, 1, 2], 3)


def test_train_val_split_properties():
    idx = np.arange(30)
    labels = np.array([0] * 25 + [1] * 5)
    tr, va = train_val_split(idx, labels, 0.1, seed=0)
    assert set(tr) | set(va) == set(idx) and not set(tr) & set(va)
    assert set(labels[va]) == {0, 1}
    groups = np.repeat(np.arange(10), 3)
    tr, va = train_val_split(idx, groups, 0.2, seed=0, by_group=True)
    assert not set(groups[tr]) & set(groups[va])


def test_learning_rate_schedule():
    assert [learning_rate(0.01, e, 2) for e in (1, 2, 3, 5)] == [0.01, 0.01, 0.005, 0.0025]


def test_resource_probe():
    r = resource_probe()
    assert r["wall_clock"] > 0 and (r["peak_rss"] is None or r["peak_rss"] > 2**20)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(layer_kind="gat", task="generate")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_layers=6)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"bogus": 1})
    (tmp_path / "c.json").write_text('{"patience": 3, "grid": {"lr": [0.1]}}')
    cfg = ExperimentConfig.from_json(tmp_path / "c.json")
    assert cfg.patience == 3 and cfg.max_epochs == 500


def test_classification_run_end_to_end(tmp_path):
    d = toy_classification()
    cfg = ExperimentConfig(grid={**TINY_GRID, "lr": [0.01, 0.005]}, max_epochs=6, seeds=[0, 1], hidden=8)
    audit = AuditedDataset(d.graphs)
    res = nested_cv_run(cfg, d, audit=audit)
    assert len(res["trials"]) == 2 * 3 * 2
    assert sum(t.selected for t in res["trials"]) == 6
    s = res["summary"]
    assert 0 <= s["accuracy"][0] <= 1 and s["n_selected"] == 6
    assert s["pooled_accuracy"] == pytest.approx(
        np.dot([t.test["n_test"] for t in res["trials"] if t.selected],
               [t.test["accuracy"] for t in res["trials"] if t.selected]) / len(d) / 2)
    test_idx = set(np.concatenate([np.array(f) for f in res["fold_assignment"]]).tolist())
    assert audit.reads_in("test") <= test_idx
    write_trials_csv(tmp_path / "t.csv", res["trials"])
    write_aggregate_csv(tmp_path / "s.csv", [s])
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert float(rows[0]["accuracy_mean"]) == s["accuracy"][0]


def test_same_seed_same_result():
    d = toy_classification()
    cfg = ExperimentConfig(grid=TINY_GRID, max_epochs=4, seeds=[3], hidden=8)
    a = nested_cv_run(cfg, d)
    b = nested_cv_run(cfg, d)
    assert [t.test for t in a["trials"]] == [t.test for t in b["trials"]]


def test_generation_run_reports_identity():
    d = simulate_longitudinal(SimulatorParams(n_subjects=9, n_nodes=6, seed=0))
    cfg = ExperimentConfig(task="generate", grid=TINY_GRID, max_epochs=3, seeds=[0], model={"hidden": 8})
    res = nested_cv_run(cfg, d)
    s = res["summary"]
    for key in ("model_mae", "identity_mae", "model_mae_eigenvector", "composite_loss"):
        assert math.isfinite(s[key][0])
    for test_idx in res["fold_assignment"]:
        assert len(test_idx) % 2 == 0  # both transitions of each held-out subject


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_is_recorded():
    d = toy_classification()
    cfg = ExperimentConfig(grid={**TINY_GRID, "lr": [1e300]}, max_epochs=3, seeds=[0], hidden=4)
    res = nested_cv_run(cfg, d)
    s = aggregate(res["trials"], cfg)
    assert s["numeric_failures"] == len(res["trials"])
    assert all(f["status"] == "numeric_failure" for f in res["folds"])


def test_sgd_option():
    d = toy_classification()
    cfg = ExperimentConfig(grid=TINY_GRID, max_epochs=2, seeds=[0], hidden=4, optimizer="sgd")
    assert nested_cv_run(cfg, d)["summary"]["n_selected"] == 3
    with pytest.raises(ConfigurationError):
        ExperimentConfig(optimizer="rmsprop")
