"""Nested cross-validation, grid search, early stopping and resource accounting.

Each (seed, outer fold, grid cell) is one trial: train on the inner
training split, early-stop on the inner validation split. For every
(seed, fold) the cell with the best validation metric is selected and only
that model touches the held-out test fold. Grid selection is therefore
repeated per seed, and the report averages over folds and seeds.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import SGD, Adam, backward
from .classify import LAYER_KINDS, ClassifierConfig, GraphClassifier, nll_loss
from .errors import ConfigurationError, NumericError, StratificationError
from .generate import VARIANTS, GeneratorConfig, GeneratorModel, batched_composite_loss, identity_baseline
from .metrics import EvalReport, evaluate, mean_report

try:
    import resource
except ImportError:  # pragma: no cover - non-POSIX
    resource = None

log = logging.getLogger("rgcnet.harness")

__all__ = [
    "DEFAULT_GRID",
    "ExperimentConfig",
    "TrialReport",
    "ClassificationTask",
    "GenerationTask",
    "AuditedDataset",
    "grid_cells",
    "stratified_folds",
    "group_folds",
    "train_val_split",
    "learning_rate",
    "train_with_early_stopping",
    "resource_probe",
    "nested_cv_run",
    "aggregate",
    "write_trials_csv",
    "write_aggregate_csv",
]

DEFAULT_GRID = {
    "lr": (0.01, 0.005, 0.001),
    "scheduler_step": (500, 200, 100),
    "k": (3, 2, 1),
    "alpha": (1.0, 0.9, 0.8, 0.7),
}
RESERVOIR_KEYS = ("k", "alpha")
OPTIMIZERS = {"adam": Adam, "sgd": SGD}


@dataclass
class ExperimentConfig:
    task: str = "classify"
    layer_kind: str = "rgc"
    n_layers: int = 1
    grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    max_epochs: int | None = None
    patience: int = 5
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    n_folds: int = 3
    val_fraction: float = 0.1
    fold_seed: int = 0
    batch_size: int = 32
    hidden: int = 64
    lambdas: tuple = (1.0, 1.0, 1.0)
    model: dict = field(default_factory=dict)
    optimizer: str = "adam"
    workers: int = 1
    dataset: str | None = None

    def __post_init__(self):
        if self.task not in ("classify", "generate"):
            raise ConfigurationError(f"unknown task {self.task!r}")
        kinds = LAYER_KINDS if self.task == "classify" else VARIANTS
        if self.layer_kind not in kinds:
            raise ConfigurationError(f"layer kind {self.layer_kind!r} not available for {self.task}; use {kinds}")
        if not 1 <= self.n_layers <= 5:
            raise ConfigurationError("n_layers must be within 1..5")
        if self.max_epochs is None:
            self.max_epochs = 500 if self.task == "classify" else 200
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.n_folds < 2:
            raise ConfigurationError("need at least two folds")
        unknown = set(self.grid) - set(DEFAULT_GRID)
        if unknown:
            raise ConfigurationError(f"unknown grid keys {sorted(unknown)}")
        self.lambdas = tuple(self.lambdas)
        self.seeds = list(self.seeds)

    @property
    def reservoir(self) -> bool:
        return self.layer_kind in ("rgc", "trgc")

    def cells(self) -> list:
        return grid_cells(self.grid, self.reservoir)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None


def grid_cells(grid: dict, reservoir: bool = True) -> list:
    """Cartesian product of the grid; ``k`` and ``alpha`` only for reservoir models."""
    keys = [k for k in DEFAULT_GRID if k in grid and (reservoir or k not in RESERVOIR_KEYS)]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


# ---------------------------------------------------------------------------
# splits


def stratified_folds(labels, n_folds: int, seed=0) -> list:
    """Test-index arrays; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    start = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        for j, i in enumerate(idx):
            folds[(start + j) % n_folds].append(int(i))
        start += len(idx)
    out = [np.sort(np.array(f, dtype=int)) for f in folds]
    for i, f in enumerate(out):
        if len(np.unique(labels[f])) < 2:
            raise StratificationError(f"fold {i} holds a single class")
    return out


def group_folds(groups, n_folds: int, seed=0) -> list:
    """Test-index arrays such that no group is split across folds."""
    groups = np.asarray(groups, dtype=object)
    uniq = list(dict.fromkeys(groups.tolist()))
    if len(uniq) < n_folds:
        raise StratificationError(f"{len(uniq)} groups cannot fill {n_folds} folds")
    order = np.random.default_rng(seed).permutation(len(uniq))
    assign = {uniq[j]: pos % n_folds for pos, j in enumerate(order)}
    return [np.array([i for i, g in enumerate(groups) if assign[g] == f], dtype=int) for f in range(n_folds)]


def train_val_split(indices, keys, val_fraction: float, seed, by_group: bool = False):
    """Split ``indices`` into (train, val).

    With ``by_group`` the keys are group ids and whole groups move to the
    validation side; otherwise the keys are class labels and the split is
    stratified with at least one validation sample per class.
    """
    indices = np.asarray(indices, dtype=int)
    keys = np.asarray(keys, dtype=object)[indices]
    rng = np.random.default_rng(seed)
    val = []
    if by_group:
        uniq = list(dict.fromkeys(keys.tolist()))
        n_val = max(1, int(round(val_fraction * len(uniq))))
        chosen = {uniq[j] for j in rng.permutation(len(uniq))[:n_val]}
        val = [i for i, k in zip(indices, keys) if k in chosen]
    else:
        for c in sorted(set(keys.tolist())):
            members = indices[keys == c]
            n_val = max(1, int(round(val_fraction * len(members))))
            val.extend(rng.permutation(members)[:n_val].tolist())
    val = np.sort(np.array(val, dtype=int))
    train = np.setdiff1d(indices, val)
    return train, val


class AuditedDataset:
    """Sequence wrapper logging every read as ``(phase, fold, index)``."""

    def __init__(self, items):
        self.items = list(items)
        self.phase = "setup"
        self.fold = None
        self.reads = []

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        self.reads.append((self.phase, self.fold, int(i)))
        return self.items[i]

    def take(self, indices) -> list:
        return [self[i] for i in indices]

    def reads_in(self, phase, fold=None) -> set:
        return {i for p, f, i in self.reads if p == phase and (fold is None or f == fold)}


# ---------------------------------------------------------------------------
# tasks


class ClassificationTask:
    """Graph classification; items are :class:`~rgcnet.graph.Graph` with labels."""

    name = "classify"
    selection = "val_accuracy"

    def __init__(self, cfg: ExperimentConfig, n_features: int, n_classes: int):
        self.cfg = cfg
        self.n_features = n_features
        self.n_classes = n_classes

    def build(self, cell: dict, seed: int) -> GraphClassifier:
        cc = ClassifierConfig(
            kind=self.cfg.layer_kind,
            n_features=self.n_features,
            n_classes=self.n_classes,
            hidden=self.cfg.hidden,
            n_layers=self.cfg.n_layers,
            k=int(cell.get("k", 1)),
            alpha=float(cell.get("alpha", 0.8)),
            seed=seed,
            **self.cfg.model,
        )
        return GraphClassifier(cc)

    def prepare(self, model, items):
        return model.batch(items)

    def loss(self, model, batch):
        return nll_loss(model(batch), batch.labels)

    def evaluate(self, model, batch) -> dict:
        model.eval()
        probs = model(batch)
        loss = nll_loss(probs, batch.labels).item()
        acc = float(np.mean(np.argmax(probs.value, axis=1) == batch.labels))
        return {"loss": loss, "accuracy": acc, "score": acc}

    def test(self, model, items) -> dict:
        out = self.evaluate(model, model.batch(items))
        return {"accuracy": out["accuracy"], "loss": out["loss"], "n_test": len(items)}


class GenerationTask:
    """Next-timepoint prediction; items are ``(graph_t, adjacency_t+1)`` pairs."""

    name = "generate"
    selection = "val_composite_loss"

    def __init__(self, cfg: ExperimentConfig, n_nodes: int, n_features: int):
        self.cfg = cfg
        self.n_nodes = n_nodes
        self.n_features = n_features

    def build(self, cell: dict, seed: int) -> GeneratorModel:
        gc = GeneratorConfig(
            variant=self.cfg.layer_kind,
            n_nodes=self.n_nodes,
            n_features=self.n_features,
            k=int(cell.get("k", 1)),
            alpha=float(cell.get("alpha", 0.8)),
            seed=seed,
            **self.cfg.model,
        )
        return GeneratorModel(gc)

    def prepare(self, model, items):
        return [g for g, _ in items], np.vstack([a for _, a in items])

    def loss(self, model, batch):
        graphs, target = batch
        return batched_composite_loss(target, model.predict_batch(graphs), self.n_nodes, self.cfg.lambdas)

    def evaluate(self, model, batch) -> dict:
        model.eval()
        loss = self.loss(model, batch).item()
        return {"loss": loss, "score": -loss}

    def test(self, model, items) -> dict:
        model.eval()
        pred = model.predict_batch([g for g, _ in items]).value
        n = self.n_nodes
        reports = [evaluate(a, pred[i * n:(i + 1) * n]) for i, (_, a) in enumerate(items)]
        ident = [evaluate(a, identity_baseline(g)) for g, a in items]
        out = {f"model_{k}": v for k, v in zip(EvalReport.METRICS, mean_report(reports).values())}
        out.update({f"identity_{k}": v for k, v in zip(EvalReport.METRICS, mean_report(ident).values())})
        out["composite_loss"] = self.loss(model, self.prepare(model, items)).item()
        out["n_test"] = len(items)
        return out


# ---------------------------------------------------------------------------
# training


def learning_rate(lr0: float, epoch: int, step: int) -> float:
    """Halve every ``step`` epochs; ``epoch`` counts from 1."""
    return lr0 * 0.5 ** ((epoch - 1) // step)


def resource_probe() -> dict:
    """Monotonic wall clock (s) and peak resident set size of this process (bytes).

    ``peak_rss`` is ``None`` where the platform does not report it.
    """
    peak = None
    if resource is not None:
        ru = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        # Linux reports KiB, macOS bytes
        peak = int(ru) if sys.platform == "darwin" else int(ru) * 1024
    return {"wall_clock": time.perf_counter(), "peak_rss": peak}


@dataclass
class TrainResult:
    best_epoch: int
    epochs_run: int
    best_val: dict
    stopped_early: bool
    status: str
    epoch_times: list
    history: list


def train_with_early_stopping(model, task, train_items, val_items, lr: float, scheduler_step: int,
                              max_epochs: int, patience: int = 5, batch_size: int = 32, seed=0,
                              optimizer: str = "adam") -> TrainResult:
    """Adam (or plain SGD) with a step schedule; stop after ``patience`` epochs without a new best validation loss.

    The model is left holding its best-validation weights. A non-finite
    loss ends the trial with status ``numeric_failure``.
    """
    rng = np.random.default_rng(seed)
    opt = OPTIMIZERS[optimizer](model.parameters(), lr=lr)
    val_batch = task.prepare(model, val_items)
    best_loss = math.inf
    best_state = model.state_dict()
    best_epoch = 0
    best_val = {}
    wait = 0
    stopped = False
    status = "ok"
    epoch_times = []
    history = []
    epoch = 0
    train_items = list(train_items)
    for epoch in range(1, max_epochs + 1):
        t0 = time.perf_counter()
        opt.lr = learning_rate(lr, epoch, scheduler_step)
        model.train()
        order = rng.permutation(len(train_items))
        total = 0.0
        try:
            for start in range(0, len(order), batch_size):
                chunk = [train_items[i] for i in order[start:start + batch_size]]
                loss = task.loss(model, task.prepare(model, chunk))
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError("training loss is not finite")
                backward(loss)
                opt.step()
                total += value * len(chunk)
            val = task.evaluate(model, val_batch)
            if not math.isfinite(val["loss"]):
                raise NumericError("validation loss is not finite")
        except NumericError as exc:
            log.warning("trial aborted at epoch %d: %s", epoch, exc)
            status = "numeric_failure"
            epoch_times.append(time.perf_counter() - t0)
            break
        epoch_times.append(time.perf_counter() - t0)
        history.append({"epoch": epoch, "train_loss": total / len(train_items), **{f"val_{k}": v for k, v in val.items()}})
        if val["loss"] < best_loss:
            best_loss = val["loss"]
            best_state = model.state_dict()
            best_epoch = epoch
            best_val = val
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                stopped = True
                break
    model.load_state_dict(best_state)
    return TrainResult(best_epoch, epoch, best_val, stopped, status, epoch_times, history)


@dataclass
class TrialReport:
    seed: int
    fold: int
    cell: dict
    best_epoch: int
    epochs: int
    train_metric: float | None
    val_metric: float | None
    val_loss: float | None
    test: dict | None
    wall_time: float
    time_per_epoch: float
    peak_rss: int | None
    n_trainable: int
    stopped_early: bool
    status: str
    selected: bool = False

    def row(self) -> dict:
        d = asdict(self)
        d["cell"] = json.dumps(self.cell, sort_keys=True)
        d["test"] = json.dumps(self.test, sort_keys=True) if self.test is not None else ""
        return d


def _trial_seed(seed: int, fold: int, cell_index: int) -> int:
    return int(np.random.SeedSequence([seed, fold, cell_index]).generate_state(1, np.uint64)[0] >> 1)


def _run_trial(task, cfg, cell, cell_index, seed, fold, train_items, val_items):
    model_seed = _trial_seed(seed, fold, cell_index)
    model = task.build(cell, model_seed)
    start = resource_probe()
    res = train_with_early_stopping(
        model, task, train_items, val_items, cell["lr"], cell["scheduler_step"],
        cfg.max_epochs, cfg.patience, cfg.batch_size, seed=model_seed, optimizer=cfg.optimizer,
    )
    stop = resource_probe()
    wall = stop["wall_clock"] - start["wall_clock"]
    ok = res.status == "ok"
    train_metric = task.evaluate(model, task.prepare(model, train_items))["score"] if ok else None
    report = TrialReport(
        seed=seed,
        fold=fold,
        cell=cell,
        best_epoch=res.best_epoch,
        epochs=res.epochs_run,
        train_metric=train_metric,
        val_metric=res.best_val.get("score") if ok else None,
        val_loss=res.best_val.get("loss") if ok else None,
        test=None,
        wall_time=wall,
        time_per_epoch=wall / max(res.epochs_run, 1),
        peak_rss=stop["peak_rss"],
        n_trainable=model.count_trainable(),
        stopped_early=res.stopped_early,
        status=res.status,
    )
    return report, (model.state_dict() if ok else None)


def _select(trials):
    """Best validation score; ties to lower validation loss, then grid order."""
    ok = [(i, t) for i, t in enumerate(trials) if t.status == "ok"]
    if not ok:
        return None
    return min(ok, key=lambda it: (-it[1].val_metric, it[1].val_loss, it[0]))[0]


def _make_task(cfg: ExperimentConfig, dataset):
    from .data import transition_pairs

    if cfg.task == "classify":
        if dataset.kind != "classification":
            raise ConfigurationError("classification needs a labelled dataset")
        task = ClassificationTask(cfg, dataset.graphs[0].n_features, dataset.n_classes)
        units = list(dataset.graphs)
        outer_keys = dataset.labels
        return task, units, outer_keys, outer_keys, False
    if dataset.kind != "longitudinal":
        raise ConfigurationError("generation needs a longitudinal dataset")
    units = transition_pairs(dataset)
    g0 = units[0][0]
    task = GenerationTask(cfg, g0.n_nodes, g0.n_features)
    groups = np.array([g.subject for g, _ in units], dtype=object)
    return task, units, groups, groups, True


def nested_cv_run(cfg: ExperimentConfig, dataset, audit: AuditedDataset | None = None,
                  keep_models: bool = False) -> dict:
    """Run every trial and return ``{"trials": [...], "summary": {...}, "folds": [...]}``.

    With ``keep_models`` the result also maps ``(seed, fold)`` to the
    selected model and its test items.
    """
    task, units, outer_keys, inner_keys, grouped = _make_task(cfg, dataset)
    store = audit if audit is not None else AuditedDataset(units)
    if audit is not None and len(audit) != len(units):
        raise ConfigurationError("audit wrapper does not match the dataset")
    folds = (group_folds(outer_keys, cfg.n_folds, cfg.fold_seed) if grouped
             else stratified_folds(outer_keys, cfg.n_folds, cfg.fold_seed))
    all_idx = np.arange(len(units))
    cells = cfg.cells()
    plan = []
    store.phase = "train"
    split_data = {}
    for f, test_idx in enumerate(folds):
        store.fold = f
        rest = np.setdiff1d(all_idx, test_idx)
        tr, va = train_val_split(rest, inner_keys, cfg.val_fraction, seed=cfg.fold_seed * 1000 + f, by_group=grouped)
        split_data[f] = (store.take(tr), store.take(va))
    for seed in cfg.seeds:
        for f in range(len(folds)):
            for ci, cell in enumerate(cells):
                plan.append((seed, f, ci, cell))

    def args(p):
        seed, f, ci, cell = p
        return (task, cfg, cell, ci, seed, f, *split_data[f])

    results = {}
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {p[:3]: pool.submit(_run_trial, *args(p)) for p in plan}
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for p in plan:
            results[p[:3]] = _run_trial(*args(p))
            log.info("trial seed=%s fold=%s cell=%s done", *p[:3])

    store.phase, store.fold = "select", None
    trials = []
    chosen = []
    for seed in cfg.seeds:
        for f in range(len(folds)):
            group = [results[(seed, f, ci)] for ci in range(len(cells))]
            best = _select([r for r, _ in group])
            trials.extend(r for r, _ in group)
            chosen.append((seed, f, best, group))

    store.phase = "test"
    fold_results = []
    models = {}
    for seed, f, best, group in chosen:
        if best is None:
            fold_results.append({"seed": seed, "fold": f, "status": "numeric_failure"})
            continue
        report, state = group[best]
        model = task.build(cells[best], _trial_seed(seed, f, best))
        model.load_state_dict(state)
        store.fold = f
        test_items = store.take(folds[f])
        report.test = task.test(model, test_items)
        report.selected = True
        if keep_models:
            models[(seed, f)] = (model, test_items)
        fold_results.append({"seed": seed, "fold": f, "status": "ok", "cell": cells[best], **report.test})
    out = {
        "trials": trials,
        "folds": fold_results,
        "summary": aggregate(trials, cfg),
        "fold_assignment": [f.tolist() for f in folds],
    }
    if keep_models:
        out["models"] = models
    return out


def _ms(values):
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())


def aggregate(trials, cfg: ExperimentConfig | None = None) -> dict:
    """Mean and std over the selected (fold, seed) trials."""
    sel = [t for t in trials if t.selected and t.test is not None]
    out = {"n_selected": len(sel), "n_trials": len(trials), "grid_selection": "per_seed"}
    if cfg is not None:
        out.update({"task": cfg.task, "layer_kind": cfg.layer_kind, "n_layers": cfg.n_layers})
    if sel:
        weights = np.array([t.test.get("n_test", 1) for t in sel], dtype=np.float64)
        for key in sorted(sel[0].test):
            if key == "n_test":
                continue
            vals = [t.test[key] for t in sel]
            out[key] = _ms(vals)
            # weighted by test-set size: the mean over every test item
            out[f"pooled_{key}"] = float(np.dot(weights, vals) / weights.sum())
    out["training_time"] = _ms([t.wall_time for t in sel])
    out["time_per_epoch"] = _ms([t.time_per_epoch for t in sel])
    out["epochs"] = _ms([t.epochs for t in sel])
    out["best_epoch"] = _ms([t.best_epoch for t in sel])
    out["peak_rss_mb"] = _ms([t.peak_rss / 2**20 if t.peak_rss else None for t in sel])
    out["n_trainable"] = sel[0].n_trainable if sel else None
    out["numeric_failures"] = sum(t.status != "ok" for t in trials)
    return out


def write_trials_csv(path, trials) -> None:
    trials = list(trials)
    if not trials:
        Path(path).write_text("")
        return
    rows = [t.row() for t in trials]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_aggregate_csv(path, summaries) -> None:
    """One row per summary; ``(mean, std)`` pairs become ``key_mean`` and ``key_std``."""
    rows = []
    for s in summaries:
        row = {}
        for k, v in s.items():
            if isinstance(v, tuple):
                row[f"{k}_mean"], row[f"{k}_std"] = v
            else:
                row[k] = v
        rows.append(row)
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
