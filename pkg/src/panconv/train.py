"""Full-batch training with early stopping, multi-trial statistics, and
grid search over the walk weights.

Determinism contract: a trial is a pure function of (dataset, config, seed).
Trials share the dataset and propagator read-only, so they can run in
parallel; results are keyed by seed before aggregation, which makes every
output independent of completion order and of the worker count. Wall-clock
timings are kept in memory only and never written to manifests.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement

import numpy as np

from .data import GraphDataset
from .errors import EmptyMaskError, PanError, TrainingDivergedError
from .nn import AdamState, ModelParams, TwoLayerPan, adam_step, softmax_cross_entropy
from .propagator import EnergyForm, Propagator, PropagatorConfig, build_propagator

# Benchmark presets (learning rate 0.01 everywhere).
PRESETS = {
    "cora": {"dropout": 0.5, "weight_decay": 5e-3, "max_epochs": 200, "patience": 50},
    "citeseer": {"dropout": 0.5, "weight_decay": 1e-2, "max_epochs": 200, "patience": 50},
    "pubmed": {"dropout": 0.4, "weight_decay": 3e-3, "max_epochs": 100, "patience": 15},
}


@dataclass(frozen=True)
class TrainConfig:
    method: int
    L: int
    lr: float = 0.01
    dropout: float = 0.5
    weight_decay: float = 5e-3
    max_epochs: int = 200
    patience: int = 50
    hidden: int = 16
    seed: int = 0
    fixed_k: tuple | None = None  # None = train the walk weights by backprop

    def __post_init__(self):
        if self.method not in range(1, 8):
            raise ValueError(f"method must be 1..7, got {self.method}")
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience < 1 or self.hidden < 1 or self.max_epochs < 1:
            raise ValueError("patience, hidden and max_epochs must be >= 1")
        if self.fixed_k is not None:
            if len(self.fixed_k) != self.L + 1:
                raise ValueError(f"fixed_k needs length {self.L + 1}")
            if any(v < 0.0 for v in self.fixed_k):
                raise ValueError("fixed_k entries must be nonnegative")

    @property
    def trains_k(self) -> bool:
        return self.fixed_k is None

    def initial_k(self) -> tuple:
        if self.fixed_k is not None:
            return tuple(float(v) for v in self.fixed_k)
        return tuple(1.0 / (self.L + 1) for _ in range(self.L + 1))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fixed_k"] = None if self.fixed_k is None else list(self.fixed_k)
        return d


@dataclass
class EarlyStopper:
    """No-strict-improvement-for-`patience`-epochs stopping rule."""

    patience: int
    best_loss: float = np.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0

    def update(self, epoch: int, val_loss: float):
        """Returns (improved, should_stop)."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            return True, False
        self.epochs_since_improvement += 1
        return False, self.epochs_since_improvement >= self.patience


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0
    wall_seconds: float = 0.0

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)


def build_config_propagator(ds: GraphDataset, cfg: TrainConfig) -> Propagator:
    pcfg = PropagatorConfig(
        method=cfg.method,
        cutoff_L=cfg.L,
        weights=EnergyForm.explicit(cfg.initial_k()),
        trainable_k=cfg.trains_k,
    )
    return build_propagator(ds.graph, pcfg)


def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        raise EmptyMaskError("accuracy over an empty mask")
    pred = logits[mask].argmax(axis=1)
    return float((pred == labels[mask]).mean())


def train_model(ds: GraphDataset, cfg: TrainConfig,
                propagator: Propagator | None = None):
    """Train one model; returns (best ModelParams, TrainHistory).

    Early stopping: training halts after `patience` consecutive epochs
    without a strict improvement of the best validation loss, and the
    parameters from the best-validation-loss epoch are returned.
    """
    prop = propagator if propagator is not None else build_config_propagator(ds, cfg)
    rng = np.random.default_rng(cfg.seed)
    model = TwoLayerPan(
        prop,
        in_features=ds.n_features,
        hidden=cfg.hidden,
        n_classes=ds.n_classes,
        dropout_rate=cfg.dropout,
        trainable_k=cfg.trains_k,
        rng=rng,
    )
    params = model.params
    opt = AdamState.init(params.as_dict())
    history = TrainHistory()
    stopper = EarlyStopper(patience=cfg.patience)
    best_params = params.copy()
    started = time.perf_counter()

    def diverged(epoch, message, train_loss, val_loss=np.nan):
        # record the partial epoch so the carried history stays aligned
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.val_acc.append(np.nan)
        history.stopping_epoch = epoch
        history.wall_seconds = time.perf_counter() - started
        return TrainingDivergedError(f"{message} at epoch {epoch}", history)

    x = ds.features
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads = model.loss_and_grads(x, ds.labels, ds.train_mask, rng)
        if not np.isfinite(loss):
            raise diverged(epoch, "non-finite training loss", loss)
        pdict = params.as_dict()
        adam_step(pdict, grads, opt, lr=cfg.lr, weight_decay=cfg.weight_decay)
        params.W1, params.W2 = pdict["W1"], pdict["W2"]
        if cfg.trains_k:
            # keep walk weights in the nonnegative cone
            params.k1 = np.maximum(pdict["k1"], 0.0)
            params.k2 = np.maximum(pdict["k2"], 0.0)

        logits = model.logits(x)
        val_loss, _ = softmax_cross_entropy(logits, ds.labels, ds.val_mask)
        if not np.isfinite(val_loss):
            raise diverged(epoch, "non-finite validation loss", loss, val_loss)
        history.train_loss.append(loss)
        history.val_loss.append(val_loss)
        history.val_acc.append(_accuracy(logits, ds.labels, ds.val_mask))

        improved, should_stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params.copy()
            history.best_epoch = epoch
        history.stopping_epoch = epoch
        if should_stop:
            break

    history.wall_seconds = time.perf_counter() - started
    return best_params, history


def evaluate(params: ModelParams, ds: GraphDataset, split: str,
             propagator: Propagator) -> float:
    """Accuracy of a trained model on one of "train" / "val" / "test"."""
    masks = {"train": ds.train_mask, "val": ds.val_mask, "test": ds.test_mask}
    if split not in masks:
        raise ValueError(f"unknown split {split!r}")
    if params.W1.shape[0] != ds.n_features:
        raise ValueError("model input width does not match dataset features")
    model = TwoLayerPan.from_params(propagator, params)
    return _accuracy(model.logits(ds.features), ds.labels, masks[split])


@dataclass
class TrialResult:
    seed: int
    test_acc: float
    val_acc: float
    best_epoch: int
    stopping_epoch: int
    history: TrainHistory
    params: ModelParams


@dataclass
class TrialsSummary:
    seeds: list
    trials: list          # TrialResult, sorted by seed
    mean_test_acc: float
    std_test_acc: float
    mean_val_acc: float
    std_val_acc: float
    mean_best_val_loss: float
    curve_epochs: int
    mean_val_acc_curve: np.ndarray
    std_val_acc_curve: np.ndarray
    mean_val_loss_curve: np.ndarray
    mean_train_loss_curve: np.ndarray
    padded_from: dict     # seed -> epoch count before padding (only if padded)


def _pad(series: list, length: int) -> np.ndarray:
    arr = np.asarray(series, dtype=np.float64)
    if arr.shape[0] < length:
        arr = np.concatenate([arr, np.full(length - arr.shape[0], arr[-1])])
    return arr


def run_trials(ds: GraphDataset, cfg: TrainConfig, n_trials: int,
               base_seed: int | None = None, jobs: int = 1,
               propagator: Propagator | None = None) -> TrialsSummary:
    """Repeat training over consecutive seeds and aggregate.

    Shorter histories are padded by carrying their last value so the
    per-epoch mean/std curves are aligned; padded trials are flagged in
    `padded_from`.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    base = cfg.seed if base_seed is None else base_seed
    seeds = list(range(base, base + n_trials))
    prop = propagator if propagator is not None else build_config_propagator(ds, cfg)

    def one(seed: int) -> TrialResult:
        tcfg = replace(cfg, seed=seed)
        params, history = train_model(ds, tcfg, propagator=prop)
        eff = prop  # fixed-k propagators already carry their weights
        test_acc = evaluate(params, ds, "test", eff)
        val_acc = history.val_acc[history.best_epoch - 1]
        return TrialResult(
            seed=seed,
            test_acc=test_acc,
            val_acc=val_acc,
            best_epoch=history.best_epoch,
            stopping_epoch=history.stopping_epoch,
            history=history,
            params=params,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(one, seeds))
    else:
        trials = [one(s) for s in seeds]
    trials.sort(key=lambda t: t.seed)

    max_len = max(t.history.n_epochs for t in trials)
    padded_from = {
        t.seed: t.history.n_epochs for t in trials if t.history.n_epochs < max_len
    }
    val_acc_m = np.stack([_pad(t.history.val_acc, max_len) for t in trials])
    val_loss_m = np.stack([_pad(t.history.val_loss, max_len) for t in trials])
    train_loss_m = np.stack([_pad(t.history.train_loss, max_len) for t in trials])
    test_accs = np.array([t.test_acc for t in trials])
    val_accs = np.array([t.val_acc for t in trials])
    return TrialsSummary(
        seeds=seeds,
        trials=trials,
        mean_test_acc=float(test_accs.mean()),
        std_test_acc=float(test_accs.std()),
        mean_val_acc=float(val_accs.mean()),
        std_val_acc=float(val_accs.std()),
        mean_best_val_loss=float(
            np.mean([t.history.val_loss[t.best_epoch - 1] for t in trials])
        ),
        curve_epochs=max_len,
        mean_val_acc_curve=val_acc_m.mean(axis=0),
        std_val_acc_curve=val_acc_m.std(axis=0),
        mean_val_loss_curve=val_loss_m.mean(axis=0),
        mean_train_loss_curve=train_loss_m.mean(axis=0),
        padded_from=padded_from,
    )


def default_k_grid(L: int, step: float = 0.25) -> list:
    """All (L+1)-part weight vectors with components on the step lattice
    summing to 1."""
    if not 0.0 < step <= 1.0:
        raise ValueError(f"grid step must be in (0, 1], got {step}")
    n_units = round(1.0 / step)
    if abs(n_units * step - 1.0) > 1e-9:
        raise ValueError(f"grid step {step} does not divide 1")
    grid = []
    # distribute n_units indistinguishable units over L+1 slots
    for cut in combinations_with_replacement(range(L + 1), n_units):
        parts = [0] * (L + 1)
        for c in cut:
            parts[c] += 1
        grid.append(tuple(p * step for p in parts))
    return sorted(set(grid))


@dataclass
class GridRow:
    k: tuple
    mean_val_acc: float
    std_val_acc: float
    mean_test_acc: float
    mean_best_val_loss: float


def grid_search_k(ds: GraphDataset, cfg: TrainConfig, grid,
                  n_trials: int = 1, base_seed: int | None = None,
                  jobs: int = 1) -> tuple:
    """Train every fixed-k candidate with the trial protocol and pick the
    winner by mean validation accuracy (ties: lower mean best validation
    loss, then first in grid order). Returns (best_k, [GridRow])."""
    grid = [tuple(float(v) for v in k) for k in grid]
    if not grid:
        raise PanError("grid search over an empty candidate list")
    if any(any(v < 0.0 for v in k) for k in grid):
        raise ValueError("grid candidates must be nonnegative")
    prop = build_config_propagator(ds, replace(cfg, fixed_k=grid[0]))
    rows = []
    for cand in grid:
        summary = run_trials(
            ds, replace(cfg, fixed_k=cand), n_trials,
            base_seed=base_seed, jobs=jobs, propagator=prop.reweight(cand),
        )
        rows.append(GridRow(
            k=cand,
            mean_val_acc=summary.mean_val_acc,
            std_val_acc=summary.std_val_acc,
            mean_test_acc=summary.mean_test_acc,
            mean_best_val_loss=summary.mean_best_val_loss,
        ))
    best = select_grid_winner(rows)
    return best.k, rows


def select_grid_winner(rows) -> "GridRow":
    """Pure selection over a result table: highest mean validation accuracy,
    tie-broken by lower mean best validation loss, then table order."""
    best = rows[0]
    for row in rows[1:]:
        if row.mean_val_acc > best.mean_val_acc or (
            row.mean_val_acc == best.mean_val_acc
            and row.mean_best_val_loss < best.mean_best_val_loss
        ):
            best = row
    return best


def dataset_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(cfg: TrainConfig, summary: TrialsSummary, dataset_path,
                 dataset_sha256: str, features_row_normalized: bool = True) -> dict:
    """JSON-serializable record from which a run is fully reconstructible.
    Deliberately excludes wall-clock data and the worker count, so reruns at
    any parallelism produce byte-identical manifests."""
    return {
        "config": cfg.to_dict(),
        "dataset": {
            "path": str(dataset_path),
            "sha256": dataset_sha256,
            "features_row_normalized": features_row_normalized,
        },
        "seeds": summary.seeds,
        "trials": [
            {
                "seed": t.seed,
                "test_acc": t.test_acc,
                "val_acc": t.val_acc,
                "best_epoch": t.best_epoch,
                "stopping_epoch": t.stopping_epoch,
                "padded_from": summary.padded_from.get(t.seed),
            }
            for t in summary.trials
        ],
        "summary": {
            "mean_test_acc": summary.mean_test_acc,
            "std_test_acc": summary.std_test_acc,
            "mean_val_acc": summary.mean_val_acc,
            "std_val_acc": summary.std_val_acc,
        },
    }


def manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")


def curves_csv_bytes(summary: TrialsSummary) -> bytes:
    """Per-epoch curves of every trial: epoch, train_loss, val_loss,
    val_acc, trial_id."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "val_loss", "val_acc", "trial_id"])
    for t in summary.trials:
        h = t.history
        for e in range(h.n_epochs):
            writer.writerow([e + 1, repr(h.train_loss[e]), repr(h.val_loss[e]),
                             repr(h.val_acc[e]), t.seed])
    return buf.getvalue().encode("utf-8")


def grid_csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n_k = len(rows[0].k)
    writer.writerow([f"k{i}" for i in range(n_k)]
                    + ["mean_val_acc", "std", "mean_test_acc"])
    for row in rows:
        writer.writerow([repr(v) for v in row.k]
                        + [repr(row.mean_val_acc), repr(row.std_val_acc),
                           repr(row.mean_test_acc)])
    return buf.getvalue().encode("utf-8")
