"""Mini-batch SGD with linear warmup and step decay."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tape as T
from .graphcore import LabeledGraph
from .model import ModelConfig, collate, forward_batch, index_graph

__all__ = [
    "TrainingError",
    "TrainSchedule",
    "EpochRecord",
    "TrainResult",
    "evaluate",
    "train",
    "format_trace",
]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSchedule:
    base_lr: float = 3e-4
    warmup_epochs: int = 0
    decay_milestones: tuple[int, ...] = ()
    epochs: int = 200
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "decay_milestones", tuple(int(x) for x in self.decay_milestones))
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if list(self.decay_milestones) != sorted(set(self.decay_milestones)):
            raise ValueError("decay milestones must be strictly ascending")
        if self.warmup_epochs < 0 or self.epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def lr_at(self, epoch: int) -> float:
        """Rate for the 1-based ``epoch``: base_lr*e/warmup while warming up, then x0.1 per milestone passed."""
        if self.warmup_epochs and epoch <= self.warmup_epochs:
            return self.base_lr * epoch / self.warmup_epochs
        passed = sum(1 for m in self.decay_milestones if epoch > m)
        return self.base_lr * 0.1**passed

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["decay_milestones"] = list(self.decay_milestones)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainSchedule":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown schedule keys: {sorted(unknown)}")
        return cls(**dict(d))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_mse: float
    train_mae: float
    val_mse: float | None = None
    val_mae: float | None = None


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    trace: list[EpochRecord] = field(default_factory=list)
    final_mse: float = float("nan")
    final_mae: float = float("nan")

    @property
    def initial(self) -> EpochRecord:
        return self.trace[0]

    @property
    def final(self) -> EpochRecord:
        return self.trace[-1]


def _predict_indexed(params, indexed, config: ModelConfig, chunk: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(indexed), chunk):
        pred, _ = forward_batch(params, collate(indexed[i : i + chunk], config), config)
        out.append(pred.value)
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(params, indexed, targets: np.ndarray, config: ModelConfig) -> tuple[float, float]:
    """(MSE, MAE) over a dataset."""
    if len(indexed) == 0:
        return float("nan"), float("nan")
    err = _predict_indexed(params, indexed, config) - targets
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


def train(
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
    graphs: Sequence[LabeledGraph],
    targets: Sequence[float],
    schedule: TrainSchedule,
    *,
    seed: int = 0,
    val_graphs: Sequence[LabeledGraph] = (),
    val_targets: Sequence[float] = (),
    log=None,
) -> TrainResult:
    """Minimise the batch-mean squared error with plain SGD.

    The trace starts with an epoch-0 row measured on the whole training set
    before any update; later rows hold the mean over the epoch's batches, each
    measured just before its own update. ``final_mse``/``final_mae`` are
    measured on the whole set after the last update. Batch order comes from
    ``numpy.random.default_rng(seed)``, so equal inputs give bit-identical
    traces.
    """
    if len(graphs) == 0:
        raise TrainingError("empty dataset")
    if len(graphs) != len(targets):
        raise TrainingError("graphs and targets differ in length")
    y = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise TrainingError("non-finite target in dataset")
    yv = np.asarray(val_targets, dtype=np.float64)
    indexed = [index_graph(g, config) for g in graphs]
    val_indexed = [index_graph(g, config) for g in val_graphs]
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    rng = np.random.default_rng(seed)

    def record(epoch: int, lr: float, mse: float, mae: float) -> EpochRecord:
        vmse, vmae = evaluate(params, val_indexed, yv, config) if val_indexed else (None, None)
        rec = EpochRecord(epoch, lr, mse, mae, vmse, vmae)
        if log is not None:
            log(rec)
        return rec

    result = TrainResult(params, [record(0, 0.0, *evaluate(params, indexed, y, config))])
    bs = schedule.batch_size
    for epoch in range(1, schedule.epochs + 1):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(len(indexed))
        sq_sum = abs_sum = 0.0
        for bi, start in enumerate(range(0, len(order), bs)):
            chosen = order[start : start + bs]
            batch = collate([indexed[i] for i in chosen], config)
            leaves = {k: T.leaf(v, name=k) for k, v in params.items()}
            # overflow shows up as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                pred, _ = forward_batch(leaves, batch, config)
                err = pred - y[chosen]
                loss = T.mean(err * err)
            if not np.isfinite(loss.value):
                raise TrainingError(
                    f"loss became {float(loss.value)} at epoch {epoch}, batch {bi} (lr {lr:g})"
                )
            sq_sum += float(np.sum(err.value**2))
            abs_sum += float(np.sum(np.abs(err.value)))
            T.backward(loss)
            for k, leaf in leaves.items():
                if leaf.adjoint is not None:
                    params[k] = params[k] - lr * leaf.adjoint
        result.trace.append(record(epoch, lr, sq_sum / len(order), abs_sum / len(order)))
    result.final_mse, result.final_mae = evaluate(params, indexed, y, config)
    result.params = params
    return result


def format_trace(trace: Sequence[EpochRecord]) -> str:
    """Columnar text: one row per epoch, ``nan`` where there is no validation set."""
    lines = ["# epoch lr train_mse train_mae val_mse val_mae"]
    for r in trace:
        cols = [r.epoch, r.lr, r.train_mse, r.train_mae, r.val_mse, r.val_mae]
        lines.append(
            " ".join(str(c) if isinstance(c, int) else repr(float("nan") if c is None else float(c)) for c in cols)
        )
    return "\n".join(lines) + "\n"
