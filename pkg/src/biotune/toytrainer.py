"""Desk-scale transfer-learning backend.

A small block-structured classifier (affine+tanh feature blocks and a
softmax head) is pre-trained on a synthetic source task and fine-tuned on a
distribution-shifted target task with per-block learning rates. Parameters
live in one flat vector partitioned into per-block slices, which makes
freezing, per-block updates, and finite-difference checks straightforward.

Every training routine is plain mini-batch gradient descent seeded end to
end, so a (weights, config, seed) triple always reproduces the same run.
The module also hosts the reference fine-tuning strategies used for
comparisons: full fine-tuning, linear probing, L1/L2 anchored regularization
toward the pre-trained weights, gradual unfreezing in both directions, and
gradient-norm-ratio learning-rate scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DivergenceError, EvaluationError, InvalidModelError
from .fitness import EvalContext, FitnessSpec, aggregate, stratified_folds, stratified_subset
from .genome import (
    DEFAULT_WEIGHT_FUNCTION,
    FineTuneConfig,
    Genome,
    WeightFunction,
    decode,
)

__all__ = [
    "BlockNet",
    "TrainSpec",
    "Regularizer",
    "ShiftSpec",
    "SyntheticTask",
    "FinetuneResult",
    "make_task",
    "save_task",
    "load_task",
    "loss_and_grad",
    "sgd_step",
    "pretrain",
    "finetune",
    "full_config",
    "head_only_config",
    "unfreeze_schedule",
    "autorgn_multipliers",
    "BASELINE_METHODS",
    "run_baseline",
    "ToyEvaluator",
]

PROB_FLOOR = 1e-12
NORM_EPS = 1e-12


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class BlockNet:
    """Block-structured classifier over a flat parameter vector.

    Blocks 0..B-1 are affine+tanh feature blocks; block B is the linear
    classifier head followed by softmax. The flat parameter vector is
    partitioned by per-block slices, so a block is frozen simply by never
    touching its slice.
    """

    def __init__(self, dims: list[tuple[int, int]], params: np.ndarray, slices: list[slice]):
        self.dims = dims
        self.params = params
        self.slices = slices

    @classmethod
    def init(
        cls,
        num_blocks: int,
        feature_dim: int,
        hidden_width: int,
        num_classes: int,
        rng: np.random.Generator,
    ) -> "BlockNet":
        if num_blocks < 1:
            raise InvalidModelError("a network needs at least the classifier block")
        dims = []
        width = feature_dim
        for _ in range(num_blocks - 1):
            dims.append((width, hidden_width))
            width = hidden_width
        dims.append((width, num_classes))
        slices = []
        start = 0
        for fan_in, fan_out in dims:
            size = fan_in * fan_out + fan_out
            slices.append(slice(start, start + size))
            start += size
        params = np.empty(start)
        net = cls(dims, params, slices)
        for b in range(num_blocks):
            net.params[net.slices[b]] = _layer_init(dims[b], rng)
        return net

    @property
    def num_blocks(self) -> int:
        return len(self.dims)

    @property
    def num_classes(self) -> int:
        return self.dims[-1][1]

    @property
    def feature_dim(self) -> int:
        return self.dims[0][0]

    def layer(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        fan_in, fan_out = self.dims[b]
        flat = self.params[self.slices[b]]
        return flat[: fan_in * fan_out].reshape(fan_in, fan_out), flat[fan_in * fan_out :]

    def block_param_counts(self) -> np.ndarray:
        return np.array([s.stop - s.start for s in self.slices], dtype=np.int64)

    def copy(self) -> "BlockNet":
        return BlockNet(list(self.dims), self.params.copy(), list(self.slices))

    def with_new_head(self, num_classes: int, rng: np.random.Generator) -> "BlockNet":
        """Clone with the classifier block re-initialized for a new class count."""
        hidden = self.dims[-1][0]
        dims = list(self.dims[:-1]) + [(hidden, num_classes)]
        slices = list(self.slices[:-1])
        start = slices[-1].stop if slices else 0
        head_size = hidden * num_classes + num_classes
        slices.append(slice(start, start + head_size))
        params = np.empty(start + head_size)
        params[:start] = self.params[:start]
        params[start:] = _layer_init((hidden, num_classes), rng)
        return BlockNet(dims, params, slices)

    def _forward_cached(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        acts = [x]
        a = x
        for b in range(self.num_blocks - 1):
            w, bias = self.layer(b)
            a = np.tanh(a @ w + bias)
            acts.append(a)
        w, bias = self.layer(self.num_blocks - 1)
        logits = a @ w + bias
        return acts, _softmax(logits)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities, one row per sample."""
        return self._forward_cached(np.atleast_2d(x))[1]


def _layer_init(dims: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = dims
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, fan_in * fan_out + fan_out)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((y.size, num_classes))
    out[np.arange(y.size), y] = 1.0
    return out


@dataclass(frozen=True)
class Regularizer:
    """Anchor penalty on the distance between current and pre-trained weights."""

    kind: str  # "l1" or "l2"
    alpha: float

    def __post_init__(self):
        if self.kind not in ("l1", "l2"):
            raise ValueError("regularizer kind must be 'l1' or 'l2'")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class TrainSpec:
    base_lr: float = 0.05
    max_epochs: int = 30
    patience: int = 3
    batch_size: int = 16
    regularizer: Regularizer | None = None

    def __post_init__(self):
        if not (self.base_lr > 0.0):
            raise ValueError("base_lr must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not (1 <= self.patience <= self.max_epochs):
            raise ValueError("patience must lie in [1, max_epochs]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def loss_and_grad(
    net: BlockNet,
    x: np.ndarray,
    y: np.ndarray,
    regularizer: Regularizer | None = None,
    reference: np.ndarray | None = None,
    reg_mask: np.ndarray | None = None,
    lowest_active: int = 0,
) -> tuple[float, np.ndarray]:
    """Cross-entropy loss (optionally anchored) and the flat parameter gradient.

    lowest_active skips gradient computation below the given block index;
    those entries stay zero and must not be consumed by the update.
    """
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    acts, probs = net._forward_cached(x)
    n = x.shape[0]
    onehot = _one_hot(y, net.num_classes)
    loss = -float((onehot * np.log(np.maximum(probs, PROB_FLOOR))).sum()) / n

    grad = np.zeros_like(net.params)
    head = net.num_blocks - 1
    d_out = (probs - onehot) / n
    for b in range(head, lowest_active - 1, -1):
        w, _ = net.layer(b)
        fan_in, fan_out = net.dims[b]
        sl = net.slices[b]
        grad[sl][: fan_in * fan_out] = (acts[b].T @ d_out).ravel()
        grad[sl][fan_in * fan_out :] = d_out.sum(axis=0)
        if b > lowest_active:
            d_act = d_out @ w.T
            d_out = d_act * (1.0 - acts[b] ** 2)

    if regularizer is not None and regularizer.alpha > 0.0:
        if reference is None:
            raise ValueError("anchored regularization needs the reference weights")
        diff = net.params - reference
        if reg_mask is not None:
            diff = np.where(reg_mask, diff, 0.0)
        if regularizer.kind == "l1":
            loss += regularizer.alpha * float(np.abs(diff).sum())
            grad += regularizer.alpha * np.sign(diff)
        else:
            loss += regularizer.alpha * float((diff**2).sum())
            grad += 2.0 * regularizer.alpha * diff
    return loss, grad


def sgd_step(net: BlockNet, grad: np.ndarray, cfg: FineTuneConfig) -> None:
    """One in-place descent step with per-block learning rates; frozen blocks untouched."""
    for b in range(net.num_blocks):
        eta = cfg.eta[b]
        if eta > 0.0:
            net.params[net.slices[b]] -= (cfg.base_lr * eta) * grad[net.slices[b]]


def accuracy(net: BlockNet, x: np.ndarray, y: np.ndarray) -> float:
    return float((net.forward(x).argmax(axis=1) == y).mean())


def mean_loss(net: BlockNet, x: np.ndarray, y: np.ndarray) -> float:
    probs = net.forward(x)
    onehot = _one_hot(y, net.num_classes)
    return -float((onehot * np.log(np.maximum(probs, PROB_FLOOR))).sum()) / x.shape[0]


# ---------------------------------------------------------------------------
# Synthetic source -> target task
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """Distribution shift applied to the target domain."""

    kind: str = "rotation"  # rotation | class-remap | feature-scramble
    magnitude: float = 0.35

    def __post_init__(self):
        if self.kind not in ("rotation", "class-remap", "feature-scramble"):
            raise ValueError("shift kind must be rotation, class-remap, or feature-scramble")
        if not (0.0 <= self.magnitude <= 1.0):
            raise ValueError("magnitude must lie in [0, 1]")


@dataclass
class SyntheticTask:
    source_x: np.ndarray
    source_y: np.ndarray
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_source_classes: int
    num_target_classes: int
    shift: ShiftSpec

    @property
    def feature_dim(self) -> int:
        return self.source_x.shape[1]


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.maximum(np.linalg.norm(m, axis=1, keepdims=True), NORM_EPS)


def _rotation_matrix(dim: int, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    g = np.eye(dim)
    angle = magnitude * (np.pi / 2.0)
    c, s = np.cos(angle), np.sin(angle)
    for i in range(0, dim - 1, 2):
        g[i, i] = c
        g[i, i + 1] = -s
        g[i + 1, i] = s
        g[i + 1, i + 1] = c
    return q.T @ g @ q


def _balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % num_classes)


def _sample(means, labels, noise, rng, transform=None):
    x = means[labels] + noise * rng.standard_normal((labels.size, means.shape[1]))
    if transform is not None:
        x = x @ transform
    return x


def make_task(
    feature_dim: int = 20,
    source_classes: int = 8,
    target_classes: int = 4,
    source_samples: int = 800,
    train_samples: int = 300,
    val_samples: int = 120,
    test_samples: int = 400,
    class_radius: float = 2.5,
    noise: float = 1.0,
    shift: ShiftSpec = ShiftSpec(),
    seed: int = 0,
) -> SyntheticTask:
    """Gaussian-blob source task plus a shifted target task with different classes."""
    rng = np.random.default_rng(seed)
    source_means = _unit_rows(rng.normal(size=(source_classes, feature_dim))) * class_radius

    source_y = _balanced_labels(source_samples, source_classes, rng)
    source_x = _sample(source_means, source_y, noise, rng)

    if shift.kind == "class-remap":
        pairs = [rng.choice(source_classes, size=2, replace=False) for _ in range(target_classes)]
        mixed = np.stack(
            [
                (1.0 - shift.magnitude) * source_means[a] + shift.magnitude * source_means[b]
                for a, b in pairs
            ]
        )
        target_means = _unit_rows(mixed) * class_radius
        transform = None
    else:
        target_means = _unit_rows(rng.normal(size=(target_classes, feature_dim))) * class_radius
        if shift.kind == "rotation":
            transform = _rotation_matrix(feature_dim, shift.magnitude, rng)
        else:  # feature-scramble
            k = int(round(shift.magnitude * feature_dim))
            perm = np.arange(feature_dim)
            if k >= 2:
                positions = np.sort(rng.choice(feature_dim, size=k, replace=False))
                perm[positions] = rng.permutation(positions)
            transform = np.eye(feature_dim)[:, perm]

    def target_split(n):
        y = _balanced_labels(n, target_classes, rng)
        return _sample(target_means, y, noise, rng, transform), y

    train_x, train_y = target_split(train_samples)
    val_x, val_y = target_split(val_samples)
    test_x, test_y = target_split(test_samples)
    return SyntheticTask(
        source_x=source_x,
        source_y=source_y,
        train_x=train_x,
        train_y=train_y,
        val_x=val_x,
        val_y=val_y,
        test_x=test_x,
        test_y=test_y,
        num_source_classes=source_classes,
        num_target_classes=target_classes,
        shift=shift,
    )


def save_task(task: SyntheticTask, directory) -> None:
    """Write the task as four CSV splits plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ",".join([f"feature_{i}" for i in range(task.feature_dim)] + ["label"])
    splits = {
        "source": (task.source_x, task.source_y),
        "train": (task.train_x, task.train_y),
        "val": (task.val_x, task.val_y),
        "test": (task.test_x, task.test_y),
    }
    for name, (x, y) in splits.items():
        rows = np.column_stack([x, y.astype(np.float64)])
        np.savetxt(
            directory / f"{name}.csv",
            rows,
            delimiter=",",
            header=header,
            comments="",
            fmt="%.17g",
        )
    manifest = {
        "feature_dim": task.feature_dim,
        "source_classes": sorted(int(c) for c in np.unique(task.source_y)),
        "target_classes": sorted(int(c) for c in np.unique(task.train_y)),
        "num_source_classes": task.num_source_classes,
        "num_target_classes": task.num_target_classes,
        "shift": {"kind": task.shift.kind, "magnitude": task.shift.magnitude},
        "split_sizes": {name: int(xy[1].size) for name, xy in splits.items()},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_task(directory) -> SyntheticTask:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())

    def read(name):
        rows = np.loadtxt(directory / f"{name}.csv", delimiter=",", skiprows=1, ndmin=2)
        return rows[:, :-1], rows[:, -1].astype(np.int64)

    source_x, source_y = read("source")
    train_x, train_y = read("train")
    val_x, val_y = read("val")
    test_x, test_y = read("test")
    return SyntheticTask(
        source_x=source_x,
        source_y=source_y,
        train_x=train_x,
        train_y=train_y,
        val_x=val_x,
        val_y=val_y,
        test_x=test_x,
        test_y=test_y,
        num_source_classes=int(manifest["num_source_classes"]),
        num_target_classes=int(manifest["num_target_classes"]),
        shift=ShiftSpec(**manifest["shift"]),
    )


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


@dataclass
class FinetuneResult:
    val_accuracy: float
    val_loss: float
    test_accuracy: float
    net: BlockNet
    epochs_trained: int


def _epoch(net, x, y, cfg, spec, rng, reg=None, reference=None, reg_mask=None, lowest_active=0):
    order = rng.permutation(x.shape[0])
    for start in range(0, order.size, spec.batch_size):
        batch = order[start : start + spec.batch_size]
        loss, grad = loss_and_grad(
            net, x[batch], y[batch], reg, reference, reg_mask, lowest_active
        )
        if not np.isfinite(loss):
            raise DivergenceError(
                "training loss became non-finite; try a lower base learning rate"
            )
        sgd_step(net, grad, cfg)


def pretrain(net: BlockNet, task: SyntheticTask, spec: TrainSpec, seed: int) -> BlockNet:
    """Train a fresh net on the source task; returns the best-validation snapshot."""
    if net.feature_dim != task.feature_dim:
        raise InvalidModelError("network feature dim does not match the task")
    rng = np.random.default_rng(seed)
    net = net.copy()
    n = task.source_x.shape[0]
    perm = rng.permutation(n)
    split = max(1, int(round(n * 0.8)))
    tr, va = perm[:split], perm[split:]
    if va.size == 0:
        va = tr
    x_tr, y_tr = task.source_x[tr], task.source_y[tr]
    x_va, y_va = task.source_x[va], task.source_y[va]

    cfg = full_config(net.num_blocks, spec.base_lr)
    best_params = net.params.copy()
    best_acc = accuracy(net, x_va, y_va)
    best_epoch = -1
    for epoch in range(spec.max_epochs):
        _epoch(net, x_tr, y_tr, cfg, spec, rng)
        acc = accuracy(net, x_va, y_va)
        if acc > best_acc:
            best_acc, best_params, best_epoch = acc, net.params.copy(), epoch
        elif epoch - best_epoch >= spec.patience:
            break
    net.params[:] = best_params
    return net


def full_config(num_blocks: int, base_lr: float) -> FineTuneConfig:
    """Full fine-tuning: every block trainable at the base learning rate."""
    return FineTuneConfig(np.ones(num_blocks), base_lr)


def head_only_config(num_blocks: int, base_lr: float) -> FineTuneConfig:
    """Linear probing: only the classifier block trains."""
    eta = np.zeros(num_blocks)
    eta[-1] = 1.0
    return FineTuneConfig(eta, base_lr)


def finetune(
    pretrained: BlockNet,
    cfg: FineTuneConfig,
    task: SyntheticTask,
    spec: TrainSpec,
    seed: int,
    train_indices: np.ndarray | None = None,
) -> FinetuneResult:
    """Adapt the pre-trained net to the target task under a per-block lr config.

    The classifier head is re-initialized for the target classes. Early
    stopping tracks validation accuracy with the given patience and the
    best-epoch snapshot is what gets reported. An all-frozen config trains
    nothing and simply reports the untrained-head metrics.
    """
    if cfg.num_blocks != pretrained.num_blocks:
        raise ValueError("config must have one multiplier per network block")
    rng = np.random.default_rng(seed)
    net = pretrained.with_new_head(task.num_target_classes, rng)

    x_tr, y_tr = task.train_x, task.train_y
    if train_indices is not None:
        x_tr, y_tr = x_tr[train_indices], y_tr[train_indices]
    x_va, y_va = task.val_x, task.val_y

    if not cfg.active.any():
        return FinetuneResult(
            val_accuracy=accuracy(net, x_va, y_va),
            val_loss=mean_loss(net, x_va, y_va),
            test_accuracy=accuracy(net, task.test_x, task.test_y),
            net=net,
            epochs_trained=0,
        )

    lowest_active = int(np.flatnonzero(cfg.active)[0])
    reg = spec.regularizer
    reference = net.params.copy() if reg is not None else None
    reg_mask = None
    if reg is not None:
        # The anchor covers only blocks that actually have pre-trained
        # weights; the freshly initialized head has no reference point.
        reg_mask = np.zeros(net.params.size, dtype=bool)
        for b in range(net.num_blocks - 1):
            reg_mask[net.slices[b]] = True

    best = FinetuneResult(
        val_accuracy=accuracy(net, x_va, y_va),
        val_loss=mean_loss(net, x_va, y_va),
        test_accuracy=0.0,
        net=net,
        epochs_trained=0,
    )
    best_params = net.params.copy()
    best_epoch = -1
    epochs_run = 0
    for epoch in range(spec.max_epochs):
        _epoch(net, x_tr, y_tr, cfg, spec, rng, reg, reference, reg_mask, lowest_active)
        epochs_run = epoch + 1
        acc = accuracy(net, x_va, y_va)
        if acc > best.val_accuracy:
            best.val_accuracy = acc
            best.val_loss = mean_loss(net, x_va, y_va)
            best_params = net.params.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= spec.patience:
            break
    net.params[:] = best_params
    best.test_accuracy = accuracy(net, task.test_x, task.test_y)
    best.net = net
    best.epochs_trained = epochs_run
    return best


# ---------------------------------------------------------------------------
# Reference fine-tuning strategies
# ---------------------------------------------------------------------------

BASELINE_METHODS = ("FT", "LP", "L1SP", "L2SP", "G-LF", "G-FL", "AutoRGN")


def unfreeze_schedule(direction: str, epoch: int, num_blocks: int, max_epochs: int) -> np.ndarray:
    """Boolean trainable-block mask for gradual unfreezing at a given epoch."""
    stage_len = math.ceil(max_epochs / num_blocks)
    released = min(epoch // stage_len + 1, num_blocks)
    active = np.zeros(num_blocks, dtype=bool)
    if direction == "last_to_first":
        active[num_blocks - released :] = True
    elif direction == "first_to_last":
        active[:released] = True
    else:
        raise ValueError("direction must be 'last_to_first' or 'first_to_last'")
    return active


def autorgn_multipliers(net: BlockNet, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-block lr multipliers: gradient-to-parameter norm ratios, mean-normalized to 1."""
    _, grad = loss_and_grad(net, x, y)
    ratios = np.empty(net.num_blocks)
    for b, sl in enumerate(net.slices):
        g = float(np.linalg.norm(grad[sl]))
        p = float(np.linalg.norm(net.params[sl]))
        ratios[b] = (g + NORM_EPS) / (p + NORM_EPS)
    return ratios / ratios.mean()


def _run_gradual(pretrained, task, spec, seed, direction):
    # The schedule releases blocks late in training, so accuracy-based
    # patience would abort before later stages begin; it runs to max_epochs.
    rng = np.random.default_rng(seed)
    net = pretrained.with_new_head(task.num_target_classes, rng)
    best_params = net.params.copy()
    best_acc = accuracy(net, task.val_x, task.val_y)
    best_loss = mean_loss(net, task.val_x, task.val_y)
    for epoch in range(spec.max_epochs):
        active = unfreeze_schedule(direction, epoch, net.num_blocks, spec.max_epochs)
        cfg = FineTuneConfig(active.astype(np.float64), spec.base_lr)
        lowest = int(np.flatnonzero(active)[0])
        _epoch(net, task.train_x, task.train_y, cfg, spec, rng, lowest_active=lowest)
        acc = accuracy(net, task.val_x, task.val_y)
        if acc > best_acc:
            best_acc = acc
            best_loss = mean_loss(net, task.val_x, task.val_y)
            best_params = net.params.copy()
    net.params[:] = best_params
    return FinetuneResult(
        val_accuracy=best_acc,
        val_loss=best_loss,
        test_accuracy=accuracy(net, task.test_x, task.test_y),
        net=net,
        epochs_trained=spec.max_epochs,
    )


def _run_autorgn(pretrained, task, spec, seed):
    rng = np.random.default_rng(seed)
    net = pretrained.with_new_head(task.num_target_classes, rng)
    best_params = net.params.copy()
    best_acc = accuracy(net, task.val_x, task.val_y)
    best_loss = mean_loss(net, task.val_x, task.val_y)
    best_epoch = -1
    epochs_run = 0
    for epoch in range(spec.max_epochs):
        mult = autorgn_multipliers(net, task.train_x, task.train_y)
        cfg = FineTuneConfig(mult, spec.base_lr)
        _epoch(net, task.train_x, task.train_y, cfg, spec, rng)
        epochs_run = epoch + 1
        acc = accuracy(net, task.val_x, task.val_y)
        if acc > best_acc:
            best_acc = acc
            best_loss = mean_loss(net, task.val_x, task.val_y)
            best_params = net.params.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= spec.patience:
            break
    net.params[:] = best_params
    return FinetuneResult(
        val_accuracy=best_acc,
        val_loss=best_loss,
        test_accuracy=accuracy(net, task.test_x, task.test_y),
        net=net,
        epochs_trained=epochs_run,
    )


def run_baseline(
    method: str,
    pretrained: BlockNet,
    task: SyntheticTask,
    spec: TrainSpec,
    seed: int,
    sp_alpha: float = 1e-3,
) -> FinetuneResult:
    """Run one reference fine-tuning strategy; see BASELINE_METHODS for names."""
    nb = pretrained.num_blocks
    if method == "FT":
        return finetune(pretrained, full_config(nb, spec.base_lr), task, spec, seed)
    if method == "LP":
        return finetune(pretrained, head_only_config(nb, spec.base_lr), task, spec, seed)
    if method == "L1SP":
        spec = replace(spec, regularizer=Regularizer("l1", sp_alpha))
        return finetune(pretrained, full_config(nb, spec.base_lr), task, spec, seed)
    if method == "L2SP":
        spec = replace(spec, regularizer=Regularizer("l2", sp_alpha))
        return finetune(pretrained, full_config(nb, spec.base_lr), task, spec, seed)
    if method == "G-LF":
        return _run_gradual(pretrained, task, spec, seed, "last_to_first")
    if method == "G-FL":
        return _run_gradual(pretrained, task, spec, seed, "first_to_last")
    if method == "AutoRGN":
        return _run_autorgn(pretrained, task, spec, seed)
    valid = ", ".join(BASELINE_METHODS)
    raise ValueError(f"unknown baseline method {method!r}; expected one of: {valid}")


# ---------------------------------------------------------------------------
# Fitness backend
# ---------------------------------------------------------------------------


class ToyEvaluator:
    """Search evaluator backed by the toy trainer.

    Pre-trains once on the source task, then scores each genome by decoding
    it and fine-tuning on the rotating stratified fold of the (optionally
    subsampled) target training data, once per seed in the evaluation
    context. The per-seed validation results are aggregated per the fitness
    spec.
    """

    def __init__(
        self,
        task: SyntheticTask,
        spec: TrainSpec,
        fitness_spec: FitnessSpec,
        weight_function: WeightFunction = DEFAULT_WEIGHT_FUNCTION,
        num_blocks: int = 6,
        hidden_width: int = 16,
        seed: int = 0,
    ):
        self.task = task
        self.spec = spec
        self.fitness_spec = fitness_spec
        self.weight_function = weight_function
        rng = np.random.default_rng(seed)
        template = BlockNet.init(
            num_blocks, task.feature_dim, hidden_width, task.num_source_classes, rng
        )
        self.pretrained = pretrain(template, task, spec, seed)
        subset = stratified_subset(task.train_y, fitness_spec.data_fraction, rng)
        plan = stratified_folds(task.train_y[subset], fitness_spec.num_folds, rng)
        self.fold_indices = [subset[f] for f in plan.folds]

    @property
    def num_blocks(self) -> int:
        return self.pretrained.num_blocks

    def __call__(self, genome: Genome, ctx: EvalContext) -> float:
        cfg = decode(genome, self.weight_function, self.spec.base_lr)
        idx = self.fold_indices[ctx.fold_index % len(self.fold_indices)]
        accs, losses = [], []
        try:
            for s in ctx.seed_list:
                r = finetune(self.pretrained, cfg, self.task, self.spec, s, train_indices=idx)
                accs.append(r.val_accuracy)
                losses.append(r.val_loss)
        except DivergenceError as exc:
            raise EvaluationError(str(exc)) from exc
        return aggregate(accs, losses, self.fitness_spec.variant)
