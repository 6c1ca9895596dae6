"""Fitness evaluation: aggregation variants, fold scheduling, synthetic landscapes.

Fitness is minimized and lives in [0, 1]. The default variant turns mean
multi-seed validation accuracy a into 1 - a; alternatives penalize seed
variance or minimize validation loss directly. Fold scheduling rotates one
stratified fold of the training data per generation so each fitness
evaluation trains on a small, representative subset.

The synthetic landscapes are deterministic closed-form stand-ins for a real
training backend; they let the search loop and the baseline optimizers be
exercised (and compared against brute force) in microseconds per call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import StratificationWarning
from .genome import Genome, WeightFunction, decode

__all__ = [
    "FitnessVariant",
    "FitnessSpec",
    "EvalContext",
    "FoldPlan",
    "aggregate",
    "evaluate",
    "fold_schedule",
    "stratified_folds",
    "stratified_subset",
    "LANDSCAPE_KINDS",
    "synthetic_landscape",
    "landscape_evaluator",
]


class FitnessVariant(Enum):
    ACC = "Acc"
    ACC_STD = "AccStd"
    LOSS = "Loss"

    @classmethod
    def parse(cls, name: str) -> "FitnessVariant":
        for member in cls:
            if member.value.lower() == name.lower():
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown fitness variant {name!r}; expected one of: {valid}")


@dataclass(frozen=True)
class FitnessSpec:
    """How per-seed backend measurements are turned into one fitness value."""

    variant: FitnessVariant = FitnessVariant.ACC
    seeds_per_eval: int = 3
    data_fraction: float = 1.0
    num_folds: int = 3

    def __post_init__(self):
        if self.seeds_per_eval < 1:
            raise ValueError("seeds_per_eval must be positive")
        if not (0.0 < self.data_fraction <= 1.0):
            raise ValueError("data_fraction must lie in (0, 1]")
        if self.num_folds < 1:
            raise ValueError("num_folds must be positive")


@dataclass(frozen=True)
class EvalContext:
    """Per-evaluation bookkeeping handed to fitness backends."""

    generation: int
    fold_index: int
    seed_list: tuple[int, ...]

    def __post_init__(self):
        if self.generation < 0:
            raise ValueError("generation must be non-negative")
        if self.fold_index < 0:
            raise ValueError("fold_index must be non-negative")
        object.__setattr__(self, "seed_list", tuple(int(s) for s in self.seed_list))


def aggregate(accuracies: Sequence[float], losses: Sequence[float], variant: FitnessVariant) -> float:
    """Collapse per-seed validation measurements into one fitness in [0, 1].

    AccStd uses the population standard deviation over seeds. The Loss
    variant minimizes mean validation loss, capped at 1 to stay on the same
    scale as the accuracy-based variants.
    """
    acc = np.asarray(accuracies, dtype=np.float64)
    if variant is FitnessVariant.ACC:
        value = 1.0 - float(acc.mean())
    elif variant is FitnessVariant.ACC_STD:
        value = 1.0 - float(acc.mean()) + float(acc.std())
    elif variant is FitnessVariant.LOSS:
        value = float(np.asarray(losses, dtype=np.float64).mean())
    else:
        raise ValueError(f"unhandled fitness variant: {variant}")
    return float(min(max(value, 0.0), 1.0))


def evaluate(
    genome: Genome,
    ctx: EvalContext,
    backend: Callable[[Genome, EvalContext], tuple[Sequence[float], Sequence[float]]],
    variant: FitnessVariant = FitnessVariant.ACC,
) -> float:
    """Run a measurement backend and aggregate its per-seed results into fitness."""
    accuracies, losses = backend(genome, ctx)
    return aggregate(accuracies, losses, variant)


def fold_schedule(generation: int, num_folds: int) -> int:
    """Which stratified fold evaluates generation g: plain rotation g mod F."""
    if num_folds < 1:
        raise ValueError("num_folds must be positive")
    return generation % num_folds


@dataclass
class FoldPlan:
    """Disjoint, class-balanced index folds over a label vector."""

    folds: list[np.ndarray]
    class_histograms: list[dict[int, int]] = field(default_factory=list)

    @property
    def num_folds(self) -> int:
        return len(self.folds)


def stratified_folds(labels, num_folds: int, rng: np.random.Generator) -> FoldPlan:
    """Split indices into num_folds folds with per-class counts balanced within one.

    A class with fewer samples than folds cannot appear in every fold; its
    samples are dealt round-robin and a StratificationWarning is emitted.
    """
    labels = np.asarray(labels)
    if num_folds < 1:
        raise ValueError("num_folds must be positive")
    folds: list[list[int]] = [[] for _ in range(num_folds)]
    offset = 0  # rotates the dealing start so fold totals stay balanced
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < num_folds:
            warnings.warn(
                f"class {cls!r} has {idx.size} samples for {num_folds} folds; round-robining",
                StratificationWarning,
                stacklevel=2,
            )
        perm = rng.permutation(idx)
        for j, sample in enumerate(perm):
            folds[(j + offset) % num_folds].append(int(sample))
        offset = (offset + idx.size) % num_folds
    fold_arrays = [np.array(sorted(f), dtype=np.int64) for f in folds]
    histograms = [
        {int(c): int(n) for c, n in zip(*np.unique(labels[f], return_counts=True))}
        for f in fold_arrays
    ]
    return FoldPlan(folds=fold_arrays, class_histograms=histograms)


def stratified_subset(labels, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Class-proportional random subset of indices; at least one sample per class."""
    labels = np.asarray(labels)
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return np.arange(labels.size, dtype=np.int64)
    picked: list[int] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        take = max(1, int(round(idx.size * fraction)))
        picked.extend(int(i) for i in rng.permutation(idx)[:take])
    return np.array(sorted(picked), dtype=np.int64)


# ---------------------------------------------------------------------------
# Synthetic fitness landscapes
# ---------------------------------------------------------------------------

LANDSCAPE_KINDS = ("sphere-on-eta", "block-importance", "deceptive-threshold")

# sphere-on-eta: squared distance of decoded multipliers to a fixed target
# pattern (early blocks frozen, late blocks at multiplier 1), normalized by
# the worst attainable distance so values stay in [0, 1].
_SPHERE_TARGET_ACTIVE = 1.0

# block-importance: only the later half of the blocks carries useful target
# features; activating them near a preferred multiplier earns credit,
# activating useless blocks costs some of it.
_USEFUL_BASE_CREDIT = 0.7
_USEFUL_LR_CREDIT = 0.3
_PREFERRED_MULTIPLIER = 2.0
_LR_QUALITY_WIDTH = 0.5
_WASTE_PENALTY = 0.5

# deceptive-threshold: a narrow high-reward band of threshold values next to
# a broad mediocre one, so the threshold gene has to escape a local optimum.
# The activation-credit ramp keeps a gradient everywhere in the box.
_TRUE_BAND_CENTER = 0.7
_TRUE_BAND_WIDTH = 0.18
_DECOY_CENTER = 0.15
_DECOY_WIDTH = 0.5
_DECOY_REWARD = 0.45
_BAND_WEIGHT = 0.85
_ACTIVE_WEIGHT = 0.15


def _sphere_target(num_blocks: int) -> np.ndarray:
    target = np.zeros(num_blocks)
    target[num_blocks // 2 :] = _SPHERE_TARGET_ACTIVE
    return target


def _sphere_on_eta(genome: Genome) -> float:
    eta = decode(genome, WeightFunction.EXPONENTIAL, base_lr=1.0).eta
    target = _sphere_target(genome.num_blocks)
    worst = np.maximum(target, 10.0 - target) ** 2
    value = float(((eta - target) ** 2).sum() / worst.sum())
    return min(max(value, 0.0), 1.0)


def _block_importance(genome: Genome) -> float:
    cfg = decode(genome, WeightFunction.EXPONENTIAL, base_lr=1.0)
    mask = cfg.active.astype(np.float64)
    num_blocks = genome.num_blocks
    useful = np.zeros(num_blocks, dtype=bool)
    useful[num_blocks // 2 :] = True

    log_ratio = np.zeros(num_blocks)
    active = cfg.eta > 0.0
    log_ratio[active] = np.log10(cfg.eta[active] / _PREFERRED_MULTIPLIER)
    lr_quality = np.exp(-(log_ratio**2) / _LR_QUALITY_WIDTH)

    gain = float(
        (mask[useful] * (_USEFUL_BASE_CREDIT + _USEFUL_LR_CREDIT * lr_quality[useful])).sum()
    ) / max(int(useful.sum()), 1)
    waste = _WASTE_PENALTY * float(mask[~useful].sum()) / max(int((~useful).sum()), 1)
    return min(max(1.0 - (gain - waste), 0.0), 1.0)


def _deceptive_threshold(genome: Genome) -> float:
    eps = genome.threshold
    true_band = float(np.exp(-(((eps - _TRUE_BAND_CENTER) / _TRUE_BAND_WIDTH) ** 2)))
    decoy = _DECOY_REWARD * float(np.exp(-(((eps - _DECOY_CENTER) / _DECOY_WIDTH) ** 2)))
    band = max(true_band, decoy)
    credit = np.clip((genome.block_genes - eps) + 0.5, 0.0, 1.0)
    value = 1.0 - (_BAND_WEIGHT * band + _ACTIVE_WEIGHT * float(credit.mean()))
    return min(max(value, 0.0), 1.0)


_LANDSCAPES: dict[str, Callable[[Genome], float]] = {
    "sphere-on-eta": _sphere_on_eta,
    "block-importance": _block_importance,
    "deceptive-threshold": _deceptive_threshold,
}


def synthetic_landscape(kind: str, genome: Genome) -> float:
    """Deterministic closed-form fitness in [0, 1]; same genome, same value, bit-exact."""
    try:
        fn = _LANDSCAPES[kind]
    except KeyError:
        valid = ", ".join(LANDSCAPE_KINDS)
        raise ValueError(f"unknown landscape {kind!r}; expected one of: {valid}") from None
    return fn(genome)


def landscape_evaluator(kind: str) -> Callable[[Genome, EvalContext], float]:
    """Wrap a landscape as a search evaluator (the context is irrelevant to it)."""
    if kind not in _LANDSCAPES:
        valid = ", ".join(LANDSCAPE_KINDS)
        raise ValueError(f"unknown landscape {kind!r}; expected one of: {valid}")

    def evaluator(genome: Genome, ctx: EvalContext) -> float:
        return synthetic_landscape(kind, genome)

    return evaluator
