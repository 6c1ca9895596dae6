"""Gene-space encoding of fine-tuning configurations.

A configuration genome carries one importance gene per model block plus a
trailing freezing-threshold gene, all in [0, 1]. Decoding produces per-block
learning-rate multipliers: a block whose importance gene does not exceed the
threshold is frozen (multiplier 0), every other block receives a multiplier
from the selected importance-weight function. Multipliers times the base
learning rate give the per-block learning rates used during fine-tuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateGenomeError, InvalidModelError

__all__ = [
    "WeightFunction",
    "Genome",
    "FineTuneConfig",
    "random_genome",
    "selection_mask",
    "importance_weights",
    "decode",
    "trainable_fraction",
]


class WeightFunction(Enum):
    """Mapping from importance gene to learning-rate multiplier for active blocks.

    EXPONENTIAL is the default: it spans multipliers in [0.1, 10], so the
    search can both boost and damp block learning rates. The other variants
    keep multipliers at or below 1.
    """

    DISCRIMINATIVE = "Discriminative"
    SCALED = "Scaled"
    NORMALIZED = "Normalized"
    EXPONENTIAL = "Exponential"

    @classmethod
    def parse(cls, name: str) -> "WeightFunction":
        for member in cls:
            if member.value.lower() == name.lower():
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown weight function {name!r}; expected one of: {valid}")


DEFAULT_WEIGHT_FUNCTION = WeightFunction.EXPONENTIAL


@dataclass(frozen=True)
class Genome:
    """Immutable gene vector: block importance genes followed by the freezing threshold."""

    genes: np.ndarray

    def __post_init__(self):
        genes = np.asarray(self.genes, dtype=np.float64)
        if genes.ndim != 1 or genes.size < 2:
            raise ValueError("genome must be a 1-D vector of at least 2 genes")
        if np.any(genes < 0.0) or np.any(genes > 1.0) or not np.all(np.isfinite(genes)):
            raise ValueError("genes must lie in [0, 1]")
        genes = genes.copy()
        genes.setflags(write=False)
        object.__setattr__(self, "genes", genes)

    @property
    def num_blocks(self) -> int:
        return self.genes.size - 1

    @property
    def block_genes(self) -> np.ndarray:
        return self.genes[:-1]

    @property
    def threshold(self) -> float:
        return float(self.genes[-1])

    def __len__(self) -> int:
        return self.genes.size


@dataclass(frozen=True)
class FineTuneConfig:
    """Decoded per-block learning-rate multipliers; a multiplier of 0 freezes the block."""

    eta: np.ndarray
    base_lr: float

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        if eta.ndim != 1 or eta.size < 1:
            raise ValueError("eta must be a 1-D vector with at least one block")
        if np.any(eta < 0.0) or not np.all(np.isfinite(eta)):
            raise ValueError("multipliers must be finite and non-negative")
        if not (self.base_lr > 0.0):
            raise ValueError("base_lr must be positive")
        eta = eta.copy()
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def num_blocks(self) -> int:
        return self.eta.size

    @property
    def block_lrs(self) -> np.ndarray:
        return self.eta * self.base_lr

    @property
    def active(self) -> np.ndarray:
        return self.eta > 0.0


def clip01(values: np.ndarray) -> np.ndarray:
    """Clip a gene array into the unit box (the post-operator repair rule)."""
    return np.clip(values, 0.0, 1.0)


def random_genome(num_blocks: int, rng: np.random.Generator) -> Genome:
    """Draw a genome of num_blocks importance genes plus a threshold, all U[0, 1]."""
    if num_blocks < 1:
        raise InvalidModelError("a model must expose at least one block")
    return Genome(rng.random(num_blocks + 1))


def selection_mask(genome: Genome) -> np.ndarray:
    """Per-block 0/1 indicator: 1 where the importance gene strictly exceeds the threshold."""
    return (genome.block_genes > genome.threshold).astype(np.float64)


def importance_weights(genome: Genome, fn: WeightFunction = DEFAULT_WEIGHT_FUNCTION) -> np.ndarray:
    """Per-block multipliers before masking.

    Raises DegenerateGenomeError for the Normalized variant when the largest
    block gene does not exceed the threshold (denominator <= 0). decode()
    handles that case silently because the mask freezes everything anyway.
    """
    nu = genome.block_genes
    if fn is WeightFunction.DISCRIMINATIVE:
        return np.ones_like(nu)
    if fn is WeightFunction.SCALED:
        top = float(nu.max())
        if top == 0.0:
            return np.zeros_like(nu)
        return nu / top
    if fn is WeightFunction.NORMALIZED:
        denom = float(nu.max()) - genome.threshold
        if denom <= 0.0:
            raise DegenerateGenomeError(
                "Normalized weights are undefined when max gene <= freezing threshold"
            )
        return np.maximum((nu - genome.threshold) / denom, 0.0)
    if fn is WeightFunction.EXPONENTIAL:
        # scalar libm pow: bit-reproducible against a straight-line reimplementation
        # (numpy's vectorized pow rounds differently by 1 ulp on some inputs)
        return np.array([10.0 ** (2.0 * (v - 0.5)) for v in nu.tolist()])
    raise ValueError(f"unhandled weight function: {fn}")


def decode(
    genome: Genome,
    fn: WeightFunction = DEFAULT_WEIGHT_FUNCTION,
    base_lr: float = 1e-3,
) -> FineTuneConfig:
    """Decode a genome into per-block multipliers: selection mask times importance weight."""
    if not (base_lr > 0.0):
        raise ValueError("base_lr must be positive")
    mask = selection_mask(genome)
    try:
        weights = importance_weights(genome, fn)
    except DegenerateGenomeError:
        # All blocks are at or below the threshold, so the mask is all zeros.
        weights = np.zeros_like(mask)
    return FineTuneConfig(eta=mask * weights, base_lr=base_lr)


def trainable_fraction(cfg: FineTuneConfig, block_param_counts) -> float:
    """Fraction of model parameters belonging to blocks the config leaves trainable."""
    counts = np.asarray(block_param_counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size != cfg.num_blocks:
        raise ValueError("block_param_counts must have one entry per block")
    if np.any(counts < 0):
        raise ValueError("parameter counts must be non-negative")
    total = int(counts.sum())
    if total == 0:
        raise InvalidModelError("model has no parameters")
    return float(counts[cfg.active].sum()) / total
