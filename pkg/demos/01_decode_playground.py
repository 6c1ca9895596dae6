"""Tour of the genome encoding: genes -> mask -> multipliers -> learning rates.

A fine-tuning configuration is a vector of per-block importance genes plus a
trailing freezing threshold. Decoding multiplies a 0/1 selection mask (gene
above threshold?) with an importance weight, giving one learning-rate
multiplier per block.
"""

import numpy as np

from biotune.genome import (
    Genome,
    WeightFunction,
    decode,
    importance_weights,
    random_genome,
    selection_mask,
    trainable_fraction,
)

rng = np.random.default_rng(0)

# Six blocks (say, five feature stages plus the classifier head).
genome = random_genome(6, rng)
print("genes          ", np.round(genome.genes, 3))
print("block genes    ", np.round(genome.block_genes, 3))
print("threshold      ", round(genome.threshold, 3))
print("selection mask ", selection_mask(genome).astype(int))
print()

# The four importance-weight functions map genes to multipliers differently.
for fn in WeightFunction:
    cfg = decode(genome, fn, base_lr=1e-3)
    print(f"{fn.value:15s} eta={np.round(cfg.eta, 3)}")
print()

# Exponential spans [0.1, 10]: gene 0.5 keeps the base learning rate,
# gene 1.0 multiplies it by ten, gene 0.0 divides it by ten.
probe = Genome(np.array([0.0, 0.5, 1.0, 0.0]))
print("exponential endpoints:", importance_weights(probe, WeightFunction.EXPONENTIAL))

# Frozen blocks drop their parameters from the trainable count.
cfg = decode(genome, WeightFunction.EXPONENTIAL, base_lr=1e-3)
counts = [336, 272, 272, 272, 272, 68]  # parameters per block of the toy net
print("block learning rates:", np.format_float_scientific(cfg.block_lrs.max(), 2),
      "max,", (cfg.eta == 0).sum(), "blocks frozen")
print("trainable fraction  :", round(trainable_fraction(cfg, counts), 3))
