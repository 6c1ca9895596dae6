"""Convergence comparison: main search vs GA, DE variants, and PSO.

Every optimizer starts from the same random population and spends the same
evaluation budget (ten members per generation), so the best-fitness columns
are directly comparable per generation and per evaluation.
"""

import numpy as np

from biotune.baseline_optimizers import OPTIMIZER_KINDS, OptimizerSpec, run_optimizer
from biotune.evolution import EvolutionParams, run
from biotune.fitness import landscape_evaluator
from biotune.genome import Genome

NUM_BLOCKS = 6
GENERATIONS = 10  # counting the shared initial population as generation 0
SEED = 0

evaluator = landscape_evaluator("block-importance")
rng = np.random.default_rng(SEED)
shared = [Genome(rng.random(NUM_BLOCKS + 1)) for _ in range(10)]

histories = {}
result = run(
    EvolutionParams(max_generations=GENERATIONS - 1, convergence_eps=0.0),
    NUM_BLOCKS,
    evaluator,
    rng=SEED,
    initial_genomes=shared,
)
histories["BioTune"] = result.best_history

for kind in OPTIMIZER_KINDS:
    spec = OptimizerSpec(kind=kind, pop_size=10, max_generations=GENERATIONS - 1)
    r = run_optimizer(spec, NUM_BLOCKS, evaluator, rng=SEED, initial_genomes=shared)
    histories[kind] = r.best_history

names = list(histories)
print("generation  " + "  ".join(f"{n:>9s}" for n in names))
for g in range(GENERATIONS):
    print(f"{g:10d}  " + "  ".join(f"{histories[n][g]:9.4f}" for n in names))
print()
print("(identical generation-0 rows are the shared-initialization contract)")
