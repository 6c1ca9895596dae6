"""Search the closed-form landscapes and compare against brute force.

The three synthetic landscapes stand in for a real training backend: they
score a genome in microseconds, so the whole search loop can be watched in
real time and validated against an exhaustive grid sweep.
"""

import itertools

import numpy as np

from biotune.evolution import EvolutionParams, run
from biotune.fitness import LANDSCAPE_KINDS, landscape_evaluator, synthetic_landscape
from biotune.genome import Genome

RESOLUTION = 0.05
NUM_BLOCKS = 2  # three genes: two block genes plus the threshold

for kind in LANDSCAPE_KINDS:
    axis = [i * RESOLUTION for i in range(int(1 / RESOLUTION) + 1)]
    grid_best = min(
        synthetic_landscape(kind, Genome(np.array(point)))
        for point in itertools.product(axis, repeat=NUM_BLOCKS + 1)
    )

    result = run(EvolutionParams(), NUM_BLOCKS, landscape_evaluator(kind), rng=0)
    print(f"{kind}")
    print(f"  grid optimum (res {RESOLUTION})  {grid_best:.6f}")
    print(f"  search best                 {result.best.fitness:.6f}"
          f"  after {result.generations} generations ({result.terminated_by})")
    print(f"  best genome                 {np.round(result.best.genome.genes, 3)}")
    history = " -> ".join(f"{h:.3f}" for h in result.best_history)
    print(f"  incumbent history           {history}")
    print()
