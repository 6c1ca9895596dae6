"""Driving the search through the external-evaluator wire protocol.

The host spawns a child process and exchanges newline-delimited JSON over
its stdin/stdout: hello/ready handshake, then evaluate -> fitness pairs. Any
training stack can serve fitness this way; here we use the scripted echo
evaluator from the test fixtures (fitness = 1 - mean of the genes), and the
bundled TypeScript reference client when it has been built
(`cd evaluator-client && npm run build`).
"""

import sys
from pathlib import Path

import numpy as np

from biotune.evolution import EvolutionParams, run
from biotune.extproto import ExternalEvaluator

repo = Path(__file__).resolve().parents[1]
echo = [sys.executable, str(repo / "tests" / "fixtures" / "echo_evaluator.py")]
node_client = repo / "evaluator-client" / "dist" / "main.js"

commands = {"echo fixture": echo}
if node_client.exists():
    commands["reference client"] = ["node", str(node_client)]

for label, command in commands.items():
    with ExternalEvaluator(command, num_blocks=6) as evaluator:
        result = run(
            EvolutionParams(convergence_eps=0.0), 6, evaluator, rng=1, num_folds=3
        )
    print(f"{label}: {' '.join(map(str, command))}")
    print(f"  generation 0 best {result.best_history[0]:.4f}"
          f" -> final best {result.best_history[-1]:.4f}"
          f" over {result.generations} generations")
    print(f"  best genome {np.round(result.best.genome.genes, 3)}")
    print()
