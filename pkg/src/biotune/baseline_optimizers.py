"""Reference population optimizers over the same genome/fitness interface.

Textbook formulations of a genetic algorithm, four differential-evolution
variants, and global-best particle swarm optimization, all searching the
same [0, 1] gene box and consuming the same evaluator contract as the main
search. They exist for convergence comparisons: every optimizer can be
started from an identical injected population and spends the same number of
evaluations per generation (one per member), so best-fitness trajectories
are comparable both per generation and per cumulative evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .evolution import Individual, Population, SearchResult, _default_context_factory
from .fitness import EvalContext
from .genome import Genome

__all__ = ["OPTIMIZER_KINDS", "OptimizerSpec", "run_optimizer"]

OPTIMIZER_KINDS = ("GA", "DE-rand-1", "DE-best-1", "DE-rand-2", "DE-best-2", "PSO")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    pop_size: int = 10
    max_generations: int = 10
    seeds_per_eval: int = 3
    # GA
    crossover_prob: float = 0.9
    mutation_prob: float = 0.15
    mutation_sigma: float = 0.1
    # DE
    diff_weight: float = 0.8
    crossover_rate: float = 0.9
    # PSO
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    velocity_clamp: float = 0.5

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            valid = ", ".join(OPTIMIZER_KINDS)
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of: {valid}")
        if self.pop_size < 5:
            raise ValueError("pop_size must be at least 5 (DE variants draw 4 distinct mates)")
        if self.max_generations < 0:
            raise ValueError("max_generations must be non-negative")
        for name in ("crossover_prob", "mutation_prob", "crossover_rate"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (0.0 < self.diff_weight <= 2.0):
            raise ValueError("diff_weight must lie in (0, 2]")


def _evaluate_rows(rows: np.ndarray, evaluator, ctx: EvalContext) -> np.ndarray:
    fits = np.empty(rows.shape[0])
    for i, row in enumerate(rows):
        try:
            fits[i] = float(evaluator(Genome(row), ctx))
        except EvaluationError:
            fits[i] = 1.0
    return fits


class _Trace:
    """Shared per-generation bookkeeping for all optimizer kinds."""

    def __init__(self):
        self.best_history: list[float] = []
        self.mean_history: list[float] = []
        self.evaluation_history: list[int] = []
        self.all_evaluated: list[tuple[int, Individual]] = []
        self.wall_times: list[float] = []
        self.evaluations = 0
        self.best_row: np.ndarray | None = None
        self.best_fit = np.inf
        self._tick = time.monotonic()

    def record(self, generation: int, rows: np.ndarray, fits: np.ndarray):
        self.evaluations += rows.shape[0]
        for row, fit in zip(rows, fits):
            self.all_evaluated.append(
                (generation, Individual(Genome(row), np.zeros(row.size), float(fit)))
            )
        gen_best = int(fits.argmin())
        if fits[gen_best] < self.best_fit:
            self.best_fit = float(fits[gen_best])
            self.best_row = rows[gen_best].copy()
        self.best_history.append(self.best_fit)
        self.mean_history.append(float(fits.mean()))
        self.evaluation_history.append(self.evaluations)
        now = time.monotonic()
        self.wall_times.append(now - self._tick)
        self._tick = now

    def result(self, rows: np.ndarray, fits: np.ndarray, generations: int) -> SearchResult:
        order = np.argsort(fits, kind="stable")
        members = [
            Individual(Genome(rows[i]), np.zeros(rows.shape[1]), float(fits[i])) for i in order
        ]
        return SearchResult(
            best=Individual(Genome(self.best_row), np.zeros(self.best_row.size), self.best_fit),
            best_history=self.best_history,
            mean_history=self.mean_history,
            evaluation_history=self.evaluation_history,
            all_evaluated=self.all_evaluated,
            final_population=Population(members, generations),
            generations=generations,
            terminated_by="max_generations",
            wall_times=self.wall_times,
        )


def run_optimizer(
    spec: OptimizerSpec,
    num_blocks: int,
    evaluator,
    rng: np.random.Generator | int | None = None,
    *,
    num_folds: int = 1,
    initial_genomes=None,
) -> SearchResult:
    """Run one reference optimizer; same result shape as the main search.

    initial_genomes injects a shared starting population so several
    optimizers can be compared from identical generation-0 state.
    """
    rng = np.random.default_rng(rng)
    master_seed = int(rng.integers(2**63))
    make_context = _default_context_factory(master_seed, spec.seeds_per_eval, num_folds)

    dim = num_blocks + 1
    if initial_genomes is not None:
        if len(initial_genomes) != spec.pop_size:
            raise ValueError("initial_genomes must match pop_size")
        rows = np.stack([g.genes for g in initial_genomes])
    else:
        rows = rng.random((spec.pop_size, dim))
    fits = _evaluate_rows(rows, evaluator, make_context(0))
    trace = _Trace()
    trace.record(0, rows, fits)

    step = {
        "GA": _step_ga,
        "DE-rand-1": _step_de,
        "DE-best-1": _step_de,
        "DE-rand-2": _step_de,
        "DE-best-2": _step_de,
        "PSO": _step_pso,
    }[spec.kind]

    state: dict = {}
    for gen in range(1, spec.max_generations + 1):
        ctx = make_context(gen)
        rows, fits = step(spec, rows, fits, evaluator, ctx, rng, state)
        trace.record(gen, rows, fits)
    return trace.result(rows, fits, spec.max_generations)


def _step_ga(spec, rows, fits, evaluator, ctx, rng, state):
    """Tournament selection (size 2), per-gene blend crossover, Gaussian mutation."""
    n, dim = rows.shape

    def tournament() -> np.ndarray:
        i, j = rng.integers(n, size=2)
        return rows[i] if fits[i] <= fits[j] else rows[j]

    children = np.empty_like(rows)
    for k in range(n):
        p1, p2 = tournament(), tournament()
        if rng.random() < spec.crossover_prob:
            blend = rng.random(dim)
            child = p2 + blend * (p1 - p2)
        else:
            child = p1.copy()
        hits = rng.random(dim) < spec.mutation_prob
        child = child + hits * rng.normal(0.0, spec.mutation_sigma, dim)
        children[k] = np.clip(child, 0.0, 1.0)
    child_fits = _evaluate_rows(children, evaluator, ctx)
    return children, child_fits


def _step_de(spec, rows, fits, evaluator, ctx, rng, state):
    """Differential evolution with binomial crossover and greedy selection."""
    n, dim = rows.shape
    best = rows[int(fits.argmin())]
    needs = {"DE-rand-1": 3, "DE-best-1": 2, "DE-rand-2": 5, "DE-best-2": 4}[spec.kind]
    f = spec.diff_weight

    trials = np.empty_like(rows)
    for i in range(n):
        pool = np.delete(np.arange(n), i)
        r = rows[rng.choice(pool, size=needs, replace=False)]
        if spec.kind == "DE-rand-1":
            mutant = r[0] + f * (r[1] - r[2])
        elif spec.kind == "DE-best-1":
            mutant = best + f * (r[0] - r[1])
        elif spec.kind == "DE-rand-2":
            mutant = r[0] + f * (r[1] - r[2]) + f * (r[3] - r[4])
        else:  # DE-best-2
            mutant = best + f * (r[0] - r[1]) + f * (r[2] - r[3])
        cross = rng.random(dim) < spec.crossover_rate
        cross[int(rng.integers(dim))] = True
        trials[i] = np.clip(np.where(cross, mutant, rows[i]), 0.0, 1.0)
    trial_fits = _evaluate_rows(trials, evaluator, ctx)
    keep = trial_fits < fits
    rows = np.where(keep[:, None], trials, rows)
    fits = np.where(keep, trial_fits, fits)
    return rows, fits


def _step_pso(spec, rows, fits, evaluator, ctx, rng, state):
    """Global-best PSO with a velocity clamp; particles start at rest."""
    n, dim = rows.shape
    if "velocity" not in state:
        state["velocity"] = np.zeros_like(rows)
        state["pbest"] = rows.copy()
        state["pbest_fit"] = fits.copy()
    vel, pbest, pbest_fit = state["velocity"], state["pbest"], state["pbest_fit"]
    gbest = pbest[int(pbest_fit.argmin())]

    r1 = rng.random((n, dim))
    r2 = rng.random((n, dim))
    vel[:] = (
        spec.inertia * vel
        + spec.cognitive * r1 * (pbest - rows)
        + spec.social * r2 * (gbest - rows)
    )
    np.clip(vel, -spec.velocity_clamp, spec.velocity_clamp, out=vel)
    rows = np.clip(rows + vel, 0.0, 1.0)
    fits = _evaluate_rows(rows, evaluator, ctx)
    improved = fits < pbest_fit
    pbest[improved] = rows[improved]
    pbest_fit[improved] = fits[improved]
    return rows, fits
