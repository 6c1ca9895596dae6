"""The BioTune generational loop.

Each generation refines the elite individuals with single-gene perturbations
kept only on improvement, then fills the rest of the population with
offspring produced by rank-weighted parent selection from a mating pool,
momentum-carrying crossover, extinction-scaled mutation, and an adoption
pull toward the parents' mean and an elite prototype. Individuals carry a
momentum vector recording their accumulated gene displacement; crossover
blends the parents' momenta into the offspring so search directions are
inherited.

Fitness is minimized. Populations are kept sorted ascending by fitness, so
index 0 is always the incumbent best. Extinction factors grade individuals
from 0 (best) to 1 (worst) and scale how aggressively their offspring
mutate.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AbortedRunError, EvaluationError, PairingError
from .fitness import EvalContext
from .genome import Genome, clip01, random_genome

__all__ = [
    "Individual",
    "Population",
    "EvolutionParams",
    "SearchResult",
    "Evaluator",
    "initialize_population",
    "extinction_factors",
    "exploit_elite",
    "crossover",
    "mutation_rate",
    "mutate",
    "adopt",
    "select_parents",
    "step_generation",
    "run",
]

log = logging.getLogger("biotune.evolution")

Evaluator = Callable[[Genome, EvalContext], float]


@dataclass
class Individual:
    """A genome plus its momentum vector, fitness, and extinction factor."""

    genome: Genome
    momentum: np.ndarray
    fitness: float | None = None
    extinction: float = float("nan")

    def __post_init__(self):
        self.momentum = np.asarray(self.momentum, dtype=np.float64)
        if self.momentum.shape != self.genome.genes.shape:
            raise ValueError("momentum must have one entry per gene")

    def copy(self) -> "Individual":
        return Individual(self.genome, self.momentum.copy(), self.fitness, self.extinction)


@dataclass
class Population:
    """Members sorted ascending by fitness; index 0 is the incumbent best."""

    members: list[Individual]
    generation: int = 0

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def best(self) -> Individual:
        return self.members[0]

    def fitnesses(self) -> np.ndarray:
        return np.array([m.fitness for m in self.members], dtype=np.float64)


@dataclass(frozen=True)
class EvolutionParams:
    pop_size: int = 10
    elites: int = 3
    max_generations: int = 10
    seeds_per_eval: int = 3
    perturbation: float = 0.25
    stall_generations: int = 3
    convergence_eps: float = 1e-4

    def __post_init__(self):
        if self.pop_size < 1:
            raise ValueError("pop_size must be positive")
        if not (0 <= self.elites <= self.pop_size):
            raise ValueError("elites must satisfy 0 <= elites <= pop_size")
        if self.max_generations < 1:
            raise ValueError("max_generations must be positive")
        if self.seeds_per_eval < 1:
            raise ValueError("seeds_per_eval must be positive")
        if self.perturbation <= 0.0:
            raise ValueError("perturbation must be positive")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be positive")


@dataclass
class SearchResult:
    """Best individual ever observed plus the full audit trail of a search."""

    best: Individual
    best_history: list[float]
    mean_history: list[float]
    evaluation_history: list[int]
    all_evaluated: list[tuple[int, Individual]]
    final_population: Population
    generations: int
    terminated_by: str
    wall_times: list[float] = field(default_factory=list)


def initialize_population(
    params: EvolutionParams,
    num_blocks: int,
    rng: np.random.Generator,
    initial_genomes: Sequence[Genome] | None = None,
) -> Population:
    """Fresh unevaluated population: uniform-random genomes, zero momentum.

    initial_genomes overrides the random draw so several optimizers can be
    started from an identical population.
    """
    if initial_genomes is not None:
        if len(initial_genomes) != params.pop_size:
            raise ValueError("initial_genomes must match pop_size")
        genomes = list(initial_genomes)
    else:
        genomes = [random_genome(num_blocks, rng) for _ in range(params.pop_size)]
    members = [Individual(g, np.zeros(len(g))) for g in genomes]
    return Population(members=members, generation=0)


def extinction_factors(pop: Population) -> np.ndarray:
    """Rank-and-fitness blend in [0, 1]: 0 for the best member, 1 for the worst.

    Requires the population sorted ascending by fitness. When every member
    has fitness 0 the formula degenerates; the pure rank ramp s/(N-1) is
    used instead. Factors are stored on the individuals as well.
    """
    fits = pop.fitnesses()
    n = pop.size
    if n == 1:
        zetas = np.zeros(1)
    else:
        ranks = np.arange(n, dtype=np.float64)
        f_min, f_max = float(fits[0]), float(fits[-1])
        if f_max == 0.0:
            zetas = ranks / (n - 1)
        else:
            zetas = (fits + f_min * (ranks / (n - 1) - 1.0)) / f_max
    for ind, z in zip(pop.members, zetas):
        ind.extinction = float(z)
    return zetas


def _exploit_elite_audited(
    ind: Individual,
    delta: float,
    evaluator: Evaluator,
    ctx: EvalContext,
    rng: np.random.Generator,
) -> tuple[Individual, Individual | None, bool]:
    """exploit_elite plus audit info: (kept individual, evaluated candidate, eval failed)."""
    genes = ind.genome.genes.copy()
    idx = int(rng.integers(genes.size))
    draw = float(rng.uniform(-1.0, 1.0))
    moved = float(np.clip(genes[idx] + draw * delta, 0.0, 1.0))
    momentum = ind.momentum.copy()
    momentum[idx] += moved - genes[idx]
    genes[idx] = moved
    candidate = Individual(Genome(genes), momentum, None, ind.extinction)
    try:
        candidate.fitness = float(evaluator(candidate.genome, ctx))
    except EvaluationError as exc:
        log.warning("elite exploitation evaluation failed, keeping original: %s", exc)
        return ind, None, True
    if ind.fitness is None or candidate.fitness < ind.fitness:
        return candidate, candidate, False
    return ind, candidate, False


def exploit_elite(
    ind: Individual,
    delta: float,
    evaluator: Evaluator,
    ctx: EvalContext,
    rng: np.random.Generator,
) -> Individual:
    """Perturb one random gene by U[-1,1]*delta; keep the change only if fitness improves."""
    kept, _, _ = _exploit_elite_audited(ind, delta, evaluator, ctx, rng)
    return kept


def crossover(pa: Individual, pb: Individual, rng: np.random.Generator) -> Individual:
    """Blend two parents: random momentum combination plus per-gene interpolation.

    The offspring's momentum is a random linear combination of the parents'
    momenta and is added into the interpolated genes in the same step; only
    the genes are clipped back into [0, 1], never the momentum.
    """
    if len(pa.genome) != len(pb.genome):
        raise PairingError("parents must share the genome length")
    n = len(pa.genome)
    momentum = rng.random(n) * pa.momentum + rng.random(n) * pb.momentum
    alpha = rng.random(n)
    a, b = pa.genome.genes, pb.genome.genes
    genes = clip01(b + alpha * (a - b) + momentum)
    return Individual(Genome(genes), momentum)


def mutation_rate(parent_extinctions: tuple[float, float], num_genes: int) -> float:
    """Per-gene mutation probability grown from the parents' mean extinction factor."""
    if num_genes < 2:
        raise ValueError("num_genes must be at least 2")
    zbar = (parent_extinctions[0] + parent_extinctions[1]) / 2.0
    return (zbar * (num_genes - 1) + 1.0) / num_genes


def mutate(ind: Individual, zbar: float, xi: float, rng: np.random.Generator) -> Individual:
    """Mutate each gene with probability xi by a U[-1,1] step scaled by zbar."""
    genes = ind.genome.genes
    hits = rng.random(genes.size) < xi
    draws = rng.uniform(-1.0, 1.0, genes.size)
    proposed = clip01(genes + zbar * draws)
    new_genes = np.where(hits, proposed, genes)
    momentum = ind.momentum + (new_genes - genes)
    return Individual(Genome(new_genes), momentum, None, ind.extinction)


def adopt(
    ind: Individual,
    pa: Individual,
    pb: Individual,
    proto: Individual,
    rng: np.random.Generator,
) -> Individual:
    """Pull each gene toward a random mix of the parents' mean and a prototype."""
    n = len(ind.genome)
    if len(pa.genome) != n or len(pb.genome) != n or len(proto.genome) != n:
        raise PairingError("adoption requires equal genome lengths")
    genes = ind.genome.genes
    mid = (pa.genome.genes + pb.genome.genes) / 2.0
    u1 = rng.random(n)
    u2 = rng.random(n)
    alpha = rng.random(n)
    toward_parents = u1 * (mid - genes)
    toward_proto = u2 * (proto.genome.genes - genes)
    step = toward_proto + alpha * (toward_parents - toward_proto)
    new_genes = clip01(genes + step)
    momentum = ind.momentum + (new_genes - genes)
    return Individual(Genome(new_genes), momentum, None, ind.extinction)


def select_parents(
    pool: list[Individual],
    elites: Sequence[Individual],
    rng: np.random.Generator,
) -> tuple[Individual, Individual, Individual] | None:
    """Draw two rank-weighted parents (removed from the pool) plus an elite prototype.

    The pool must be sorted ascending by fitness. Returns None once fewer
    than two individuals remain, which callers treat as the signal to fall
    back to fresh random individuals.
    """
    if len(pool) < 2:
        return None

    def draw() -> Individual:
        k = len(pool)
        weights = np.arange(k, 0, -1, dtype=np.float64)
        idx = int(rng.choice(k, p=weights / weights.sum()))
        return pool.pop(idx)

    pa = draw()
    pb = draw()
    proto = elites[int(rng.integers(len(elites)))]
    return pa, pb, proto


def _evaluate_into(
    individuals: list[Individual],
    evaluator: Evaluator,
    ctx: EvalContext,
    workers: int,
) -> int:
    """Assign fitness to each individual; failures get worst fitness 1.0. Returns #failures."""

    def one(ind: Individual) -> float | None:
        try:
            return float(evaluator(ind.genome, ctx))
        except EvaluationError as exc:
            log.warning("evaluation failed, assigning worst fitness: %s", exc)
            return None

    if workers > 1 and len(individuals) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, individuals))
    else:
        results = [one(ind) for ind in individuals]
    failures = 0
    for ind, fit in zip(individuals, results):
        if fit is None:
            failures += 1
            ind.fitness = 1.0
        else:
            ind.fitness = fit
    return failures


@dataclass
class _GenerationAudit:
    evaluated: list[Individual] = field(default_factory=list)
    attempts: int = 0
    failures: int = 0


def step_generation(
    pop: Population,
    params: EvolutionParams,
    evaluator: Evaluator,
    ctx: EvalContext,
    rng: np.random.Generator,
    workers: int = 1,
    audit: _GenerationAudit | None = None,
) -> Population:
    """Advance one generation: exploit elites, breed offspring, merge, sort, re-grade.

    Offspring come from a mating pool snapshot of the whole population;
    reproduction removes parents from the pool, and once it is exhausted the
    remaining slots are filled with fresh random individuals. An evaluation
    failure maps to worst fitness 1.0; a generation whose evaluations all
    fail aborts the run.
    """
    audit = audit if audit is not None else _GenerationAudit()
    num_blocks = pop.best.genome.num_blocks
    genome_len = num_blocks + 1

    elites: list[Individual] = []
    for ind in pop.members[: params.elites]:
        kept, candidate, failed = _exploit_elite_audited(
            ind, params.perturbation, evaluator, ctx, rng
        )
        audit.attempts += 1
        if failed:
            audit.failures += 1
        if candidate is not None:
            audit.evaluated.append(candidate)
        elites.append(kept)

    prototype_set: Sequence[Individual] = elites if elites else pop.members[:1]
    pool = list(pop.members)
    offspring: list[Individual] = []
    for _ in range(params.pop_size - params.elites):
        picked = select_parents(pool, prototype_set, rng)
        if picked is None:
            child = Individual(random_genome(num_blocks, rng), np.zeros(genome_len))
        else:
            pa, pb, proto = picked
            child = crossover(pa, pb, rng)
            zbar = (pa.extinction + pb.extinction) / 2.0
            xi = mutation_rate((pa.extinction, pb.extinction), genome_len)
            child = mutate(child, zbar, xi, rng)
            child = adopt(child, pa, pb, proto, rng)
        offspring.append(child)

    failures = _evaluate_into(offspring, evaluator, ctx, workers)
    audit.attempts += len(offspring)
    audit.failures += failures
    audit.evaluated.extend(offspring)
    if audit.attempts > 0 and audit.failures >= audit.attempts:
        raise AbortedRunError(
            f"every evaluation of generation {pop.generation + 1} failed"
        )

    members = sorted(elites + offspring, key=lambda m: m.fitness)
    nxt = Population(members=members, generation=pop.generation + 1)
    extinction_factors(nxt)
    return nxt


def _default_context_factory(master_seed: int, seeds_per_eval: int, num_folds: int):
    def make(generation: int) -> EvalContext:
        ss = np.random.SeedSequence(master_seed, spawn_key=(generation,))
        seeds = tuple(int(s) for s in ss.generate_state(seeds_per_eval))
        return EvalContext(generation=generation, fold_index=generation % num_folds, seed_list=seeds)

    return make


def run(
    params: EvolutionParams,
    num_blocks: int,
    evaluator: Evaluator,
    rng: np.random.Generator | int | None = None,
    *,
    num_folds: int = 1,
    initial_genomes: Sequence[Genome] | None = None,
    workers: int = 1,
) -> SearchResult:
    """Full search: initialize, iterate generations, stop on budget or stall.

    Stops after max_generations steps, or earlier once the incumbent best
    fitness improves by less than convergence_eps over stall_generations
    consecutive generations (convergence_eps <= 0 disables the stall check).
    Identical seed, params, and a deterministic evaluator reproduce the
    result bit for bit.
    """
    rng = np.random.default_rng(rng)
    master_seed = int(rng.integers(2**63))
    make_context = _default_context_factory(master_seed, params.seeds_per_eval, num_folds)

    tick = time.monotonic()
    pop = initialize_population(params, num_blocks, rng, initial_genomes)
    ctx = make_context(0)
    failures = _evaluate_into(pop.members, evaluator, ctx, workers)
    if failures >= pop.size:
        raise AbortedRunError("every evaluation of the initial population failed")
    pop.members.sort(key=lambda m: m.fitness)
    extinction_factors(pop)

    best = pop.best.copy()
    best_history = [float(best.fitness)]
    mean_history = [float(pop.fitnesses().mean())]
    evaluation_history = [pop.size]
    all_evaluated: list[tuple[int, Individual]] = [(0, m.copy()) for m in pop.members]
    evaluations = pop.size
    terminated_by = "max_generations"
    wall_times = [time.monotonic() - tick]

    steps = 0
    for _ in range(params.max_generations):
        tick = time.monotonic()
        audit = _GenerationAudit()
        ctx = make_context(pop.generation + 1)
        pop = step_generation(pop, params, evaluator, ctx, rng, workers=workers, audit=audit)
        steps += 1
        evaluations += audit.attempts
        all_evaluated.extend((pop.generation, ind.copy()) for ind in audit.evaluated)
        if pop.best.fitness < best.fitness:
            best = pop.best.copy()
        best_history.append(float(best.fitness))
        mean_history.append(float(pop.fitnesses().mean()))
        evaluation_history.append(evaluations)
        wall_times.append(time.monotonic() - tick)
        t = len(best_history) - 1
        if (
            params.convergence_eps > 0.0
            and t >= params.stall_generations
            and abs(best_history[t] - best_history[t - params.stall_generations])
            < params.convergence_eps
        ):
            terminated_by = "stall"
            break

    return SearchResult(
        best=best,
        best_history=best_history,
        mean_history=mean_history,
        evaluation_history=evaluation_history,
        all_evaluated=all_evaluated,
        final_population=pop,
        generations=steps,
        terminated_by=terminated_by,
        wall_times=wall_times,
    )
