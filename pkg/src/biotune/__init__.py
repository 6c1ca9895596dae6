"""BioTune: evolutionary search over block freezing and per-block learning rates.

The search encodes a fine-tuning configuration as a genome of per-block
importance genes plus an evolved freezing threshold, and optimizes it with a
hybrid evolutionary loop (elite exploitation, momentum-carrying crossover,
extinction-scaled mutation, prototype adoption). Fitness plugs in through a
single evaluator contract served by the built-in toy trainer, closed-form
synthetic landscapes, or an external process speaking the line-delimited
JSON protocol.
"""

from .errors import (
    AbortedRunError,
    BioTuneError,
    ConfigError,
    DegenerateGenomeError,
    DivergenceError,
    EvaluationError,
    InvalidModelError,
    PairingError,
    ProtocolError,
    SessionClosedError,
    SessionError,
    StratificationWarning,
)
from .evolution import EvolutionParams, Individual, Population, SearchResult, run
from .fitness import EvalContext, FitnessSpec, FitnessVariant, synthetic_landscape
from .genome import (
    FineTuneConfig,
    Genome,
    WeightFunction,
    decode,
    importance_weights,
    random_genome,
    selection_mask,
    trainable_fraction,
)

__version__ = "0.1.0"

__all__ = [
    "AbortedRunError",
    "BioTuneError",
    "ConfigError",
    "DegenerateGenomeError",
    "DivergenceError",
    "EvalContext",
    "EvaluationError",
    "EvolutionParams",
    "FineTuneConfig",
    "FitnessSpec",
    "FitnessVariant",
    "Genome",
    "Individual",
    "InvalidModelError",
    "PairingError",
    "Population",
    "ProtocolError",
    "SearchResult",
    "SessionClosedError",
    "SessionError",
    "StratificationWarning",
    "WeightFunction",
    "decode",
    "importance_weights",
    "random_genome",
    "run",
    "selection_mask",
    "synthetic_landscape",
    "trainable_fraction",
]
