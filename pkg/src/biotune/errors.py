"""Exception and warning types shared across the library."""


class BioTuneError(Exception):
    """Base class for all library errors."""


class InvalidModelError(BioTuneError):
    """The block structure is unusable (zero blocks, zero parameters, ...)."""


class DegenerateGenomeError(BioTuneError):
    """A weight function was requested on a genome it is undefined for."""


class PairingError(BioTuneError):
    """Mating between individuals with incompatible genome lengths."""


class EvaluationError(BioTuneError):
    """A single fitness evaluation failed; the search maps this to worst fitness."""


class AbortedRunError(BioTuneError):
    """Every evaluation attempt of a generation failed; the run cannot continue."""


class DivergenceError(BioTuneError):
    """Training produced a non-finite loss (usually the base learning rate is too high)."""


class SessionError(BioTuneError):
    """External evaluator session could not be established or has failed."""


class SessionClosedError(SessionError):
    """The external evaluator process exited while the session was in use."""


class ProtocolError(SessionError):
    """Malformed traffic on an external evaluator session; the session is unusable."""


class ConfigError(BioTuneError):
    """A run configuration file is invalid."""


class StratificationWarning(UserWarning):
    """A class has fewer samples than folds; its samples were round-robined."""
