"""Exception hierarchy shared by every module of the package."""


class GMError(Exception):
    """Base class for all errors raised by gmelim."""


class ModelMismatchError(GMError):
    """Factors or queries refer to variables that do not agree with the model."""


class DomainFlagError(GMError):
    """Log-domain and linear-domain tables were mixed in one operation."""


class ScopeError(GMError):
    """A variable was expected in a factor scope and is missing (or duplicated)."""


class EvidenceError(GMError):
    """An observed value is out of range for its variable."""


class OracleTooLargeError(GMError):
    """The brute-force enumeration would exceed its state-space cap."""


class OrderingError(GMError):
    """An elimination ordering is not a permutation of the expected vertex set."""


class CapacityError(GMError):
    """An intermediate table would exceed the configured memory cap."""

    def __init__(self, message, neighborhood_size=None):
        super().__init__(message)
        self.neighborhood_size = neighborhood_size


class StructureError(GMError):
    """A tree decomposition or belief structure is malformed."""


class AssignmentError(GMError):
    """Some factor scope is not contained in any cluster of a decomposition."""


class QueryError(GMError):
    """A marginal query overlaps the evidence or is empty."""


class InconsistentEvidenceError(GMError):
    """The evidence has zero probability under the model (Z = 0)."""


class NotATreeError(GMError):
    """A tree-only algorithm received a graph with a cycle."""


class ArityError(GMError):
    """A pairwise-only algorithm received a factor with more than two variables."""


class ReparametrizationError(GMError):
    """Division by a zero marginal with a nonzero numerator."""


class ParameterError(GMError):
    """Coupled-HMM parameter tables have inconsistent dimensions or values."""


class ImpossibleObservationError(GMError):
    """The observation sequence has zero likelihood under the HMM."""


class ParseError(GMError):
    """A model, evidence, or parameter file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(ParseError):
    """A parsed table holds a value outside the allowed domain (e.g. negative)."""
