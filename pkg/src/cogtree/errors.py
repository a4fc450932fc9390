"""Exception hierarchy shared across the package.

Every error a public operation can raise lives here so callers (and the
CLI exit-code mapping) can catch by family: tree/data shape problems,
retrieval problems, backend transport problems, and training problems.
"""


class CogTreeError(Exception):
    """Base class for all package errors."""


# -- tree construction -------------------------------------------------------

class UnknownParent(CogTreeError):
    """add_child referenced a node id that is not in the tree."""


class UnknownNode(CogTreeError):
    """A node id lookup (e.g. chain extraction) failed."""


class DepthMismatch(CogTreeError):
    """Child state depth is not parent depth + 1."""


# -- retrieval ---------------------------------------------------------------

class DimensionMismatch(CogTreeError):
    """Vector dimensions disagree with each other or with the index."""


class ZeroVector(CogTreeError):
    """Cosine similarity is undefined for an all-zero vector."""


class NotEnoughExamples(CogTreeError):
    """Top-k retrieval asked for more examples than the index holds."""


class EmptyExamples(CogTreeError):
    """Prompt assembly needs at least one in-context example."""


# -- backends ----------------------------------------------------------------

class BackendUnavailable(CogTreeError):
    """Transport failure that survived the retry policy."""


class Timeout(BackendUnavailable):
    """The backend did not answer within the configured timeout."""


class MalformedResponse(CogTreeError):
    """The backend answered but the payload does not match the protocol."""


class DimensionUnknown(CogTreeError):
    """The backend cannot state its embedding dimension."""


class ContextLongerThanSequence(CogTreeError):
    """Masked generation loss got a context length beyond the sequence."""


# -- reflective scorer -------------------------------------------------------

class NonFiniteParams(CogTreeError):
    """Scorer parameters contain NaN or infinity."""


# -- trainer -----------------------------------------------------------------

class NoReplacementAvailable(CogTreeError):
    """Negative construction found no unused theory member to swap in."""


class EmptyDataset(CogTreeError):
    """Training requires at least one item."""


class DivergedLoss(CogTreeError):
    """Training loss became non-finite."""


# -- datasets / parsing ------------------------------------------------------

class ParseError(CogTreeError):
    """A line of an input file could not be parsed. Carries the line number."""

    def __init__(self, message: str, line: "int | None" = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvariantViolation(CogTreeError):
    """A parsed sample violates a dataset invariant. Carries the sample id."""

    def __init__(self, message: str, sample_id: "str | None" = None):
        super().__init__(message if sample_id is None else f"sample {sample_id}: {message}")
        self.sample_id = sample_id


class NoNegativesAvailable(CogTreeError):
    """Adversarial pairing found no candidate negative goal."""


# -- search ------------------------------------------------------------------

class ParseFailure(CogTreeError):
    """Every generated candidate at a step failed decomposition parsing."""


class NoAnswerExtracted(CogTreeError):
    """No rollout produced a parseable numeric answer."""


# -- configuration / CLI -----------------------------------------------------

class ConfigError(CogTreeError):
    """Invalid configuration value or file."""
