"""Exception hierarchy for the re-identification engine.

Every failure mode raised by the library derives from :class:`EngineError`,
so callers (notably the CLI) can map error categories to exit codes.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid or inconsistent configuration."""


class InvalidConfig(ConfigError):
    """Synthetic-data configuration violates its invariants."""


class IoError(EngineError):
    """File could not be read or written."""


class ParseError(EngineError):
    """Malformed header or data row in an embedding or checkpoint file."""


class DimensionMismatch(EngineError):
    """Vector length differs from the declared feature dimension."""


class NonFiniteValue(EngineError):
    """NaN or infinity encountered in stored data."""


class DuplicateRecord(EngineError):
    """Two records share the same (runner, recording point[, clip]) key."""


class EmptyInput(EngineError):
    """An operation requiring a non-empty collection received none."""


class MixedIdentity(EngineError):
    """Clips from different runners or recording points were pooled together."""


class InvalidSchedule(EngineError):
    """Requested clip windows cannot fit inside the footage."""


class BatchTooSmall(EngineError):
    """Train-mode forward pass needs at least two rows for batch statistics."""


class NonFiniteActivation(EngineError):
    """Forward pass produced NaN or infinity."""


class CacheMismatch(EngineError):
    """Backward pass received a cache not produced by a train-mode forward."""


class ShapeMismatch(EngineError):
    """Gradient or state tensors do not match parameter shapes."""


class InsufficientIdentities(EngineError):
    """Batch does not contain enough distinct identities to mine tuples."""


class TooFewIdentities(EngineError):
    """Fewer identities than requested folds."""


class EmptyGallery(EngineError):
    """Ranking requested against an empty gallery."""


class NoRelevantInGallery(EngineError):
    """Query identity has no match in the gallery."""


class NoQueries(EngineError):
    """Mean average precision over zero queries is undefined."""


class MissingGroundTruth(EngineError):
    """A probe lacks its ground-truth gallery entry."""


class NumericFailure(EngineError):
    """Training produced a non-finite loss."""
