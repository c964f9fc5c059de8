"""Exception hierarchy shared across the package."""


class CogwlanError(Exception):
    """Base class for all package errors."""


class StructuralError(CogwlanError):
    """Shapes, dimensions or layer layouts are inconsistent."""


class ValidationError(CogwlanError):
    """A value violates its documented range or precondition."""


class ConfigError(CogwlanError):
    """Configuration file or normalization table is invalid/incomplete."""


class ConflictError(CogwlanError):
    """An entity with the same identity already exists."""


class NotFoundError(CogwlanError):
    """The referenced node or record does not exist."""


class PersistenceError(CogwlanError):
    """Journal or snapshot I/O failed; in-memory state was not changed."""


class TrainingError(CogwlanError):
    """Training diverged to non-finite weights."""
