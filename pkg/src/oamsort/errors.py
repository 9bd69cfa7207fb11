"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates a physical or geometric precondition."""


class FormatError(ValueError):
    """A file or configuration does not conform to its documented format."""


class UnreachableThresholdError(ValueError):
    """The requested confidence cannot be reached with the given per-shot statistics."""
