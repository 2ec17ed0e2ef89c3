"""Exception types shared across the package."""


class SchemaError(ValueError):
    """A required column is missing or a name does not match the data."""


class ParseError(ValueError):
    """A cell could not be parsed; the message names the offending row."""


class PartitionError(ValueError):
    """Control/treated cluster sets do not partition the clusters."""


class GroupingError(ValueError):
    """A grouping violates the combined-cluster requirements."""


class IdentificationError(ValueError):
    """A (combined) cluster regression is rank deficient, so the target
    parameter is not identified within it."""


class BoundError(ValueError):
    """A size/cost guard was exceeded (factorial or exponential blowup)."""
