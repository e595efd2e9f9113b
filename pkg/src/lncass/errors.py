"""Exception hierarchy shared across the package."""


class LncassError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LncassError):
    """Inputs have inconsistent shapes; the message names the offending lengths."""


class DataError(LncassError):
    """A dataset violates a precondition (bad cell, constant column, ...)."""


class ModelSpecError(LncassError):
    """A model specification is internally inconsistent."""


class SamplingError(LncassError):
    """The sampler could not produce usable draws."""
