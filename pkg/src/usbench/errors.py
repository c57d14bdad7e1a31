"""Exception hierarchy shared by all usbench modules."""


class BenchmarkError(Exception):
    """Base class for all toolkit errors."""


class ParseError(BenchmarkError):
    """A document is malformed. The message names the offending location."""


class IntegrityError(BenchmarkError):
    """A record references an id that does not exist, or ids collide."""


class GeometryError(BenchmarkError):
    """A box is degenerate (non-positive width/height)."""


class ConfigurationError(BenchmarkError):
    """A request is inconsistent with the configured splits/categories."""
