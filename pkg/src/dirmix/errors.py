"""Exception hierarchy.

Every failure mode surfaced by the library is a subclass of DirmixError so
callers (and the CLI) can catch one base class and still report a precise
category.
"""


class DirmixError(Exception):
    """Base class for all dirmix errors."""


# --- feature container / file formats -------------------------------------

class FormatError(DirmixError):
    """Base class for binary container violations."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayload(FormatError):
    """Declared header sizes exceed the bytes actually present."""


class NonFiniteValue(FormatError):
    """A payload float is NaN or infinite."""

    def __init__(self, message, layer=None, offset=None):
        super().__init__(message)
        self.layer = layer
        self.offset = offset


class TooManyComponents(DirmixError):
    """Label map has more components than the byte format can hold."""


class IoFailure(DirmixError):
    """Underlying OS write/read failed."""


# --- numerical core --------------------------------------------------------

class DegenerateDensity(DirmixError):
    """A component log-density evaluated to NaN."""


class NotPositiveDefinite(DirmixError):
    """Covariance/scale matrix has no Cholesky factorization."""


class EmptyComponent(DirmixError):
    """A component's responsibility mass fell below the usable floor."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class DofBracketFailure(DirmixError):
    """Degrees-of-freedom root equation has no sign change on the bracket."""


class ZeroRowWeight(DirmixError):
    """An update-rule output row cannot be normalized (sum below floor)."""


class NonFinite(DirmixError):
    """A scalar diagnostic (log-posterior) is NaN or infinite."""


# --- spatial operators ------------------------------------------------------

class NonPositiveSigma(DirmixError):
    """Gaussian kernel width must be > 0."""


class ShrinkRequested(DirmixError):
    """Nearest-neighbor upsampling asked to reduce a dimension."""


class GrowRequested(DirmixError):
    """Average-pool downsampling asked to enlarge a dimension."""


# --- preprocessing ----------------------------------------------------------

class DegenerateCovariance(DirmixError):
    """Feature covariance carries no variance at all."""


class ChannelMismatch(DirmixError):
    """Layer channel count differs from what a fitted model expects."""


# --- scoring / CLI ----------------------------------------------------------

class DimensionMismatch(DirmixError):
    """Two maps that must share a grid do not."""


class MissingReference(DirmixError):
    """Evaluation found no reference map for any prediction."""


class ConfigError(DirmixError):
    """Run configuration failed validation."""
