"""Exception hierarchy shared by every stage."""


class CosmicSegError(Exception):
    """Base class for all errors raised by cosmicseg."""


# -- input format ---------------------------------------------------------

class FitsFormatError(CosmicSegError, ValueError):
    """The byte stream is not a FITS file we can decode."""


class MissingSimple(FitsFormatError):
    pass


class UnsupportedBitpix(FitsFormatError):
    pass


class TruncatedData(FitsFormatError):
    pass


class NonImageHdu(FitsFormatError):
    pass


class PgmFormatError(CosmicSegError, ValueError):
    pass


# -- contracts ------------------------------------------------------------

class DimensionMismatch(CosmicSegError, ValueError):
    pass


class OutOfBounds(CosmicSegError, ValueError):
    pass


class ConfigError(CosmicSegError, ValueError):
    """A parameter lies outside its operation's preconditions."""


class NonPositiveC(ConfigError):
    pass


class NonPositiveSigma(ConfigError):
    pass


class BadTopology(ConfigError):
    pass


class ModelShapeMismatch(ConfigError):
    pass


# -- numerics -------------------------------------------------------------

class NumericError(CosmicSegError, ArithmeticError):
    pass


class ZeroMse(NumericError):
    """PSNR is infinite for identical masks."""


class ConstantImage(NumericError, ValueError):
    pass


class EmptyClass(NumericError):
    """One side of a threshold split holds no pixels."""


class NotConverged(NumericError):
    pass


class EmptyDataset(CosmicSegError, ValueError):
    pass


class EmptySet(EmptyDataset):
    pass


class StageError(CosmicSegError):
    """Wraps an error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
