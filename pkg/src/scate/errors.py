"""Exception types shared across the package.

Each failure mode named in a module contract gets its own class so tests
and the CLI can match on type rather than message text.
"""


class ScateError(Exception):
    """Base class for all package errors."""


# -- data ------------------------------------------------------------------

class MissingColumn(ScateError):
    pass


class EmptyAfterCleaning(ScateError):
    pass


class NonBinaryLabels(ScateError):
    pass


class ParseError(ScateError):
    def __init__(self, row, col, message=""):
        self.row = row
        self.col = col
        super().__init__(message or f"unparseable value at row {row}, column {col!r}")


class InvalidRatios(ScateError):
    pass


class TooFewRows(ScateError):
    pass


class DimensionTooSmall(ScateError):
    pass


class ColumnMismatch(ScateError):
    pass


# -- cart / ensemble -------------------------------------------------------

class TooFewSamples(ScateError):
    pass


class EmptyLabelFold(ScateError):
    pass


class DimensionMismatch(ScateError):
    pass


class EmptyTraining(ScateError):
    pass


class BadLearningRate(ScateError):
    pass


# -- operator --------------------------------------------------------------

class ModelDataMismatch(ScateError):
    pass


class KernelInvariantViolated(ScateError):
    pass


class MatrixFormatError(ScateError):
    pass


class NotFitted(ScateError):
    pass


# -- spectral --------------------------------------------------------------

class NotSymmetric(ScateError):
    pass


class ConvergenceFailure(ScateError):
    pass


class RankTooLarge(ScateError):
    pass


class TooFewPositive(ScateError):
    pass


class RequiresFullSpectrum(ScateError):
    pass


# -- mlp -------------------------------------------------------------------

class BadDims(ScateError):
    pass


class ShapeMismatch(ScateError):
    pass


# -- model_io --------------------------------------------------------------

class BadMagic(ScateError):
    pass


class UnsupportedVersion(ScateError):
    pass


class CrcMismatch(ScateError):
    pass


class Truncated(ScateError):
    pass


# -- cli -------------------------------------------------------------------

class ConfigError(ScateError):
    """Bad run configuration; maps to exit code 2."""
