"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`PodfusionError`.  The
two intermediate classes decide the CLI exit status: :class:`DataError`
maps to 2 and :class:`NumericalError` to 3.
"""


class PodfusionError(Exception):
    """Base class for all toolkit errors."""


class DataError(PodfusionError, ValueError):
    """Input data violates a declared format or contract."""


class NumericalError(PodfusionError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable numbers."""


# geometry / data model
class InvalidBox(DataError):
    pass


class MalformedDocument(DataError):
    pass


class MissingField(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class DuplicateFrame(DataError):
    def __init__(self, frame_id):
        self.frame_id = frame_id
        super().__init__(f"duplicate frame_id {frame_id}")


class EmptyDataset(DataError):
    pass


# detection evaluation
class UnscoredPrediction(DataError):
    pass


class NoGroundTruth(DataError):
    pass


class EmptyClassMap(DataError):
    pass


# tracker
class NonMonotonicFrame(DataError):
    pass


# frame selection
class InvalidRange(DataError):
    pass


class MissingSide(DataError):
    def __init__(self, plot_id, side):
        self.plot_id = plot_id
        self.side = side
        super().__init__(f"plot {plot_id!r} has no metadata for side {side}")


# featurize
class UnscoredDetection(DataError):
    pass


class MalformedHeader(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


# regressor
class WrongViewCount(DataError):
    pass


class StaleCache(PodfusionError, RuntimeError):
    pass


class EmptySampleSet(DataError):
    pass


class VersionMismatch(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class NonFiniteActivation(NumericalError):
    pass


class DivergedTraining(NumericalError):
    pass


# ranking
class LengthMismatch(DataError):
    pass


class ZeroVariance(NumericalError):
    pass


class DegenerateCutoff(DataError):
    pass


class UndefinedMetric(NumericalError):
    pass


# simulator / config
class InvalidConfig(DataError):
    pass
