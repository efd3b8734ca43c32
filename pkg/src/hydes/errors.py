"""Exception types raised across the package.

All of them derive from ``HydesError`` (itself a ``ValueError``) so callers
can catch library failures without masking programming errors.
"""


class HydesError(ValueError):
    pass


# sphere
class NormTooSmall(HydesError):
    pass


class DimensionMismatch(HydesError):
    pass


class InvalidParam(HydesError):
    pass


# objective
class EmptyInput(HydesError):
    pass


class BatchTooSmall(HydesError):
    pass


class NoPositives(HydesError):
    def __init__(self, index):
        super().__init__(f"anchor {index} has no positive views")
        self.index = index


# views
class ImageTooSmall(HydesError):
    pass


# model
class MissingForwardCache(HydesError):
    pass


class ShapeMismatch(HydesError):
    pass


class CheckpointError(HydesError):
    pass


class NumericFailure(HydesError):
    pass


# probes
class ClassMissingInTrain(HydesError):
    pass


class KTooLarge(HydesError):
    pass


# geometry
class DegenerateBatch(HydesError):
    pass


class ZeroMatrix(HydesError):
    pass


# align
class LengthMismatch(HydesError):
    pass


class DegenerateVariance(HydesError):
    pass


class ClassNameMismatch(HydesError):
    pass


class InvalidDistanceMatrix(HydesError):
    pass


# datastore
class CenterRejectionExhausted(HydesError):
    pass


class DumpError(HydesError):
    pass


class BadMagic(DumpError):
    pass


class TruncatedPayload(DumpError):
    pass


class VersionUnsupported(DumpError):
    pass


class MalformedRecordSize(DumpError):
    pass
