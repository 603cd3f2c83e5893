"""Exception hierarchy.

``InputError`` subclasses describe unusable inputs (CLI exit code 2);
``AnalysisError`` subclasses describe inputs that parse but cannot be
analyzed (exit code 3).
"""


class VcbenchError(Exception):
    pass


class InputError(VcbenchError, ValueError):
    pass


class AnalysisError(VcbenchError):
    pass


# capture decoding
class MalformedHeader(InputError):
    pass


class TruncatedRecord(InputError):
    pass


class UnsupportedLinkType(InputError):
    pass


# lag analysis
class NegativeLag(AnalysisError):
    pass


class EmptySamples(AnalysisError):
    pass


# endpoints
class AmbiguousTopology(AnalysisError):
    pass


class NoProbes(AnalysisError):
    pass


# rates
class EmptyAfterWarmup(AnalysisError):
    pass


# video
class CropOutOfBounds(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class FrameTooSmall(InputError):
    pass


class LengthMismatch(InputError):
    pass


class InsufficientOverlap(AnalysisError):
    pass


class DegenerateReference(AnalysisError):
    pass


# audio
class TooShort(AnalysisError):
    pass


class AllGated(AnalysisError):
    pass


class NoConfidentPeak(AnalysisError):
    pass


class EmptyOverlap(AnalysisError):
    pass


# simulator / report
class ConfigInvalid(InputError):
    pass


class SchemaMismatch(InputError):
    pass


class KeyMismatch(AnalysisError):
    pass
