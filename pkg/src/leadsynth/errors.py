"""Exception types raised across the package.

Every malformed input maps to one of these typed errors; no operation is
allowed to escape with a bare ValueError on bad external data.
"""


class LeadSynthError(Exception):
    """Base class for all package errors."""


# record parsing / IO
class MalformedHeader(LeadSynthError):
    pass


class UnsupportedFormat(LeadSynthError):
    pass


class TruncatedPayload(LeadSynthError):
    pass


class GainZero(LeadSynthError):
    pass


class OutOfRange(LeadSynthError):
    pass


class UnknownLead(LeadSynthError):
    pass


class IoFailure(LeadSynthError):
    pass


# preprocessing
class SignalTooShort(LeadSynthError):
    pass


class InvalidCutoffs(LeadSynthError):
    pass


# beat detection / delineation
class NoBeatsFound(LeadSynthError):
    pass


# feature extraction / training sets
class MissingLandmark(LeadSynthError):
    pass


class InsufficientBeats(LeadSynthError):
    pass


class LeadMissing(LeadSynthError):
    pass


# dtw
class EmptySequence(LeadSynthError):
    pass


class EmptyLibrary(LeadSynthError):
    pass


# random forest
class InsufficientData(LeadSynthError):
    pass


# synthesis
class DegenerateTarget(LeadSynthError):
    pass


class ModelMissing(LeadSynthError):
    pass


# vcg
class LengthMismatch(LeadSynthError):
    pass


class MissingLead(LeadSynthError):
    pass


class WindowOutOfRange(LeadSynthError):
    pass


# metrics
class ZeroVariance(LeadSynthError):
    pass


class RecordTooShort(LeadSynthError):
    pass


# simulation
class InvalidConfig(LeadSynthError):
    pass


class ScheduleOutOfRange(LeadSynthError):
    pass
