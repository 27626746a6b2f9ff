"""Exception hierarchy shared by every module of the package."""


class Aqng2Error(Exception):
    """Base class for all package errors."""


class EmptyRecord(Aqng2Error, ValueError):
    pass


class NonFiniteSample(Aqng2Error, ValueError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"non-finite sample at index {self.index}")


class RecordTooShort(Aqng2Error, ValueError):
    pass


class ZeroVariance(Aqng2Error, ValueError):
    pass


class SignalTooWeak(Aqng2Error, ValueError):
    """The g2 denominator is below the signal floor: no photons to correlate."""


class TooFewBlocks(Aqng2Error, ValueError):
    pass


class InvalidBandwidth(Aqng2Error, ValueError):
    pass


class ZeroPhotonNumber(Aqng2Error, ValueError):
    pass


class ZeroIntensity(Aqng2Error, ValueError):
    pass


class SegmentTooLong(Aqng2Error, ValueError):
    pass


class ShapeMismatch(Aqng2Error, ValueError):
    pass


class LengthMismatch(Aqng2Error, ValueError):
    pass


class EmptySplit(Aqng2Error, ValueError):
    pass


class InconsistentWindowLength(Aqng2Error, ValueError):
    pass


class EmptyTrainingSet(Aqng2Error, ValueError):
    pass


class MappingDomainError(Aqng2Error, ValueError):
    pass


class CheckpointError(Aqng2Error, ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class ChecksumMismatch(CheckpointError):
    pass
