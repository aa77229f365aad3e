"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""


class StegoError(Exception):
    code = "STEGO_ERROR"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidParams(StegoError, ValueError):
    code = "INVALID_PARAMS"


class WrongChannelCount(InvalidParams):
    code = "WRONG_CHANNEL_COUNT"


class InvalidQuality(InvalidParams):
    code = "INVALID_QUALITY"


class DimensionMismatch(InvalidParams):
    code = "DIMENSION_MISMATCH"


class TooSmallForScales(InvalidParams):
    code = "TOO_SMALL_FOR_SCALES"


class ImageTooSmall(InvalidParams):
    code = "IMAGE_TOO_SMALL"


class UnknownClass(InvalidParams):
    code = "UNKNOWN_CLASS"


class InvalidCounts(InvalidParams):
    code = "INVALID_COUNTS"


class OutOfRange(InvalidParams):
    code = "OUT_OF_RANGE"


class EmptyCorpus(InvalidParams):
    code = "EMPTY_CORPUS"


class NoChannelEnabled(InvalidParams):
    code = "NO_CHANNEL_ENABLED"


class ImageIoError(StegoError, OSError):
    code = "IO_ERROR"


class UnsupportedFormat(ImageIoError):
    code = "UNSUPPORTED_FORMAT"


class CorruptFile(ImageIoError):
    code = "CORRUPT_FILE"


class CapacityExceeded(StegoError):
    code = "CAPACITY_EXCEEDED"

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel

    def to_dict(self):
        d = super().to_dict()
        if self.channel is not None:
            d["channel"] = self.channel
        return d


class BitsExceedPlan(StegoError):
    code = "BITS_EXCEED_PLAN"


class VerificationOverflow(CapacityExceeded):
    code = "VERIFICATION_OVERFLOW"


class ExtractionError(StegoError):
    """Base for failures while recovering a payload."""

    code = "EXTRACTION_ERROR"


class MagicNotFound(ExtractionError):
    code = "MAGIC_NOT_FOUND"


class CrcMismatch(ExtractionError):
    code = "CRC_MISMATCH"


class TruncatedFrame(ExtractionError):
    code = "TRUNCATED_FRAME"


class MissingChannel(ExtractionError):
    code = "MISSING_CHANNEL"


class InconsistentHeaders(ExtractionError):
    code = "INCONSISTENT_HEADERS"
