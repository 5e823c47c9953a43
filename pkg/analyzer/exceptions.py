"""
Exceptions raised by the analyzer services.

Management commands map each class to its process exit code.
"""


class QuicLensError(Exception):
    """Base class for every analyzer error"""
    exit_code = 1


class IngestIoError(QuicLensError):
    """Capture or label file could not be read or written"""
    exit_code = 1


class MalformedInput(QuicLensError):
    """Input file is readable but its content cannot be parsed"""
    exit_code = 2


class MalformedHeader(MalformedInput):
    """A UDP payload could not be walked as a sequence of QUIC packets"""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class UnsupportedLinkType(MalformedInput):
    def __init__(self, linktype):
        super().__init__(f"Unsupported pcap link type {linktype}")
        self.linktype = linktype


class ConfigError(QuicLensError):
    exit_code = 3


class LabelMismatch(QuicLensError):
    """Analyzer output and ground-truth labels describe different traces"""
    exit_code = 4
