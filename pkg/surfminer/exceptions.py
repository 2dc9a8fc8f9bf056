from .constants import parse_error_reasons


class SurfMinerException(Exception):
    pass


class ParseError(SurfMinerException):
    reason = "field_count"

    def __init__(self, file_id, line_no, detail=""):
        self.file_id = file_id
        self.line_no = line_no
        self.detail = detail
        msg = "%s:%d: %s" % (file_id, line_no, parse_error_reasons[self.reason])
        if detail:
            msg = "%s (%s)" % (msg, detail)

        super(ParseError, self).__init__(msg)


class MalformedFieldCount(ParseError):
    reason = "field_count"


class BadEventCode(ParseError):
    reason = "event_code"


class BadTimestamp(ParseError):
    reason = "timestamp"


class BadInteger(ParseError):
    reason = "integer"


class IoFailure(SurfMinerException):
    pass


class DuplicateFileId(SurfMinerException):
    pass


class ManifestVersionMismatch(SurfMinerException):
    pass


class ChecksumMismatch(SurfMinerException):
    pass


class EmptyInput(SurfMinerException):
    pass


class EmptyData(SurfMinerException):
    pass


class WidthMismatch(SurfMinerException):
    pass


class NonInteractiveEnvironment(SurfMinerException):
    pass


class MissingArtifacts(SurfMinerException):
    pass


class CorruptArtifact(SurfMinerException):
    """A stage file exists but its contents cannot be read back."""


class ConfigError(SurfMinerException):
    pass


class StageFailed(SurfMinerException):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super(StageFailed, self).__init__("Stage %s failed: %s" % (stage, cause))
