import datetime
from enum import IntEnum
import typing

_EPOCH_ORDINAL = datetime.date(1970, 1, 1).toordinal()
_DAY_MS = 86400000


class EventKind(IntEnum):
    NAVIGATE_BEGIN = 0x01  # BeforeNavigate
    DOCUMENT_COMPLETE = 0x02
    WINDOW_CLOSE = 0x03  # OnQuit

    @property
    def code(self) -> str:
        return "%02d" % self.value


class UserKey(typing.NamedTuple):
    mac: str
    login_cipher: str


class Timestamp(typing.NamedTuple):
    """Absolute instant in milliseconds since 1970-01-01, clock as recorded."""

    epoch_ms: int

    @classmethod
    def from_parts(
        cls,
        day: int,
        month: int,
        year: int,
        hour: int = 0,
        minute: int = 0,
        second: int = 0,
        millisecond: int = 0,
    ) -> "Timestamp":
        assert 0 <= millisecond <= 999
        days = datetime.date(year, month, day).toordinal() - _EPOCH_ORDINAL
        day_ms = ((hour * 60 + minute) * 60 + second) * 1000 + millisecond
        return cls(days * _DAY_MS + day_ms)

    @property
    def date(self) -> datetime.date:
        return datetime.date.fromordinal(self.epoch_ms // _DAY_MS + _EPOCH_ORDINAL)

    @property
    def day_ms(self) -> int:
        return self.epoch_ms % _DAY_MS

    @property
    def hour(self) -> int:
        return self.day_ms // 3600000

    def format_date(self, day_first=True) -> str:
        d = self.date
        if day_first:
            return "%02d/%02d/%04d" % (d.day, d.month, d.year)
        return "%02d/%02d/%04d" % (d.month, d.day, d.year)

    def format_time(self) -> str:
        ms = self.day_ms
        return "%02d:%02d:%02d:%03d" % (
            ms // 3600000,
            ms // 60000 % 60,
            ms // 1000 % 60,
            ms % 1000,
        )

    def __str__(self):
        return "%s %s" % (self.format_date(), self.format_time())


class RawLogEntry(typing.NamedTuple):
    user: UserKey
    ts: Timestamp
    window_id: int
    event: EventKind
    source_file: str
    source_line: int
    url_len: typing.Optional[int] = None
    url: typing.Optional[str] = None
    title_len: typing.Optional[int] = None
    title: typing.Optional[str] = None
    frame_count: typing.Optional[int] = None
    url_id: typing.Optional[int] = None

    @property
    def ms(self) -> int:
        return self.ts.epoch_ms

    @property
    def sort_key(self):
        return self.ts.epoch_ms, self.source_file, self.source_line

    @property
    def position(self) -> str:
        return "%s:%d" % (self.source_file, self.source_line)


class LogWarning(typing.NamedTuple):
    source_file: str
    source_line: int
    message: str
