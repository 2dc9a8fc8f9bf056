import logging
import re
import typing

from ..constants import FIELD_SEPARATOR
from ..exceptions import (
    BadEventCode,
    BadInteger,
    BadTimestamp,
    MalformedFieldCount,
    ParseError,
)
from .records import EventKind, LogWarning, RawLogEntry, Timestamp, UserKey

logger = logging.getLogger("surfminer").getChild(__name__)

_DATE_RE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")
_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})[:.](\d{3})$")
_EVENT_CODES = {kind.code: kind for kind in EventKind}


def _parse_int(text, what, file_id, line_no) -> int:
    text = text.strip()
    if not text.isascii() or not text.isdigit():
        raise BadInteger(file_id, line_no, "%s: %r" % (what, text))
    return int(text)


def _parse_timestamp(date_text, time_text, file_id, line_no, day_first) -> Timestamp:
    date_match = _DATE_RE.match(date_text.strip())
    time_match = _TIME_RE.match(time_text.strip())
    if date_match is None or time_match is None:
        raise BadTimestamp(file_id, line_no, "%s %s" % (date_text, time_text))

    first, second, year = (int(v) for v in date_match.groups())
    day, month = (first, second) if day_first else (second, first)
    hour, minute, sec, milli = (int(v) for v in time_match.groups())
    if hour > 23 or minute > 59 or sec > 59:
        raise BadTimestamp(file_id, line_no, time_text)

    try:
        return Timestamp.from_parts(day, month, year, hour, minute, sec, milli)
    except ValueError as e:
        raise BadTimestamp(file_id, line_no, str(e))


def _split_declared(text, length):
    """Cut ``text`` after ``length`` characters when a blank follows there,
    otherwise at the first blank."""
    if length is not None and len(text) > length and text[length].isspace():
        return text[:length], text[length + 1 :]

    head, _, tail = text.partition(" ")
    return head, tail


def _parse_document_fields(rest, file_id, line_no):
    url_len = _parse_int(rest[0], "url length", file_id, line_no)
    if len(rest) >= 5:
        url = rest[1]
        title_len = _parse_int(rest[2], "title length", file_id, line_no)
        title = FIELD_SEPARATOR.join(rest[3:-1])
        frames_text = rest[-1]
    else:
        # URL, title and frame count printed on one blank-separated run
        text = " ".join(rest[1:])
        url, text = _split_declared(text, url_len)
        title_len_text, _, text = text.partition(" ")
        title_len = _parse_int(title_len_text, "title length", file_id, line_no)
        title, frames_text = _split_declared(text, title_len)
        if not frames_text.strip().isdigit():
            title, _, frames_text = text.rpartition(" ")

    frame_count = _parse_int(frames_text, "frame count", file_id, line_no)
    return url_len, url, title_len, title, frame_count


def parse_line(
    line: str, file_id: str, line_no: int, day_first=True
) -> typing.Tuple[RawLogEntry, typing.List[str]]:
    """Parse one physical log record.

    Returns the entry and the advisory messages raised while reading it
    (declared lengths that disagree with the text). Structural problems raise
    a :class:`ParseError` subclass carrying the position.
    """
    parts = line.rstrip("\r\n").split(FIELD_SEPARATOR)
    while len(parts) > 6 and parts[-1] == "":
        parts.pop()
    if len(parts) < 6:
        raise MalformedFieldCount(file_id, line_no, "%d fields" % len(parts))

    mac, login, date_text, time_text, window_text, code_text = parts[:6]
    rest = parts[6:]

    event = _EVENT_CODES.get(code_text.strip())
    if event is None:
        raise BadEventCode(file_id, line_no, repr(code_text))

    ts = _parse_timestamp(date_text, time_text, file_id, line_no, day_first)
    window_id = _parse_int(window_text, "window id", file_id, line_no)
    user = UserKey(mac, login)

    if event == EventKind.WINDOW_CLOSE:
        if rest:
            raise MalformedFieldCount(file_id, line_no, "close event with a url")
        return RawLogEntry(user, ts, window_id, event, file_id, line_no), []

    if event == EventKind.NAVIGATE_BEGIN:
        if len(rest) != 2:
            raise MalformedFieldCount(file_id, line_no, "%d fields" % len(parts))
        url_len = _parse_int(rest[0], "url length", file_id, line_no)
        url = rest[1]
        title_len = title = frame_count = None
    else:
        if len(rest) < 2:
            raise MalformedFieldCount(file_id, line_no, "%d fields" % len(parts))
        url_len, url, title_len, title, frame_count = _parse_document_fields(
            rest, file_id, line_no
        )

    if not url:
        raise MalformedFieldCount(file_id, line_no, "empty url")

    notes = []
    if url_len != len(url):
        notes.append("url length %d declared, %d found" % (url_len, len(url)))
    if title_len is not None and title_len != len(title):
        notes.append("title length %d declared, %d found" % (title_len, len(title)))

    entry = RawLogEntry(
        user,
        ts,
        window_id,
        event,
        file_id,
        line_no,
        url_len=url_len,
        url=url,
        title_len=title_len,
        title=title,
        frame_count=frame_count,
    )
    return entry, notes


def parse_log(
    lines: typing.Iterable[str], file_id: str, day_first=True
) -> typing.Tuple[typing.List[RawLogEntry], typing.List[LogWarning]]:
    entries = []
    warnings = []
    for line_no, line in enumerate(lines, 1):
        try:
            entry, notes = parse_line(line, file_id, line_no, day_first=day_first)
        except ParseError as e:
            logger.warning("Rejected line: %s", e)
            warnings.append(LogWarning(file_id, line_no, str(e)))
            continue

        entries.append(entry)
        for note in notes:
            logger.debug("%s:%d: %s", file_id, line_no, note)
            warnings.append(LogWarning(file_id, line_no, note))

    return entries, warnings


def format_entry(entry: RawLogEntry, day_first=True) -> str:
    """Render an entry in the collector's wire layout (inverse of :func:`parse_line`)."""
    fields = [
        entry.user.mac,
        entry.user.login_cipher,
        entry.ts.format_date(day_first),
        entry.ts.format_time(),
        str(entry.window_id),
        entry.event.code,
    ]
    if entry.event != EventKind.WINDOW_CLOSE:
        url_len = entry.url_len if entry.url_len is not None else len(entry.url)
        fields += ["%03d" % url_len, entry.url]
    if entry.event == EventKind.DOCUMENT_COMPLETE:
        title = entry.title or ""
        title_len = entry.title_len if entry.title_len is not None else len(title)
        fields += ["%03d" % title_len, title, "%02d" % (entry.frame_count or 0)]
    return FIELD_SEPARATOR.join(fields)
