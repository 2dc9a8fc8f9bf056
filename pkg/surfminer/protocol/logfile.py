import logging
import typing

from .base import LineProtocol

logger = logging.getLogger("surfminer").getChild(__name__)

LineParser = typing.Callable[[typing.List[str], str], typing.Tuple[list, list]]


class LogFileProtocol(LineProtocol):
    """Collects the lines of one log file and hands them to ``line_parser``
    once the stream ends.

    The text encoding is decided for the whole file: UTF-8 when every line
    decodes, Latin-1 otherwise.
    """

    ENCODINGS = ("utf-8", "latin-1")

    def __init__(self, file_id: str, line_parser: LineParser):
        super(LogFileProtocol, self).__init__()
        self.file_id = file_id
        self.line_parser = line_parser
        self.encoding = None
        self.entries = []
        self.warnings = []

    def eof_received(self):
        super(LogFileProtocol, self).eof_received()

        raw_lines = list(self.queue)
        self.queue.clear()
        lines = self._decode(raw_lines)
        self.entries, self.warnings = self.line_parser(lines, self.file_id)
        logger.info(
            "%s: %d lines, %d entries, encoding %s",
            self.file_id,
            len(raw_lines),
            len(self.entries),
            self.encoding,
        )

    def _decode(self, raw_lines):
        for encoding in self.ENCODINGS:
            try:
                lines = [line.decode(encoding) for line in raw_lines]
            except UnicodeDecodeError:
                logger.debug("%s is not %s", self.file_id, encoding)
                continue
            self.encoding = encoding
            return lines

        raise AssertionError("latin-1 decodes any byte string")

    @property
    def rejected(self) -> int:
        return self.line_count - len(self.entries)
