import asyncio
import collections
import logging

logger = logging.getLogger("surfminer").getChild(__name__)


class LineProtocol(asyncio.Protocol):
    """Frames a byte stream into raw lines terminated by ``EOL``."""

    EOL = b"\n"

    def __init__(self):
        self.transport = None
        self.partial = []  # pieces of the unterminated line
        self.queue = collections.deque()
        self.line_count = 0
        self.eof = False

    def connection_made(self, transport):
        self.transport = transport

    def data_received(self, data):
        if self.EOL not in data:
            self.partial.append(data)
            return

        lines = data.split(self.EOL)
        if self.partial:
            lines[0] = b"".join(self.partial) + lines[0]
        tail = lines.pop()
        self.partial = [tail] if tail else []
        for line in lines:
            self._put(line)

    def _put(self, line):
        if line.endswith(b"\r"):
            line = line[:-1]
        self.line_count += 1
        self.queue.append(line)

    def eof_received(self):
        line = b"".join(self.partial)
        if line:
            logger.debug("Flushing unterminated last line (%d bytes)", len(line))
            self._put(line)
        self.partial = []
        self.eof = True

    def read_no_wait(self) -> bytes:
        return self.queue.popleft()

    def connection_lost(self, exc):
        if exc is not None:
            logger.error("Stream lost: %s", exc)
        if not self.eof:
            self.eof_received()
