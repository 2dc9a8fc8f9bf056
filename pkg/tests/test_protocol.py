from unittest.mock import MagicMock

import pytest

from surfminer.protocol import LineProtocol, LogFileProtocol


@pytest.fixture
def protocol():
    protocol = LineProtocol()
    protocol.connection_made(MagicMock())
    return protocol


@pytest.mark.parametrize(
    "input_chunks, expected_lines",
    [
        ([b"a\tb\nc\td\n"], [b"a\tb", b"c\td"]),
        ([b"a\tb", b"\nc", b"\td\n"], [b"a\tb", b"c\td"]),
        ([b"a\r\n", b"\r\n"], [b"a", b""]),
        ([b"a", b"b", b"c"], []),
        ([b"\n\n"], [b"", b""]),
        ([b"", b"a\n", b""], [b"a"]),
    ],
)
def test_data_received(protocol, input_chunks, expected_lines):
    for chunk in input_chunks:
        protocol.data_received(chunk)

    assert len(expected_lines) == len(protocol.queue)

    for expected_line in expected_lines:
        assert expected_line == protocol.read_no_wait()


def test_large_chunk(protocol):
    lines = [b"%d\tnavigate\thttp://a.test/%d" % (i, i) for i in range(200000)]

    protocol.data_received(b"\n".join(lines) + b"\n")

    assert protocol.line_count == 200000
    assert list(protocol.queue) == lines


def test_line_split_into_many_chunks(protocol):
    line = b"x" * 100000
    for i in range(len(line)):
        protocol.data_received(line[i : i + 1])
    protocol.data_received(b"\nnext")
    protocol.eof_received()

    assert list(protocol.queue) == [line, b"next"]


def test_eof_flushes_partial_line(protocol):
    protocol.data_received(b"first\nsecond")
    protocol.eof_received()

    assert protocol.line_count == 2
    assert protocol.read_no_wait() == b"first"
    assert protocol.read_no_wait() == b"second"
    assert protocol.eof


def test_connection_lost_without_eof(protocol):
    protocol.data_received(b"tail")
    protocol.connection_lost(None)

    assert protocol.read_no_wait() == b"tail"


def _collecting_parser(calls):
    def parse(lines, file_id):
        calls.append((lines, file_id))
        return ["entry"] * len(lines), []

    return parse


def test_log_file_protocol_utf8():
    calls = []
    protocol = LogFileProtocol("log1.txt", _collecting_parser(calls))
    protocol.connection_made(None)
    protocol.data_received("Dülŷçğ\nb\n".encode("utf-8"))
    protocol.eof_received()

    assert protocol.encoding == "utf-8"
    assert calls == [(["Dülŷçğ", "b"], "log1.txt")]
    assert protocol.entries == ["entry", "entry"]
    assert protocol.rejected == 0


def test_log_file_protocol_latin1_fallback():
    calls = []
    protocol = LogFileProtocol("log1.txt", _collecting_parser(calls))
    protocol.connection_made(None)
    protocol.data_received("Déterminait\n".encode("latin-1"))
    protocol.eof_received()

    assert protocol.encoding == "latin-1"
    assert calls[0][0] == ["Déterminait"]
