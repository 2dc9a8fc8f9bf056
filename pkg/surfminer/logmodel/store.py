import asyncio
from dataclasses import dataclass, field
import heapq
import itertools
import json
import logging
import os
import typing

from ..constants import MANIFEST_NAME, READ_CHUNK_SIZE, STORE_FORMAT_VERSION
from ..exceptions import (
    ChecksumMismatch,
    DuplicateFileId,
    IoFailure,
    ManifestVersionMismatch,
    MissingArtifacts,
)
from ..protocol import LogFileProtocol
from ..tables import INT, OPTIONAL_INT, file_checksum, parsing, read_records, write_table
from .parser import parse_log
from .records import EventKind, LogWarning, RawLogEntry, Timestamp, UserKey

logger = logging.getLogger("surfminer").getChild(__name__)

ENTRY_COLUMNS = (
    "source_file",
    "source_line",
    "user_id",
    "epoch_ms",
    "window_id",
    "event",
    "url_len",
    "url",
    "title_len",
    "title",
    "frame_count",
)


class ParsedFile(typing.NamedTuple):
    file_id: str
    entries: typing.List[RawLogEntry]
    warnings: typing.List[LogWarning]
    line_count: int
    encoding: str = "utf-8"

    @property
    def rejected(self) -> int:
        return self.line_count - len(self.entries)


class FileInfo(typing.NamedTuple):
    file_id: str
    line_count: int
    entry_count: int
    encoding: str


@dataclass(frozen=True)
class LogStore:
    """Merged, per-user ordered entries with their user and warning tables.

    Entries are grouped by user (users in sorted order); inside a group they
    follow (epoch ms, source file, source line).
    """

    entries: typing.Tuple[RawLogEntry, ...] = ()
    users: typing.Tuple[UserKey, ...] = ()
    warnings: typing.Tuple[LogWarning, ...] = ()
    files: typing.Tuple[FileInfo, ...] = field(default=())

    def partitions(self) -> typing.Iterator[typing.Tuple[UserKey, typing.List[RawLogEntry]]]:
        for user, group in itertools.groupby(self.entries, key=lambda e: e.user):
            yield user, list(group)

    @property
    def rejected(self) -> typing.Dict[str, int]:
        return {f.file_id: f.line_count - f.entry_count for f in self.files}


def read_log_file(path, file_id: typing.Optional[str] = None, day_first=True) -> ParsedFile:
    file_id = file_id or os.path.basename(path)
    protocol = LogFileProtocol(
        file_id, lambda lines, fid: parse_log(lines, fid, day_first=day_first)
    )
    try:
        with open(path, "rb") as f:
            protocol.connection_made(None)
            for chunk in iter(lambda: f.read(READ_CHUNK_SIZE), b""):
                protocol.data_received(chunk)
    except OSError as e:
        raise IoFailure("Failed to read log %s: %s" % (path, e)) from e
    protocol.eof_received()

    return ParsedFile(
        file_id,
        protocol.entries,
        protocol.warnings,
        protocol.line_count,
        protocol.encoding,
    )


def merge_logs(files: typing.Sequence[ParsedFile]) -> LogStore:
    """Merge parsed files into one store.

    Each user's partition is a k-way merge of that user's entries per file,
    keyed by (epoch ms, file, line). A file whose clock runs backwards keeps
    its own relative order.
    """
    seen = set()
    for parsed in files:
        if parsed.file_id in seen:
            raise DuplicateFileId("File id %s given twice" % parsed.file_id)
        seen.add(parsed.file_id)

    per_user: typing.Dict[UserKey, typing.List[typing.List[RawLogEntry]]] = {}
    for parsed in files:
        by_user: typing.Dict[UserKey, typing.List[RawLogEntry]] = {}
        for entry in parsed.entries:
            by_user.setdefault(entry.user, []).append(entry)
        for user, entries in by_user.items():
            per_user.setdefault(user, []).append(entries)

    users = tuple(sorted(per_user))
    merged = []
    for user in users:
        merged.extend(heapq.merge(*per_user[user], key=lambda e: e.sort_key))

    warnings = tuple(w for parsed in files for w in parsed.warnings)
    infos = tuple(
        FileInfo(p.file_id, p.line_count, len(p.entries), p.encoding) for p in files
    )
    logger.info(
        "Merged %d files: %d entries, %d users, %d warnings",
        len(files),
        len(merged),
        len(users),
        len(warnings),
    )
    return LogStore(tuple(merged), users, warnings, infos)


async def ingest(paths: typing.Sequence[str], day_first=True) -> LogStore:
    """Parse log files concurrently and merge them."""
    file_ids = [os.path.basename(p) for p in paths]
    duplicates = sorted({f for f in file_ids if file_ids.count(f) > 1})
    if duplicates:
        raise DuplicateFileId("Duplicate file ids: %s" % ", ".join(duplicates))

    parsed = await asyncio.gather(
        *[
            asyncio.to_thread(read_log_file, path, file_id, day_first)
            for path, file_id in zip(paths, file_ids)
        ]
    )
    return merge_logs(parsed)


def _entry_row(entry: RawLogEntry, user_ids):
    return (
        entry.source_file,
        entry.source_line,
        user_ids[entry.user],
        entry.ts.epoch_ms,
        entry.window_id,
        int(entry.event),
        entry.url_len,
        entry.url,
        entry.title_len,
        entry.title,
        entry.frame_count,
    )


def entry_from_record(record, users) -> RawLogEntry:
    event = EventKind(record["event"])
    has_title = event == EventKind.DOCUMENT_COMPLETE
    return RawLogEntry(
        users[record["user_id"]],
        Timestamp(record["epoch_ms"]),
        record["window_id"],
        event,
        record["source_file"],
        record["source_line"],
        url_len=record["url_len"],
        url=record["url"] or None,
        title_len=record["title_len"],
        title=record["title"] if has_title else None,
        frame_count=record["frame_count"],
        url_id=record.get("url_id"),
    )


def write_entries(path, entries, users, with_url_id=False) -> None:
    user_ids = {user: i for i, user in enumerate(users)}
    header = ENTRY_COLUMNS + (("url_id",) if with_url_id else ())
    rows = (
        _entry_row(e, user_ids) + ((e.url_id,) if with_url_id else ()) for e in entries
    )
    write_table(path, header, rows)


ENTRY_TYPES = {
    "source_line": INT,
    "user_id": INT,
    "epoch_ms": INT,
    "window_id": INT,
    "event": INT,
    "url_len": OPTIONAL_INT,
    "title_len": OPTIONAL_INT,
    "frame_count": OPTIONAL_INT,
}


def read_entries(path, users, with_url_id=False) -> typing.List[RawLogEntry]:
    types = dict(ENTRY_TYPES, url_id=OPTIONAL_INT) if with_url_id else ENTRY_TYPES
    records = read_records(path, types)
    with parsing(path):
        return [entry_from_record(r, users) for r in records]


def write_users(path, users) -> None:
    write_table(
        path, ("user_id", "mac", "login_cipher"), ((i, u.mac, u.login_cipher) for i, u in enumerate(users))
    )


def read_users(path) -> typing.Tuple[UserKey, ...]:
    return tuple(UserKey(r["mac"], r["login_cipher"]) for r in read_records(path))


_STORE_TABLES = ("entries.tsv", "users.tsv", "warnings.tsv", "files.tsv")


def persist_store(store: LogStore, directory) -> typing.Dict[str, typing.Any]:
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise IoFailure("Cannot create %s: %s" % (directory, e)) from e

    write_entries(os.path.join(directory, "entries.tsv"), store.entries, store.users)
    write_users(os.path.join(directory, "users.tsv"), store.users)
    write_table(
        os.path.join(directory, "warnings.tsv"),
        LogWarning._fields,
        store.warnings,
    )
    write_table(os.path.join(directory, "files.tsv"), FileInfo._fields, store.files)

    manifest = {
        "format_version": STORE_FORMAT_VERSION,
        "files": {
            name: file_checksum(os.path.join(directory, name)) for name in _STORE_TABLES
        },
    }
    try:
        with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoFailure("Failed to write manifest: %s" % e) from e

    logger.info("Persisted store of %d entries to %s", len(store.entries), directory)
    return manifest


def load_store(directory) -> LogStore:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise MissingArtifacts("No store manifest in %s" % directory)
    try:
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, ValueError) as e:
        raise IoFailure("Failed to read manifest: %s" % e) from e

    version = manifest.get("format_version")
    if version != STORE_FORMAT_VERSION:
        raise ManifestVersionMismatch(
            "Store format %s, expected %s" % (version, STORE_FORMAT_VERSION)
        )
    checksums = manifest.get("files", {})
    missing = [name for name in _STORE_TABLES if name not in checksums]
    if missing:
        raise ChecksumMismatch("Manifest lists no checksum for %s" % ", ".join(missing))
    for name, checksum in sorted(checksums.items()):
        actual = file_checksum(os.path.join(directory, name))
        if actual != checksum:
            raise ChecksumMismatch("%s checksum %s != %s" % (name, actual, checksum))

    users = read_users(os.path.join(directory, "users.tsv"))
    entries = read_entries(os.path.join(directory, "entries.tsv"), users)
    warnings = tuple(
        LogWarning(r["source_file"], r["source_line"], r["message"])
        for r in read_records(os.path.join(directory, "warnings.tsv"), {"source_line": INT})
    )
    files = tuple(
        FileInfo(r["file_id"], r["line_count"], r["entry_count"], r["encoding"])
        for r in read_records(os.path.join(directory, "files.tsv"), {"line_count": INT, "entry_count": INT})
    )
    return LogStore(tuple(entries), users, warnings, files)
