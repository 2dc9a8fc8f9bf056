from .parser import format_entry, parse_line, parse_log
from .records import EventKind, LogWarning, RawLogEntry, Timestamp, UserKey
from .store import (
    FileInfo,
    LogStore,
    ParsedFile,
    ingest,
    load_store,
    merge_logs,
    persist_store,
    read_entries,
    read_log_file,
    read_users,
    write_entries,
    write_users,
)

__all__ = [
    "EventKind",
    "FileInfo",
    "LogStore",
    "LogWarning",
    "ParsedFile",
    "RawLogEntry",
    "Timestamp",
    "UserKey",
    "format_entry",
    "ingest",
    "load_store",
    "merge_logs",
    "parse_line",
    "parse_log",
    "persist_store",
    "read_entries",
    "read_log_file",
    "read_users",
    "write_entries",
    "write_users",
]
