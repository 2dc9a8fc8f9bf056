from dataclasses import dataclass, field
from enum import Enum, IntEnum
import itertools
import logging
import os
import statistics
import typing

from .constants import DEFAULT_REOPEN_GAP_MS, DEFAULT_TERMINATION_MODE
from .logmodel import EventKind, RawLogEntry, Timestamp, UserKey, read_users, write_users
from .tables import FLAG, INT, OPTIONAL_INT, parsing, read_records, write_table

logger = logging.getLogger("surfminer").getChild(__name__)


class TerminationMode(IntEnum):
    LAST_EVENT = 1
    NEXT_LOG_EVENT = 2
    AVERAGE_RATE = 3


class TerminatedBy(Enum):
    CLOSE_EVENT = "close"
    RESOLUTION = "resolution"


class UnterminatedWindow(typing.NamedTuple):
    window_id: int
    user: UserKey
    first_item: int  # position of the window's first event in the user partition
    last_item: int
    last_event_ts: Timestamp
    resolved_end_ts: typing.Optional[Timestamp] = None


@dataclass
class PageVisit:
    page_id: int
    visit_id: int
    window_id: int
    url_id: int
    url: str
    start_ts: Timestamp
    end_ts: typing.Optional[Timestamp] = None
    completed: bool = False
    title: typing.Optional[str] = None
    source_file: str = ""

    @property
    def duration_ms(self) -> int:
        return self.end_ts.epoch_ms - self.start_ts.epoch_ms


@dataclass
class WindowVisit:
    visit_id: int
    window_id: int
    user: UserKey
    start_ts: Timestamp
    surf_id: int
    end_ts: typing.Optional[Timestamp] = None
    pages: typing.List[PageVisit] = field(default_factory=list)
    terminated_by: typing.Optional[TerminatedBy] = None
    source_file: str = ""


@dataclass
class Surf:
    surf_id: int
    user: UserKey
    start_ts: Timestamp
    end_ts: typing.Optional[Timestamp] = None
    windows: typing.List[WindowVisit] = field(default_factory=list)
    source_file: str = ""


@dataclass
class Sessions:
    surfs: typing.List[Surf] = field(default_factory=list)
    unterminated: typing.List[UnterminatedWindow] = field(default_factory=list)
    orphans: int = 0
    mode: TerminationMode = TerminationMode(DEFAULT_TERMINATION_MODE)

    @property
    def windows(self) -> typing.List[WindowVisit]:
        return [w for s in self.surfs for w in s.windows]

    @property
    def pages(self) -> typing.List[PageVisit]:
        return [p for w in self.windows for p in w.pages]


class IdCounter:
    """Hands out consecutive ids for surfs, window visits and page visits."""

    def __init__(self):
        self.surf = itertools.count()
        self.window = itertools.count()
        self.page = itertools.count()


WindowKey = typing.Tuple[int, int]  # window id, first item


def detect_unterminated(
    entries: typing.Sequence[RawLogEntry],
    user: UserKey = None,
    reopen_gap_ms: typing.Optional[int] = DEFAULT_REOPEN_GAP_MS,
) -> typing.Dict[WindowKey, UnterminatedWindow]:
    """Scan one user's entries for windows without a closing event.

    A NavigateBegin on a window silent for more than ``reopen_gap_ms`` starts
    a new instance of that window id; the earlier instance stays unterminated.
    Returns the unterminated windows keyed by window id and first item, in
    order of their first event.
    """
    open_rows: typing.Dict[int, UnterminatedWindow] = {}
    abandoned: typing.List[UnterminatedWindow] = []
    for index, e in enumerate(entries):
        if user is not None and e.user != user:
            continue
        if e.event == EventKind.WINDOW_CLOSE:
            open_rows.pop(e.window_id, None)
            continue

        row = open_rows.get(e.window_id)
        if (
            row is not None
            and reopen_gap_ms is not None
            and e.event == EventKind.NAVIGATE_BEGIN
            and e.ts.epoch_ms - row.last_event_ts.epoch_ms > reopen_gap_ms
        ):
            logger.debug("Window %d reopened at %s after %s", e.window_id, e.position, row.last_event_ts)
            abandoned.append(row)
            row = None
        if row is None:
            open_rows[e.window_id] = UnterminatedWindow(e.window_id, e.user, index, index, e.ts)
        else:
            open_rows[e.window_id] = row._replace(last_item=index, last_event_ts=e.ts)

    rows = sorted(abandoned + list(open_rows.values()), key=lambda r: r.first_item)
    return {(r.window_id, r.first_item): r for r in rows}


def _window_event_times(entries, row: UnterminatedWindow):
    return [
        e.ts.epoch_ms
        for e in entries[row.first_item : row.last_item + 1]
        if e.window_id == row.window_id and e.event != EventKind.WINDOW_CLOSE
    ]


def resolve_unterminated(
    table: typing.Dict[WindowKey, UnterminatedWindow],
    mode: TerminationMode,
    entries: typing.Sequence[RawLogEntry],
    rate_statistic="mean",
) -> typing.Dict[WindowKey, UnterminatedWindow]:
    """Assign an end instant to each unterminated window."""
    mode = TerminationMode(mode)
    resolved = {}
    for key, row in table.items():
        end_ms = row.last_event_ts.epoch_ms
        if mode == TerminationMode.NEXT_LOG_EVENT:
            if row.last_item + 1 < len(entries):
                end_ms = max(end_ms, entries[row.last_item + 1].ts.epoch_ms)
        elif mode == TerminationMode.AVERAGE_RATE:
            times = _window_event_times(entries, row)
            gaps = [b - a for a, b in zip(times, times[1:])]
            if gaps:
                if rate_statistic == "median":
                    rate = statistics.median(gaps)
                else:
                    rate = statistics.mean(gaps)
                end_ms += max(int(round(rate)), 0)
        resolved[key] = row._replace(resolved_end_ts=Timestamp(end_ms))
        logger.debug("Window %d resolved to %s (mode %d)", row.window_id, resolved[key].resolved_end_ts, mode)
    return resolved


class _SyntheticClose(typing.NamedTuple):
    window_id: int
    ts: Timestamp


class _SurfBuilder:
    """State machine rebuilding surfs, window visits and page visits for one user."""

    def __init__(self, user: UserKey, ids: IdCounter):
        self.user = user
        self.ids = ids
        self.surfs: typing.List[Surf] = []
        self.surf: typing.Optional[Surf] = None
        self.open_windows: typing.Dict[int, WindowVisit] = {}
        self.current: typing.Dict[int, PageVisit] = {}
        self.orphans = 0

    def navigate(self, e: RawLogEntry):
        window = self.open_windows.get(e.window_id)
        if window is None:
            if self.surf is None:
                self.surf = Surf(next(self.ids.surf), self.user, e.ts, source_file=e.source_file)
                self.surfs.append(self.surf)
            window = WindowVisit(
                next(self.ids.window),
                e.window_id,
                self.user,
                e.ts,
                self.surf.surf_id,
                source_file=e.source_file,
            )
            self.surf.windows.append(window)
            self.open_windows[e.window_id] = window
            self._open_page(window, e)
            return

        page = self.current.get(e.window_id)
        if page is not None and page.url_id == e.url_id and not page.completed:
            page.start_ts = e.ts  # page not completely displayed: reinitialise it
            return
        if page is not None:
            self._terminate_page(window, page, e.ts)
        self._open_page(window, e)

    def complete(self, e: RawLogEntry):
        if e.window_id not in self.open_windows:
            self._orphan(e)
            return

        page = self.current.get(e.window_id)
        if page is None:
            self._orphan(e)
            return
        if page.url_id != e.url_id:
            logger.debug("Completion of url %s credited to the nearest page %s", e.url_id, page.url_id)
        page.completed = True
        if e.title is not None:
            page.title = e.title

    def close(self, window_id: int, ts: Timestamp, by: TerminatedBy, e=None):
        window = self.open_windows.pop(window_id, None)
        if window is None:
            if e is not None:
                self._orphan(e)
            return

        page = self.current.get(window_id)
        if page is not None:
            self._terminate_page(window, page, ts)
        window.end_ts = ts
        window.terminated_by = by
        if not self.open_windows:
            self.surf.end_ts = max(w.end_ts for w in self.surf.windows)
            self.surf = None

    def finish(self, last_ts: Timestamp):
        for window_id in list(self.open_windows):
            logger.warning("Window %d of %s left open, closing at %s", window_id, self.user.mac, last_ts)
            self.close(window_id, last_ts, TerminatedBy.RESOLUTION)

    def _open_page(self, window: WindowVisit, e: RawLogEntry):
        self.current[window.window_id] = PageVisit(
            next(self.ids.page),
            window.visit_id,
            window.window_id,
            e.url_id,
            e.url.partition("?")[0],
            e.ts,
            source_file=e.source_file,
        )

    def _terminate_page(self, window: WindowVisit, page: PageVisit, ts: Timestamp):
        page.end_ts = ts
        window.pages.append(page)
        del self.current[window.window_id]

    def _orphan(self, e: RawLogEntry):
        logger.debug("Orphan %s at %s", e.event.name, e.position)
        self.orphans += 1


def _clamp_overlaps(surfs: typing.List[Surf]):
    for surf, following in zip(surfs, surfs[1:]):
        limit = following.start_ts
        if surf.end_ts <= limit:
            continue
        for window in surf.windows:
            if window.terminated_by != TerminatedBy.RESOLUTION or window.end_ts <= limit:
                continue
            logger.warning("Resolved end of window %d clamped to %s", window.window_id, limit)
            window.end_ts = limit
            for page in window.pages:
                if page.end_ts > limit:
                    page.end_ts = max(limit, page.start_ts)
        surf.end_ts = max(w.end_ts for w in surf.windows)


def reconstruct_surfs(
    entries: typing.Sequence[RawLogEntry],
    resolved: typing.Dict[WindowKey, UnterminatedWindow],
    user: UserKey,
    ids: typing.Optional[IdCounter] = None,
) -> typing.Tuple[typing.List[Surf], int]:
    """Rebuild one user's surfs.

    A synthetic close for each resolved window is sequenced right after the
    window's last event and carries the resolved end instant.
    """
    ids = ids or IdCounter()
    closes = {row.last_item: row for row in resolved.values()}
    builder = _SurfBuilder(user, ids)

    for index, e in enumerate(entries):
        if e.event == EventKind.NAVIGATE_BEGIN:
            builder.navigate(e)
        elif e.event == EventKind.DOCUMENT_COMPLETE:
            builder.complete(e)
        else:
            builder.close(e.window_id, e.ts, TerminatedBy.CLOSE_EVENT, e)

        row = closes.get(index)
        if row is not None:
            builder.close(row.window_id, row.resolved_end_ts, TerminatedBy.RESOLUTION)

    if entries:
        builder.finish(entries[-1].ts)
    _clamp_overlaps(builder.surfs)
    return builder.surfs, builder.orphans


def partitions(entries: typing.Sequence[RawLogEntry]):
    for user, group in itertools.groupby(entries, key=lambda e: e.user):
        yield user, list(group)


def sessionize(
    entries: typing.Sequence[RawLogEntry],
    mode: TerminationMode = TerminationMode(DEFAULT_TERMINATION_MODE),
    rate_statistic="mean",
    reopen_gap_ms: typing.Optional[int] = DEFAULT_REOPEN_GAP_MS,
) -> Sessions:
    """Detect, resolve and reconstruct every user partition of cleaned entries."""
    ids = IdCounter()
    sessions = Sessions(mode=TerminationMode(mode))
    for user, user_entries in partitions(entries):
        table = detect_unterminated(user_entries, user, reopen_gap_ms)
        resolved = resolve_unterminated(table, mode, user_entries, rate_statistic)
        surfs, orphans = reconstruct_surfs(user_entries, resolved, user, ids)
        sessions.surfs.extend(surfs)
        sessions.unterminated.extend(resolved.values())
        sessions.orphans += orphans

    logger.info(
        "Sessionized: %d surfs, %d windows, %d pages, %d unterminated, %d orphans",
        len(sessions.surfs),
        len(sessions.windows),
        len(sessions.pages),
        len(sessions.unterminated),
        sessions.orphans,
    )
    return sessions


SURF_COLUMNS = ("surf_id", "user_id", "start_ms", "end_ms", "source_file")
WINDOW_COLUMNS = (
    "visit_id",
    "surf_id",
    "window_id",
    "user_id",
    "start_ms",
    "end_ms",
    "terminated_by",
    "source_file",
)
PAGE_COLUMNS = (
    "page_id",
    "visit_id",
    "window_id",
    "url_id",
    "url",
    "start_ms",
    "end_ms",
    "duration_ms",
    "completed",
    "title",
    "source_file",
)
UNTERMINATED_COLUMNS = (
    "window_id",
    "user_id",
    "first_item",
    "last_item",
    "last_event_ms",
    "resolved_end_ms",
)


def write_surf_tables(directory, surfs: typing.List[Surf], users, suffix="") -> None:
    user_ids = {u: i for i, u in enumerate(users)}
    windows = [w for s in surfs for w in s.windows]
    pages = [p for w in windows for p in w.pages]
    write_table(
        os.path.join(directory, "surfs%s.tsv" % suffix),
        SURF_COLUMNS,
        (
            (s.surf_id, user_ids[s.user], s.start_ts.epoch_ms, s.end_ts.epoch_ms, s.source_file)
            for s in surfs
        ),
    )
    write_table(
        os.path.join(directory, "windows%s.tsv" % suffix),
        WINDOW_COLUMNS,
        (
            (
                w.visit_id,
                w.surf_id,
                w.window_id,
                user_ids[w.user],
                w.start_ts.epoch_ms,
                w.end_ts.epoch_ms,
                w.terminated_by.value,
                w.source_file,
            )
            for w in windows
        ),
    )
    write_table(
        os.path.join(directory, "pages%s.tsv" % suffix),
        PAGE_COLUMNS,
        (
            (
                p.page_id,
                p.visit_id,
                p.window_id,
                p.url_id,
                p.url,
                p.start_ts.epoch_ms,
                p.end_ts.epoch_ms,
                p.duration_ms,
                p.completed,
                p.title,
                p.source_file,
            )
            for p in pages
        ),
    )


def read_surf_tables(directory, users, suffix="") -> typing.List[Surf]:
    surfs_path = os.path.join(directory, "surfs%s.tsv" % suffix)
    windows_path = os.path.join(directory, "windows%s.tsv" % suffix)
    pages_path = os.path.join(directory, "pages%s.tsv" % suffix)
    surf_records = read_records(surfs_path, dict.fromkeys(("surf_id", "user_id", "start_ms", "end_ms"), INT))
    window_records = read_records(
        windows_path,
        dict.fromkeys(("visit_id", "surf_id", "window_id", "user_id", "start_ms", "end_ms"), INT),
    )
    page_records = read_records(
        pages_path,
        dict(
            dict.fromkeys(("page_id", "visit_id", "window_id", "start_ms", "end_ms"), INT),
            url_id=OPTIONAL_INT,
            completed=FLAG,
        ),
    )

    surfs = {}
    with parsing(surfs_path):
        for r in surf_records:
            surf = Surf(
                r["surf_id"],
                users[r["user_id"]],
                Timestamp(r["start_ms"]),
                Timestamp(r["end_ms"]),
                source_file=r["source_file"],
            )
            surfs[surf.surf_id] = surf

    windows = {}
    with parsing(windows_path):
        for r in window_records:
            window = WindowVisit(
                r["visit_id"],
                r["window_id"],
                users[r["user_id"]],
                Timestamp(r["start_ms"]),
                r["surf_id"],
                Timestamp(r["end_ms"]),
                terminated_by=TerminatedBy(r["terminated_by"]),
                source_file=r["source_file"],
            )
            windows[window.visit_id] = window
            surfs[window.surf_id].windows.append(window)

    with parsing(pages_path):
        for r in page_records:
            page = PageVisit(
                r["page_id"],
                r["visit_id"],
                r["window_id"],
                r["url_id"],
                r["url"],
                Timestamp(r["start_ms"]),
                Timestamp(r["end_ms"]),
                completed=r["completed"],
                title=r["title"] if r["title"] != "" or r["completed"] else None,
                source_file=r["source_file"],
            )
            windows[page.visit_id].pages.append(page)

    return list(surfs.values())


def save_sessions(sessions: Sessions, users, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_users(os.path.join(directory, "users.tsv"), users)
    write_surf_tables(directory, sessions.surfs, users)
    user_ids = {u: i for i, u in enumerate(users)}
    write_table(
        os.path.join(directory, "unterminated.tsv"),
        UNTERMINATED_COLUMNS,
        (
            (
                row.window_id,
                user_ids[row.user],
                row.first_item,
                row.last_item,
                row.last_event_ts.epoch_ms,
                row.resolved_end_ts.epoch_ms,
            )
            for row in sessions.unterminated
        ),
    )
    write_table(
        os.path.join(directory, "sessionizer_summary.tsv"),
        ("mode", "orphans"),
        [(int(sessions.mode), sessions.orphans)],
    )


def load_sessions(directory) -> typing.Tuple[Sessions, typing.Tuple[UserKey, ...]]:
    users = read_users(os.path.join(directory, "users.tsv"))
    surfs = read_surf_tables(directory, users)
    unterminated_path = os.path.join(directory, "unterminated.tsv")
    records = read_records(
        unterminated_path,
        dict.fromkeys(
            ("window_id", "user_id", "first_item", "last_item", "last_event_ms", "resolved_end_ms"), INT
        ),
    )
    with parsing(unterminated_path):
        unterminated = [
            UnterminatedWindow(
                r["window_id"],
                users[r["user_id"]],
                r["first_item"],
                r["last_item"],
                Timestamp(r["last_event_ms"]),
                Timestamp(r["resolved_end_ms"]),
            )
            for r in records
        ]
    summary_path = os.path.join(directory, "sessionizer_summary.tsv")
    with parsing(summary_path):
        [summary] = read_records(summary_path, {"mode": INT, "orphans": INT})
        mode = TerminationMode(summary["mode"])
    return Sessions(surfs, unterminated, summary["orphans"], mode), users
