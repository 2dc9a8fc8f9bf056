import collections
import logging
import typing
import urllib.parse

from .cleaner import CleaningReport
from .logmodel import LogStore
from .refiner import Refined
from .sessionizer import PageVisit, Sessions, TerminatedBy
from .tables import write_table

logger = logging.getLogger("surfminer").getChild(__name__)

CONSOLIDATED = "Consolidated log"

BY_FREQUENCY = "frequency"
BY_DURATION = "duration"


class StatRow(typing.NamedTuple):
    label: str
    values: typing.Tuple[typing.Union[int, float, None], ...]
    is_ratio: bool = False


class LogCharacteristics(typing.NamedTuple):
    file_id: str
    users: int
    lines: int
    ratio: float


class SiteRank(typing.NamedTuple):
    site: str
    visits: int
    duration_ms: int


def first_level(url: str) -> str:
    """scheme://host of a URL."""
    try:
        parts = urllib.parse.urlsplit(url)
    except ValueError:
        return url
    if not parts.scheme or not parts.netloc:
        return url
    return "%s://%s" % (parts.scheme, parts.netloc)


def top_sites(pages: typing.Iterable[PageVisit], n: int, by: str = BY_FREQUENCY) -> typing.List[SiteRank]:
    visits = collections.Counter()
    durations = collections.Counter()
    for page in pages:
        site = first_level(page.url)
        visits[site] += 1
        durations[site] += page.duration_ms

    if by == BY_FREQUENCY:
        key = lambda site: (-visits[site], site)  # noqa: E731
    elif by == BY_DURATION:
        key = lambda site: (-durations[site], site)  # noqa: E731
    else:
        raise ValueError("Unknown ranking %r" % by)
    return [SiteRank(site, visits[site], durations[site]) for site in sorted(visits, key=key)[:n]]


def log_characteristics(store: LogStore) -> typing.List[LogCharacteristics]:
    users = collections.defaultdict(set)
    for entry in store.entries:
        users[entry.source_file].add(entry.user)
    total = sum(f.line_count for f in store.files)
    return [
        LogCharacteristics(
            f.file_id, len(users[f.file_id]), f.line_count, f.line_count / total if total else 0.0
        )
        for f in store.files
    ]


def _ratio(part, whole) -> float:
    return 100.0 * part / whole if whole else 0.0


def _column(
    cleaning: CleaningReport,
    rejected: int,
    unterminated: int,
    surfs: int,
    removed: typing.Mapping[str, int],
):
    return {
        "loaded": cleaning.loaded,
        "rejected": rejected,
        "invalid_mac": cleaning.invalid_mac_removed,
        "untargeted": cleaning.untargeted_removed,
        "nonlatin": cleaning.nonlatin_removed,
        "frames": cleaning.frame_events_removed,
        "orphans": cleaning.orphans_removed,
        "physical": cleaning.physical_cleaning_ratio,
        "unterminated": unterminated,
        "surfs": surfs,
        "aberrant_surfs": removed.get("surfs", 0),
        "aberrant_pages": removed.get("pages", 0),
        "aberrant_windows": removed.get("windows", 0),
        "error_pages": removed.get("error_pages", 0),
        "removed_surfs": _ratio(surfs - removed.get("kept_surfs", surfs), surfs),
    }


def _layout(min_ms: int):
    return (
        ("Loading (number of lines)", "loaded", False),
        ("Rejected lines", "rejected", False),
        ("Useless items filtering", None, False),
        ("Invalid MAC", "invalid_mac", False),
        ("Untargeted URL", "untargeted", False),
        ("Non-Latin items", "nonlatin", False),
        ("Removal of frame events", "frames", False),
        ("Orphan items", "orphans", False),
        ("Ratio of physical cleaning", "physical", True),
        ("Unterminated windows", "unterminated", False),
        ("Reconstructed surfs", "surfs", False),
        ("Removal of aberrant items (MinTime=%g second)" % (min_ms / 1000.0), None, False),
        ("surfs", "aberrant_surfs", False),
        ("Pages", "aberrant_pages", False),
        ("Windows", "aberrant_windows", False),
        ("Error pages", "error_pages", False),
        ("Ratio of removed surfs", "removed_surfs", True),
    )


def report_stats(
    store: LogStore,
    cleaning_reports: typing.Mapping[str, CleaningReport],
    sessions: Sessions,
    refined: Refined,
    min_ms: int,
) -> typing.Tuple[typing.List[str], typing.List[StatRow]]:
    """Per-log and consolidated pre-processing indices.

    Returns the column names (one per log plus the consolidated log) and the
    rows in report order. Counts of the consolidated column are the sums of
    the per-log columns; ratios are recomputed from those sums.
    """
    file_ids = [f.file_id for f in store.files]
    rejected = store.rejected

    unterminated = collections.Counter()
    surfs = collections.Counter()
    for surf in sessions.surfs:
        surfs[surf.source_file] += 1
        for window in surf.windows:
            if window.terminated_by == TerminatedBy.RESOLUTION:
                unterminated[window.source_file] += 1
    kept = collections.Counter(s.source_file for s in refined.surfs)

    columns = []
    for file_id in file_ids:
        removed = dict(refined.file_counts.get(file_id, {}))
        removed["kept_surfs"] = kept[file_id]
        columns.append(
            _column(
                cleaning_reports.get(file_id, CleaningReport()),
                rejected.get(file_id, 0),
                unterminated[file_id],
                surfs[file_id],
                removed,
            )
        )

    total_cleaning = sum(
        (cleaning_reports.get(f, CleaningReport()) for f in file_ids), CleaningReport()
    )
    total_removed = collections.Counter()
    for file_id in file_ids:
        total_removed.update(refined.file_counts.get(file_id, {}))
    total_removed["kept_surfs"] = sum(kept[f] for f in file_ids)
    columns.append(
        _column(
            total_cleaning,
            sum(rejected.get(f, 0) for f in file_ids),
            sum(unterminated[f] for f in file_ids),
            sum(surfs[f] for f in file_ids),
            total_removed,
        )
    )

    rows = []
    for label, key, is_ratio in _layout(min_ms):
        values = tuple(None if key is None else column[key] for column in columns)
        rows.append(StatRow(label, values, is_ratio))
    return file_ids + [CONSOLIDATED], rows


def _format_value(value, is_ratio) -> str:
    if value is None:
        return ""
    if is_ratio:
        return "%.2f" % value
    return str(value)


def stats_records(columns, rows: typing.Sequence[StatRow]):
    for row in rows:
        yield (row.label,) + tuple(_format_value(v, row.is_ratio) for v in row.values)


def save_stats(path, columns, rows) -> None:
    write_table(path, ("Operation",) + tuple(columns), stats_records(columns, rows))


def render_table(header, body) -> str:
    table = [list(header)] + [list(r) for r in body]
    widths = [max(len(str(r[i])) for r in table) for i in range(len(header))]
    lines = []
    for index, r in enumerate(table):
        cells = [str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(r)]
        lines.append("  ".join(cells).rstrip())
        if index == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_stats(columns, rows) -> str:
    return render_table(("Operation",) + tuple(columns), list(stats_records(columns, rows)))


def render_log_characteristics(characteristics: typing.Sequence[LogCharacteristics]) -> str:
    body = [(c.file_id, c.users, c.lines, "%.2f" % c.ratio) for c in characteristics]
    body.append(("Total", sum(c.users for c in characteristics), sum(c.lines for c in characteristics), ""))
    return render_table(("Log", "User number", "Line number", "Ratio in global log"), body)


def save_log_characteristics(path, characteristics) -> None:
    write_table(
        path,
        ("log", "users", "lines", "ratio"),
        ((c.file_id, c.users, c.lines, "%.2f" % c.ratio) for c in characteristics),
    )


def render_top_sites(by_frequency: typing.Sequence[SiteRank], by_duration: typing.Sequence[SiteRank]) -> str:
    depth = max(len(by_frequency), len(by_duration))
    body = []
    for i in range(depth):
        body.append(
            (
                str(i + 1),
                by_frequency[i].site if i < len(by_frequency) else "",
                by_duration[i].site if i < len(by_duration) else "",
            )
        )
    return render_table(("#", "Visit frequency", "Visit duration"), body)


def save_top_sites(path, by_frequency, by_duration) -> None:
    rows = [(BY_FREQUENCY, i + 1) + tuple(r) for i, r in enumerate(by_frequency)]
    rows += [(BY_DURATION, i + 1) + tuple(r) for i, r in enumerate(by_duration)]
    write_table(path, ("ranking", "rank") + SiteRank._fields, rows)


def render_cleaning_summary(report: CleaningReport) -> str:
    """Console summary shown after the cleaning stage."""
    return (
        "%d entries loaded, %d retained, %d removed "
        "(invalid MAC %d, untargeted %d, non-Latin %d, frames %d, orphans %d): "
        "physical cleaning %.2f%%"
        % (
            report.loaded,
            report.retained,
            report.removed,
            report.invalid_mac_removed,
            report.untargeted_removed,
            report.nonlatin_removed,
            report.frame_events_removed,
            report.orphans_removed,
            report.physical_cleaning_ratio,
        )
    )
