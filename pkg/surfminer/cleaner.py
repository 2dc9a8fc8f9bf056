import collections
from dataclasses import dataclass
import logging
import os
import re
import typing
import urllib.parse

import regex

from .constants import DEFAULT_ALLOWED_SCHEMES, DEFAULT_LOCAL_HOSTS, MAC_PATTERN, ZERO_MAC
from .exceptions import ConfigError
from .logmodel import EventKind, LogStore, RawLogEntry, UserKey, read_entries, read_users, write_entries, write_users
from .tables import INT, read_records, write_table

logger = logging.getLogger("surfminer").getChild(__name__)

_MAC_RE = re.compile(MAC_PATTERN)
_NON_LATIN_RE = regex.compile(r"[^\p{Script=Latin}\p{Script=Common}\p{Script=Inherited}]")

Entries = typing.List[RawLogEntry]


@dataclass(frozen=True)
class CleaningConfig:
    allowed_schemes: typing.Tuple[str, ...] = DEFAULT_ALLOWED_SCHEMES
    nonlatin_filter_on: bool = True
    zero_mac_invalid: bool = True
    local_hosts: typing.Tuple[str, ...] = DEFAULT_LOCAL_HOSTS

    def __post_init__(self):
        if not self.allowed_schemes:
            raise ConfigError("allowed_schemes must not be empty")


class UrlRecord(typing.NamedTuple):
    url_id: int
    base_url: str
    scheme: str
    host: str


class ParamRecord(typing.NamedTuple):
    param_id: int
    url_id: int
    raw_params: str


class CleaningReport(typing.NamedTuple):
    loaded: int = 0
    invalid_mac_removed: int = 0
    untargeted_removed: int = 0
    nonlatin_removed: int = 0
    frame_events_removed: int = 0
    orphans_removed: int = 0

    @property
    def removed(self) -> int:
        return (
            self.invalid_mac_removed
            + self.untargeted_removed
            + self.nonlatin_removed
            + self.frame_events_removed
            + self.orphans_removed
        )

    @property
    def retained(self) -> int:
        return self.loaded - self.removed

    @property
    def physical_cleaning_ratio(self) -> float:
        if self.loaded == 0:
            return 0.0
        return 100.0 * self.removed / self.loaded

    def __add__(self, other):
        return CleaningReport(*(a + b for a, b in zip(self, other)))


class CleaningResult(typing.NamedTuple):
    entries: Entries
    report: CleaningReport
    urls: typing.List[UrlRecord]
    params: typing.List[ParamRecord]
    file_reports: typing.Dict[str, CleaningReport]


def validate_mac(mac: str, zero_mac_invalid=True) -> bool:
    if not mac or _MAC_RE.match(mac) is None:
        return False
    return not (zero_mac_invalid and mac == ZERO_MAC)


def strip_params(url: str) -> typing.Tuple[str, typing.Optional[str]]:
    base, sep, params = url.partition("?")
    return base, (params if sep else None)


def base_url_of(url: str) -> str:
    return strip_params(url)[0]


def _split_invalid_mac(entries, config):
    kept, removed = [], []
    verdicts = {}
    for e in entries:
        valid = verdicts.get(e.user.mac)
        if valid is None:
            valid = verdicts[e.user.mac] = validate_mac(e.user.mac, config.zero_mac_invalid)
        (kept if valid else removed).append(e)
    return kept, removed


def _is_targeted(url: str, config: CleaningConfig) -> bool:
    try:
        parts = urllib.parse.urlsplit(url)
        host = parts.hostname or ""
    except ValueError:
        return False
    return parts.scheme.lower() in config.allowed_schemes and host not in config.local_hosts


def _split_untargeted(entries, config):
    kept, removed = [], []
    for e in entries:
        if e.event == EventKind.WINDOW_CLOSE or _is_targeted(e.url, config):
            kept.append(e)
        else:
            removed.append(e)
    return kept, removed


def has_nonlatin(text: typing.Optional[str]) -> bool:
    return bool(text) and _NON_LATIN_RE.search(text) is not None


def _split_nonlatin(entries, config):
    if not config.nonlatin_filter_on:
        return list(entries), []

    kept, removed = [], []
    for e in entries:
        if e.event != EventKind.WINDOW_CLOSE and (
            has_nonlatin(e.title) or has_nonlatin(urllib.parse.unquote(e.url))
        ):
            removed.append(e)
        else:
            kept.append(e)
    return kept, removed


class _WindowEpisodes:
    """Frame-episode tracker for one browser window.

    An episode opens at a NavigateBegin (the anchor) and closes at the first
    DocumentComplete for the anchor's base URL, or at the last
    DocumentComplete seen when a later NavigateBegin arrives.
    """

    def __init__(self):
        self.removed: typing.List[int] = []
        self.frameset_title = None
        self.frameset_base = None
        self._reset()

    def _reset(self):
        self.anchor = None
        self.members = []
        self.last_dc = None

    def feed(self, index: int, entry: RawLogEntry):
        if self.anchor is None:
            if entry.event == EventKind.NAVIGATE_BEGIN:
                self.anchor = (index, entry)
            return  # a stray DocumentComplete is left to the orphan sweep

        if entry.event == EventKind.NAVIGATE_BEGIN:
            if self.last_dc is not None:
                self._finish()
                self.anchor = (index, entry)
            else:
                self.members.append((index, entry))
            return

        self.members.append((index, entry))
        self.last_dc = (index, entry)
        if base_url_of(entry.url) == base_url_of(self.anchor[1].url):
            self._finish()

    def close(self):
        self.end()
        self.frameset_title = self.frameset_base = None

    def end(self):
        if self.anchor is not None and self.last_dc is not None:
            self._finish()
        self._reset()

    def _finish(self):
        terminal_index, terminal = self.last_dc
        anchor_index, anchor = self.anchor
        anchor_base = base_url_of(anchor.url)
        intervening = [i for i, _ in self.members if i != terminal_index]

        if (
            self.frameset_title
            and terminal.frame_count
            and terminal.title == self.frameset_title
            and anchor_base != self.frameset_base
        ):
            logger.debug("Subsidiary episode at %s", anchor.position)
            self.removed.append(anchor_index)
            self.removed.extend(i for i, _ in self.members)
        elif terminal.frame_count:
            uncorroborated = sum(
                1
                for i, e in self.members
                if e.event == EventKind.DOCUMENT_COMPLETE
                and i != terminal_index
                and e.title != terminal.title
            )
            logger.debug(
                "Frameset at %s: %d frames, %d events removed, %d titled differently",
                anchor.position,
                terminal.frame_count,
                len(intervening),
                uncorroborated,
            )
            self.removed.extend(intervening)
            self.frameset_title = terminal.title
            self.frameset_base = anchor_base
        else:
            self.frameset_title = self.frameset_base = None
        self._reset()


def _split_frame_events(entries, config=None):
    trackers: typing.Dict[typing.Tuple[UserKey, int], _WindowEpisodes] = {}
    for index, e in enumerate(entries):
        tracker = trackers.setdefault((e.user, e.window_id), _WindowEpisodes())
        if e.event == EventKind.WINDOW_CLOSE:
            tracker.close()
        else:
            tracker.feed(index, e)

    removed_indices = set()
    for tracker in trackers.values():
        tracker.end()
        removed_indices.update(tracker.removed)

    kept = [e for i, e in enumerate(entries) if i not in removed_indices]
    removed = [e for i, e in enumerate(entries) if i in removed_indices]
    return kept, removed


def _split_orphans(entries, config=None):
    open_windows = set()
    kept, removed = [], []
    for e in entries:
        key = (e.user, e.window_id)
        if e.event == EventKind.NAVIGATE_BEGIN:
            open_windows.add(key)
        elif key not in open_windows:
            logger.debug("Orphan %s event at %s", e.event.name, e.position)
            removed.append(e)
            continue
        elif e.event == EventKind.WINDOW_CLOSE:
            open_windows.discard(key)
        kept.append(e)
    return kept, removed


def filter_invalid_mac(entries, config: CleaningConfig = CleaningConfig()):
    kept, removed = _split_invalid_mac(entries, config)
    return kept, len(removed)


def filter_untargeted(entries, config: CleaningConfig = CleaningConfig()):
    kept, removed = _split_untargeted(entries, config)
    return kept, len(removed)


def filter_nonlatin(entries, config: CleaningConfig = CleaningConfig()):
    kept, removed = _split_nonlatin(entries, config)
    return kept, len(removed)


def remove_frame_events(entries):
    kept, removed = _split_frame_events(entries)
    return kept, len(removed)


def sweep_orphans(entries):
    kept, removed = _split_orphans(entries)
    return kept, len(removed)


def encode_urls(entries):
    """Number base URLs in first-seen order and move parameters to their own table."""
    url_ids: typing.Dict[str, int] = {}
    urls: typing.List[UrlRecord] = []
    params: typing.List[ParamRecord] = []
    recoded = []
    for e in entries:
        if e.url is None:
            recoded.append(e)
            continue

        base, raw_params = strip_params(e.url)
        url_id = url_ids.get(base)
        if url_id is None:
            url_id = url_ids[base] = len(urls)
            try:
                parts = urllib.parse.urlsplit(base)
                scheme, host = parts.scheme, parts.hostname or ""
            except ValueError:
                scheme, host = "", ""
            urls.append(UrlRecord(url_id, base, scheme, host))
        if raw_params is not None:
            params.append(ParamRecord(len(params), url_id, raw_params))
        recoded.append(e._replace(url_id=url_id))

    return recoded, urls, params


_STAGES = (
    ("invalid_mac_removed", _split_invalid_mac),
    ("untargeted_removed", _split_untargeted),
    ("nonlatin_removed", _split_nonlatin),
    ("frame_events_removed", _split_frame_events),
    ("orphans_removed", _split_orphans),
)


def run_cleaning(store, config: CleaningConfig = CleaningConfig()) -> CleaningResult:
    """Apply the cleaning stages in their fixed order.

    ``store`` is a :class:`LogStore` or a per-user ordered entry list. Each
    removed entry is attributed to the first stage that drops it.
    """
    entries = list(store.entries if isinstance(store, LogStore) else store)

    per_file = collections.defaultdict(collections.Counter)
    for e in entries:
        per_file[e.source_file]["loaded"] += 1

    counts = {"loaded": len(entries)}
    for name, stage in _STAGES:
        entries, removed = stage(entries, config)
        counts[name] = len(removed)
        for e in removed:
            per_file[e.source_file][name] += 1
        logger.debug("Cleaning stage %s removed %d", name, len(removed))

    entries, urls, params = encode_urls(entries)
    report = CleaningReport(**counts)
    file_reports = {
        file_id: CleaningReport(**dict(counter)) for file_id, counter in sorted(per_file.items())
    }
    logger.info(
        "Cleaning: %d loaded, %d retained, ratio %.2f%%, %d urls",
        report.loaded,
        report.retained,
        report.physical_cleaning_ratio,
        len(urls),
    )
    return CleaningResult(entries, report, urls, params, file_reports)


REPORT_COLUMNS = ("scope",) + CleaningReport._fields + ("retained", "physical_cleaning_ratio")


def _report_row(scope, report: CleaningReport):
    return (scope,) + tuple(report) + (report.retained, "%.2f" % report.physical_cleaning_ratio)


def save_cleaning(result: CleaningResult, users, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_users(os.path.join(directory, "users.tsv"), users)
    write_entries(
        os.path.join(directory, "cleaned_entries.tsv"), result.entries, users, with_url_id=True
    )
    write_table(os.path.join(directory, "urls.tsv"), UrlRecord._fields, result.urls)
    write_table(os.path.join(directory, "params.tsv"), ParamRecord._fields, result.params)
    rows = [_report_row(f, r) for f, r in result.file_reports.items()]
    rows.append(_report_row("*", result.report))
    write_table(os.path.join(directory, "cleaning_report.tsv"), REPORT_COLUMNS, rows)


def load_urls(directory) -> typing.List[UrlRecord]:
    return [
        UrlRecord(r["url_id"], r["base_url"], r["scheme"], r["host"])
        for r in read_records(os.path.join(directory, "urls.tsv"), {"url_id": INT})
    ]


def load_cleaning(directory) -> typing.Tuple[CleaningResult, typing.Tuple[UserKey, ...]]:
    users = read_users(os.path.join(directory, "users.tsv"))
    entries = read_entries(os.path.join(directory, "cleaned_entries.tsv"), users, with_url_id=True)
    urls = load_urls(directory)
    params = [
        ParamRecord(r["param_id"], r["url_id"], r["raw_params"])
        for r in read_records(os.path.join(directory, "params.tsv"), {"param_id": INT, "url_id": INT})
    ]
    report = CleaningReport()
    file_reports = {}
    records = read_records(
        os.path.join(directory, "cleaning_report.tsv"), dict.fromkeys(CleaningReport._fields, INT)
    )
    for r in records:
        parsed = CleaningReport(*(r[name] for name in CleaningReport._fields))
        if r["scope"] == "*":
            report = parsed
        else:
            file_reports[r["scope"]] = parsed
    return CleaningResult(entries, report, urls, params, file_reports), users
