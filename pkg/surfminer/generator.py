"""Synthetic collector logs with a ground-truth sidecar.

Surfs follow nine archetypes (start period x first two page categories).
Anomalies are injected at known places and counted so that every stage of
the pipeline can be checked against exact expectations.
"""
from dataclasses import asdict, dataclass, field
import heapq
import json
import logging
import os
import random
import typing
import urllib.parse

from .constants import DEFAULT_PERIOD_HOURS
from .exceptions import ConfigError, IoFailure
from .features import PeriodBucket
from .logmodel import EventKind, RawLogEntry, Timestamp, UserKey, format_entry
from .refiner import Category, CategoryRule, ExactUrl, TitleSimilar, save_rules

logger = logging.getLogger("surfminer").getChild(__name__)

GROUND_TRUTH_NAME = "ground_truth.json"
RULES_NAME = "rules.tsv"

_DAY_MS = 86400000
_MIN_SURF_GAP_MS = 5 * 60000


class Site(typing.NamedTuple):
    url: str
    title: str
    category: Category
    query: typing.Optional[str] = None  # parameter template, %s is a word


SITES = (
    Site("http://www.findit.test", "findit", Category.SEARCH),
    Site("http://www.findit.test/search", "findit - results", Category.SEARCH, "hl=fr&q=%s"),
    Site("http://search.lookup.test/results", "Lookup: web results", Category.SEARCH, "query=%s"),
    Site("http://mail.postbox.test/inbox", "Postbox - Inbox", Category.MAIL),
    Site("http://mail.postbox.test/compose", "Postbox - New message", Category.MAIL),
    Site("http://www.webletters.test/mail", "Webletters mail", Category.MAIL, "folder=%s"),
    Site("http://www.playfield.test", "Playfield free games", Category.GAMES),
    Site("http://www.playfield.test/arcade/puzzle", "Playfield arcade: puzzle", Category.GAMES),
    Site("http://games.tilebox.test", "Tilebox games", Category.GAMES),
    Site("http://forum.devtalk.test/thread", "Devtalk forum thread", Category.FORUMS, "t=%s"),
    Site("http://www.boards.test/topic", "Boards - topic", Category.FORUMS),
    Site("http://www.filestore.test/get", "Filestore download", Category.DOWNLOADS, "id=%s"),
    Site("http://dl.softshelf.test/pkg", "Softshelf packages", Category.DOWNLOADS),
    Site("http://docs.codebase.test/api", "Codebase API reference", Category.DEVELOPMENT),
    Site("http://www.codebase.test/tutorial", "Codebase tutorial", Category.DEVELOPMENT),
    Site("http://www.dailywire.test", "Daily Wire", Category.NEWS),
    Site("http://www.dailywire.test/world", "Daily Wire - World", Category.NEWS),
    Site("http://news.morningpost.test", "Morning Post", Category.NEWS),
    Site("http://papers.scholarly.test/view", "Scholarly - article view", Category.RESEARCH, "doc=%s"),
    Site("http://www.libraryhub.test/catalog", "Library hub catalog", Category.RESEARCH),
    Site("ftp://ftp.archive.test/pub", "ftp://ftp.archive.test/pub", Category.DOWNLOADS),
    Site("http://www.randomblog.test/post", "Random thoughts blog", Category.UNCLASSIFIED),
    Site("http://www.photostream.test/album", "Photostream album", Category.UNCLASSIFIED),
)

# categorized by title similarity instead of an exact URL rule
TITLE_RULE_SITES = ("http://news.morningpost.test",)

ARCHETYPE_PAIRS = (
    (Category.SEARCH, Category.MAIL),
    (Category.GAMES, Category.DOWNLOADS),
    (Category.NEWS, Category.RESEARCH),
)

ARCHETYPES = tuple((period, pair) for period in PeriodBucket for pair in ARCHETYPE_PAIRS)

QUERY_WORDS = ("meteo", "horaires", "recette", "python", "football", "cours", "musique", "voyage")

UNTARGETED_URLS = (
    "about:blank",
    "file:///C:/Documents/notes.html",
    "res://ieframe.dll/navcancl.htm",
    "http://localhost/intranet/index.html",
)

NONLATIN_PAGES = (
    ("http://www.akhbar.test/" + urllib.parse.quote("أخبار"), "أخبار اليوم"),
    ("http://www.novosti.test/" + urllib.parse.quote("новости"), "Новости дня"),
    ("http://www.xinwen.test/" + urllib.parse.quote("新闻"), "今日新闻"),
)

ERROR_TITLES = ("404 Not Found", "Erreur 404 - page introuvable", "Server Error in application")

INVALID_MACS = ("00-00-00-00-00-00", "00-0a-cd-01-c6-69", "00-0A-CD-01-C6")


@dataclass(frozen=True)
class GeneratorConfig:
    users: int = 3
    files: int = 2
    surfs_per_user: typing.Tuple[int, int] = (4, 8)
    pages_per_window: typing.Tuple[int, int] = (3, 6)
    secondary_pages: typing.Tuple[int, int] = (1, 3)
    secondary_window_rate: float = 0.25
    invalid_mac_rate: float = 0.1
    untargeted_rate: float = 0.1
    nonlatin_rate: float = 0.05
    frameset_rate: float = 0.1
    frame_count: int = 3
    crash_rate: float = 0.1
    skew_rate: float = 0.05
    short_visit_rate: float = 0.1
    slow_visit_rate: float = 0.02
    error_page_rate: float = 0.03
    orphan_rate: float = 0.05
    start_date: typing.Tuple[int, int, int] = (5, 5, 2008)  # day, month, year
    period_hours: typing.Tuple[int, int, int] = DEFAULT_PERIOD_HOURS
    file_prefix: str = "log"

    def __post_init__(self):
        if self.users < 1 or self.files < 1:
            raise ConfigError("users and files must be positive")
        for name in ("surfs_per_user", "pages_per_window", "secondary_pages"):
            low, high = getattr(self, name)
            if not 1 <= low <= high:
                raise ConfigError("%s must be a range 1 <= low <= high" % name)
        for name in (
            "secondary_window_rate",
            "invalid_mac_rate",
            "untargeted_rate",
            "nonlatin_rate",
            "frameset_rate",
            "crash_rate",
            "skew_rate",
            "short_visit_rate",
            "slow_visit_rate",
            "error_page_rate",
            "orphan_rate",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError("%s must lie in [0, 1]" % name)
        if not 1 <= self.frame_count <= 100:
            raise ConfigError("frame_count must lie in [1, 100]")
        morning, afternoon, night = self.period_hours
        if not 0 <= morning < afternoon < night <= 24 or night - morning >= 24:
            raise ConfigError("period_hours must leave every period non-empty")
        if self.short_visit_rate + self.slow_visit_rate + self.error_page_rate > 1.0:
            raise ConfigError("page anomaly rates add up to more than 1")

    @classmethod
    def without_anomalies(cls, **kwargs) -> "GeneratorConfig":
        rates = dict(
            invalid_mac_rate=0.0,
            untargeted_rate=0.0,
            nonlatin_rate=0.0,
            frameset_rate=0.0,
            crash_rate=0.0,
            skew_rate=0.0,
            short_visit_rate=0.0,
            slow_visit_rate=0.0,
            error_page_rate=0.0,
            orphan_rate=0.0,
        )
        rates.update(kwargs)
        return cls(**rates)


COUNT_NAMES = (
    "entries",
    "invalid_mac",
    "untargeted",
    "nonlatin",
    "frame_events",
    "framesets",
    "orphans",
    "crashes",
    "skews",
    "surfs",
    "windows",
    "pages",
)


@dataclass
class GroundTruth:
    seed: int
    counts: typing.Dict[str, int]
    file_counts: typing.Dict[str, typing.Dict[str, int]]
    files: typing.Dict[str, typing.Dict[str, int]]
    surfs: typing.List[dict]
    sites: typing.Dict[str, str]
    config: typing.Dict[str, typing.Any] = field(default_factory=dict)

    @property
    def windows(self) -> typing.List[dict]:
        return [w for s in self.surfs for w in s["windows"]]

    @property
    def pages(self) -> typing.List[dict]:
        return [p for w in self.windows for p in w["pages"]]

    def save(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(asdict(self), f, indent=1, sort_keys=True, ensure_ascii=False)
                f.write("\n")
        except OSError as e:
            raise IoFailure("Failed to write ground truth %s: %s" % (path, e)) from e

    @classmethod
    def load(cls, path) -> "GroundTruth":
        try:
            with open(path, encoding="utf-8") as f:
                return cls(**json.load(f))
        except (OSError, ValueError) as e:
            raise IoFailure("Failed to read ground truth %s: %s" % (path, e)) from e


class _Page:
    __slots__ = ("url", "base", "title", "category", "kind", "frameset", "start", "end", "nb")

    def __init__(self, url, base, title, category, kind="normal"):
        self.url = url
        self.base = base
        self.title = title
        self.category = category
        self.kind = kind
        self.frameset = False
        self.start = self.end = None
        self.nb = None

    def truth(self) -> dict:
        return {
            "url": self.url,
            "base_url": self.base,
            "title": self.title,
            "category": self.category.label,
            "kind": self.kind,
            "frameset": self.frameset,
            "start_ms": self.start,
            "end_ms": self.end,
            "duration_ms": self.end - self.start,
        }


class _Window:
    def __init__(self, window_id, start):
        self.window_id = window_id
        self.start = start
        self.end = None
        self.crashed = False
        self.pages: typing.List[_Page] = []
        self.events: typing.List[RawLogEntry] = []

    def truth(self) -> dict:
        return {
            "window_id": self.window_id,
            "start_ms": self.start,
            "end_ms": self.end,
            "crashed": self.crashed,
            "pages": [p.truth() for p in self.pages],
        }


class _Generator:
    def __init__(self, config: GeneratorConfig, seed: int):
        self.config = config
        self.rng = random.Random(seed)
        self.seed = seed
        self.counts = {name: 0 for name in COUNT_NAMES}
        self.file_counts: typing.Dict[str, typing.Dict[str, int]] = {}
        self.sequence = 0
        self.day0 = Timestamp.from_parts(*config.start_date).epoch_ms

    def _count(self, file_id, name, n=1):
        self.counts[name] += n
        self.file_counts[file_id][name] += n

    def _entry(self, user, file_id, ms, window_id, event, url=None, title=None, frames=None):
        self.sequence += 1
        return RawLogEntry(
            user,
            Timestamp(ms),
            window_id,
            event,
            file_id,
            self.sequence,
            url=url,
            title=title if event == EventKind.DOCUMENT_COMPLETE else None,
            frame_count=(frames or 0) if event == EventKind.DOCUMENT_COMPLETE else None,
        )

    def _user(self, index) -> UserKey:
        octets = [0x00, 0x0A + index % 200] + [self.rng.randint(0, 255) for _ in range(4)]
        mac = "-".join("%02X" % o for o in octets)
        letters = "abcdefghijklmnopqrstuvwxyzüçéğŷ"
        login = "".join(self.rng.choice(letters) for _ in range(self.rng.randint(5, 9)))
        return UserKey(mac, login.capitalize())

    def _pick_site(self, category=None, exclude=None) -> Site:
        pool = [s for s in SITES if (category is None or s.category == category) and s.url != exclude]
        return self.rng.choice(pool)

    def _page(self, category=None, exclude=None, anomalies=False) -> _Page:
        site = self._pick_site(category, exclude)
        url = site.url
        if site.query:
            url = "%s?%s" % (site.url, site.query % self.rng.choice(QUERY_WORDS))
        page = _Page(url, site.url, site.title, site.category)
        if not anomalies:
            return page

        draw = self.rng.random()
        config = self.config
        if draw < config.short_visit_rate:
            page.kind = "short"
        elif draw < config.short_visit_rate + config.slow_visit_rate:
            page.kind = "slow"
        elif draw < config.short_visit_rate + config.slow_visit_rate + config.error_page_rate:
            page.kind = "error"
            page.base = page.url = "%s/missing-%d.html" % (site.url, self.rng.randint(1, 99))
            page.title = self.rng.choice(ERROR_TITLES)
            page.category = Category.UNCLASSIFIED
        return page

    def _dwell(self, page: _Page) -> int:
        if page.kind == "short":
            return self.rng.randint(2000, 15000)
        if page.kind == "slow":
            return self.rng.randint(1900000, 3600000)
        return self.rng.randint(25000, 600000)

    def _plan(self, n, first=(), exclude=None, anomaly_from=0) -> typing.List[_Page]:
        pages = []
        for i in range(n):
            category = first[i] if i < len(first) else None
            page = self._page(category, exclude, anomalies=i >= anomaly_from)
            pages.append(page)
            exclude = page.base
        return pages

    def _emit_page(self, user, file_id, window: _Window, page: _Page, t, load):
        """NavigateBegin and DocumentComplete of one page, frames included."""
        config = self.config
        page.start = t
        nb = self._entry(user, file_id, t, window.window_id, EventKind.NAVIGATE_BEGIN, page.url)
        page.nb = nb
        window.events.append(nb)
        if page.kind != "error" and self.rng.random() < config.frameset_rate:
            n = config.frame_count
            page.frameset = True
            frames = ["%s/frame%d.html" % (page.base, i + 1) for i in range(n)]
            for i, frame in enumerate(frames):
                window.events.append(
                    self._entry(user, file_id, t + i + 1, window.window_id, EventKind.NAVIGATE_BEGIN, frame)
                )
            for i, frame in enumerate(frames):
                window.events.append(
                    self._entry(
                        user,
                        file_id,
                        t + load - n + i,
                        window.window_id,
                        EventKind.DOCUMENT_COMPLETE,
                        frame,
                        page.title,
                    )
                )
            self._count(file_id, "frame_events", 2 * n)
            self._count(file_id, "framesets")
        window.events.append(
            self._entry(
                user,
                file_id,
                t + load,
                window.window_id,
                EventKind.DOCUMENT_COMPLETE,
                page.url,
                page.title,
                config.frame_count if page.frameset else 0,
            )
        )

    def _emit_noise_pair(self, user, file_id, window: _Window, after, before):
        """Untargeted or non-Latin NavigateBegin/DocumentComplete between two pages."""
        config = self.config
        step = max((before - after) // 3, 1)
        draw = self.rng.random()
        if draw < config.untargeted_rate:
            url, title, name = self.rng.choice(UNTARGETED_URLS), "", "untargeted"
        elif draw < config.untargeted_rate + config.nonlatin_rate:
            (url, title), name = self.rng.choice(NONLATIN_PAGES), "nonlatin"
        else:
            return
        window.events.append(
            self._entry(user, file_id, after + step, window.window_id, EventKind.NAVIGATE_BEGIN, url)
        )
        window.events.append(
            self._entry(
                user, file_id, after + 2 * step, window.window_id, EventKind.DOCUMENT_COMPLETE, url, title
            )
        )
        self._count(file_id, name, 2)

    def _window(self, user, file_id, window_id, start, pages, crash=False, inner=None) -> _Window:
        """Lay out a window's pages from ``start``.

        ``inner(index, dc_ms)`` may open a nested window during page ``index``
        and returns the instant the next page must not precede.
        """
        window = _Window(window_id, start)
        t = start
        for i, page in enumerate(pages):
            dwell = self._dwell(page)
            load = self.rng.randint(max(100, 2 * self.config.frame_count + 2), min(1500, dwell // 2))
            self._emit_page(user, file_id, window, page, t, load)
            window.pages.append(page)
            if inner is not None:
                not_before = inner(i, t + load)
                if not_before is not None and t + dwell < not_before:
                    dwell = not_before - t
            last = i == len(pages) - 1
            if last and crash:
                page.end = t + load
                self._emit_noise_pair(user, file_id, window, t + load, t + load + 3000)
                break
            self._emit_noise_pair(user, file_id, window, t + load, t + dwell)
            page.end = t + dwell
            t += dwell

        if crash:
            window.crashed = True
            window.end = window.pages[-1].end
            self._count(file_id, "crashes")
        else:
            window.end = t
            window.events.append(self._entry(user, file_id, t, window_id, EventKind.WINDOW_CLOSE))
        return window

    def _skew(self, window: _Window) -> int:
        """Record one NavigateBegin early so the previous page gets a negative duration."""
        pages = window.pages
        k = self.rng.randint(3, len(pages) - 1)
        previous = pages[k - 1]
        extra = min(self.rng.randint(1000, 5000), (previous.start - window.start) // 2)
        delta = pages[k].start - previous.start + extra
        index = next(i for i, e in enumerate(window.events) if e is pages[k].nb)
        window.events[index:] = [
            e._replace(ts=Timestamp(e.ts.epoch_ms - delta)) for e in window.events[index:]
        ]
        previous.end -= delta
        previous.kind = "negative"
        for page in pages[k:]:
            page.start -= delta
            page.end -= delta
        window.end -= delta
        return delta

    def _surf_start(self, not_before, period: PeriodBucket) -> int:
        morning, afternoon, night = self.config.period_hours
        bounds = {
            PeriodBucket.M: (morning, afternoon),
            PeriodBucket.A: (afternoon, night),
            PeriodBucket.N: (night, morning + 24),
        }[period]
        day = max(0, (not_before - self.day0) // _DAY_MS)
        while True:
            hour = self.rng.randint(bounds[0], bounds[1] - 1)
            start = (
                self.day0
                + day * _DAY_MS
                + hour * 3600000
                + self.rng.randint(0, 3599) * 1000
                + self.rng.randint(0, 999)
            )
            if start >= not_before + _MIN_SURF_GAP_MS:
                return start
            day += 1

    def _surf(self, user, file_id, window_ids, not_before, archetype_index) -> typing.Tuple[dict, list]:
        config = self.config
        period, pair = ARCHETYPES[archetype_index]
        start = self._surf_start(not_before, period)
        n0 = self.rng.randint(*config.pages_per_window)
        pages = self._plan(n0, first=pair, anomaly_from=2)

        crash = self.rng.random() < config.crash_rate
        nested = []
        secondary = n0 >= 3 and self.rng.random() < config.secondary_window_rate
        if secondary:
            opens_during = self.rng.randint(1, n0 - 2)

            def inner(index, dc_ms):
                if index != opens_during:
                    return None
                sub_pages = self._plan(self.rng.randint(*config.secondary_pages), anomaly_from=0)
                sub = self._window(
                    user, file_id, next(window_ids), dc_ms + self.rng.randint(500, 5000), sub_pages
                )
                nested.append(sub)
                return sub.end + self.rng.randint(1000, 10000)

        else:
            inner = None

        main = self._window(user, file_id, next(window_ids), start, pages, crash, inner)
        windows = [main] + nested

        skewed = 0
        if not crash and not nested and n0 >= 4 and self.rng.random() < config.skew_rate:
            skewed = self._skew(main)
            self._count(file_id, "skews")

        events = main.events
        if nested:
            order = {id(e): i for i, e in enumerate(e for w in windows for e in w.events)}
            events = sorted(
                (e for w in windows for e in w.events), key=lambda e: (e.ts.epoch_ms, order[id(e)])
            )

        self._count(file_id, "surfs")
        self._count(file_id, "windows", len(windows))
        self._count(file_id, "pages", sum(len(w.pages) for w in windows))
        truth = {
            "user": [user.mac, user.login_cipher],
            "file": file_id,
            "archetype": archetype_index,
            "period": period.name,
            "categories": [c.label for c in pair],
            "start_ms": start,
            "end_ms": max(w.end for w in windows),
            "crashed": crash,
            "skew_ms": skewed,
            "windows": [w.truth() for w in windows],
        }
        return truth, events

    def _noise_line(self, file_id, ms) -> RawLogEntry:
        mac = self.rng.choice(INVALID_MACS)
        site = self._pick_site()
        self._count(file_id, "invalid_mac")
        return self._entry(
            UserKey(mac, "Anonymous"),
            file_id,
            ms,
            self.rng.randint(100000, 999999),
            EventKind.NAVIGATE_BEGIN,
            site.url,
        )

    def _orphan_line(self, user, file_id, ms, window_id) -> RawLogEntry:
        self._count(file_id, "orphans")
        if self.rng.random() < 0.5:
            return self._entry(user, file_id, ms, window_id, EventKind.WINDOW_CLOSE)
        site = self._pick_site()
        return self._entry(
            user, file_id, ms, window_id, EventKind.DOCUMENT_COMPLETE, site.url, site.title
        )

    def _user_stream(self, user, file_id) -> typing.Tuple[list, list, list]:
        config = self.config
        window_ids = _WindowIds(self.rng)
        stream, noise, surfs = [], [], []
        not_before = self.day0
        for _ in range(self.rng.randint(*config.surfs_per_user)):
            truth, events = self._surf(
                user, file_id, window_ids, not_before, self.rng.randrange(len(ARCHETYPES))
            )
            surfs.append(truth)
            stream.extend(events)
            if self.rng.random() < config.invalid_mac_rate:
                noise.append(self._noise_line(file_id, self.rng.randint(truth["start_ms"], truth["end_ms"])))
            not_before = truth["end_ms"]
            if self.rng.random() < config.orphan_rate:
                stream.append(self._orphan_line(user, file_id, not_before + 5000, next(window_ids)))
        noise.sort(key=lambda e: e.ts.epoch_ms)
        return stream, noise, surfs

    def run(self, out_dir) -> GroundTruth:
        config = self.config
        file_ids = ["%s%d.txt" % (config.file_prefix, i + 1) for i in range(config.files)]
        streams = {f: [] for f in file_ids}
        files = {f: {"users": 0, "lines": 0} for f in file_ids}
        self.file_counts = {f: {name: 0 for name in COUNT_NAMES} for f in file_ids}
        surfs = []

        for index in range(config.users):
            file_id = file_ids[index % config.files]
            user = self._user(index)
            stream, noise, user_surfs = self._user_stream(user, file_id)
            streams[file_id].extend([stream, noise])
            files[file_id]["users"] += 1
            surfs.extend(user_surfs)

        try:
            os.makedirs(out_dir, exist_ok=True)
            for file_id in file_ids:
                merged = heapq.merge(*streams[file_id], key=lambda e: e.ts.epoch_ms)
                with open(os.path.join(out_dir, file_id), "w", encoding="utf-8", newline="\n") as f:
                    for entry in merged:
                        f.write(format_entry(entry) + "\n")
                        files[file_id]["lines"] += 1
        except OSError as e:
            raise IoFailure("Failed to write synthetic logs to %s: %s" % (out_dir, e)) from e

        for file_id in file_ids:
            self.file_counts[file_id]["entries"] = files[file_id]["lines"]
        self.counts["entries"] = sum(f["lines"] for f in files.values())

        truth = GroundTruth(
            self.seed,
            dict(self.counts),
            self.file_counts,
            files,
            surfs,
            {s.url: s.category.label for s in SITES},
            _config_echo(config),
        )
        truth.save(os.path.join(out_dir, GROUND_TRUTH_NAME))
        save_rules(os.path.join(out_dir, RULES_NAME), site_rules())
        logger.info(
            "Generated %d entries in %d files: %d surfs, %d windows, %d pages",
            self.counts["entries"],
            len(file_ids),
            self.counts["surfs"],
            self.counts["windows"],
            self.counts["pages"],
        )
        return truth


class _WindowIds:
    """Per-user window identifiers, increasing and never reused."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.current = rng.randint(100000, 400000)

    def __iter__(self):
        return self

    def __next__(self) -> int:
        self.current += self.rng.randint(1, 5000)
        return self.current


def _config_echo(config: GeneratorConfig) -> typing.Dict[str, typing.Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()}


def site_rules() -> typing.List[CategoryRule]:
    rules = []
    for site in SITES:
        if site.category == Category.UNCLASSIFIED:
            continue
        if site.url in TITLE_RULE_SITES:
            rules.append(CategoryRule(TitleSimilar(site.title, 3), site.category))
        else:
            rules.append(CategoryRule(ExactUrl(site.url), site.category))
    return rules


def generate_synthetic(config: GeneratorConfig, seed: int, out_dir) -> GroundTruth:
    """Write synthetic log files, ``ground_truth.json`` and ``rules.tsv`` into ``out_dir``."""
    return _Generator(config, seed).run(out_dir)
