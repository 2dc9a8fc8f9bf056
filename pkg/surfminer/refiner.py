import collections
import copy
from dataclasses import dataclass
from enum import IntEnum
import logging
import os
import sys
import typing

import Levenshtein

from .constants import (
    DEFAULT_ERROR_TITLE_PATTERNS,
    DEFAULT_MAX_VISIT_MS,
    DEFAULT_MIN_VISIT_MS,
    DEFAULT_TITLE_DISTANCE,
)
from .exceptions import ConfigError, IoFailure, NonInteractiveEnvironment
from .logmodel import read_users, write_users
from .sessionizer import PageVisit, Sessions, Surf, read_surf_tables, write_surf_tables
from .tables import INT, parsing, read_records, write_table

logger = logging.getLogger("surfminer").getChild(__name__)


class Category(IntEnum):
    UNCLASSIFIED = 0
    SEARCH = 1
    MAIL = 2
    GAMES = 3
    FORUMS = 4
    DOWNLOADS = 5
    DEVELOPMENT = 6
    NEWS = 7
    RESEARCH = 8

    @property
    def label(self) -> str:
        return category_labels[self]

    @classmethod
    def from_label(cls, text: str) -> "Category":
        wanted = text.strip().lower()
        for category, label in category_labels.items():
            if wanted in (label.lower(), category.name.lower()):
                return category
        raise ValueError("Unknown category %r" % text)


category_labels = {
    Category.UNCLASSIFIED: "Unclassified",
    Category.SEARCH: "Search/IR",
    Category.MAIL: "Mail",
    Category.GAMES: "Games",
    Category.FORUMS: "Forums",
    Category.DOWNLOADS: "Downloads",
    Category.DEVELOPMENT: "Development",
    Category.NEWS: "News",
    Category.RESEARCH: "Research",
}


@dataclass(frozen=True)
class ValidityInterval:
    min_ms: int = DEFAULT_MIN_VISIT_MS
    max_ms: int = DEFAULT_MAX_VISIT_MS

    def __post_init__(self):
        if self.min_ms < 0 or self.max_ms <= 0 or self.min_ms >= self.max_ms:
            raise ConfigError("Invalid validity interval [%s, %s]" % (self.min_ms, self.max_ms))

    def __contains__(self, duration_ms: int) -> bool:
        return self.min_ms <= duration_ms <= self.max_ms


class ExactUrl(typing.NamedTuple):
    base_url: str


class TitleSimilar(typing.NamedTuple):
    title: str
    max_edit_distance: int = DEFAULT_TITLE_DISTANCE


class CategoryRule(typing.NamedTuple):
    matcher: typing.Union[ExactUrl, TitleSimilar]
    category: Category


class RemovalCounts(typing.NamedTuple):
    surfs: int = 0
    pages: int = 0
    windows: int = 0

    def __add__(self, other):
        return RemovalCounts(*(a + b for a, b in zip(self, other)))


@dataclass
class Refined:
    surfs: typing.List[Surf]
    aberrant: RemovalCounts
    error_pages: int
    error_cascade: RemovalCounts
    categories: typing.Dict[int, Category]
    unknown: typing.List[PageVisit]
    file_counts: typing.Dict[str, typing.Dict[str, int]]
    reconstructed_surfs: int

    @property
    def pages(self) -> typing.List[PageVisit]:
        return [p for s in self.surfs for w in s.windows for p in w.pages]

    @property
    def removed_surf_ratio(self) -> float:
        if self.reconstructed_surfs == 0:
            return 0.0
        removed = self.reconstructed_surfs - len(self.surfs)
        return 100.0 * removed / self.reconstructed_surfs


def _cascade(surfs: typing.List[Surf], keep_page, counters=None):
    """Drop pages failing ``keep_page``, then windows and surfs left empty."""
    kept_surfs = []
    removed_pages = removed_windows = removed_surfs = 0
    for surf in surfs:
        kept_windows = []
        for window in surf.windows:
            pages = [p for p in window.pages if keep_page(p)]
            dropped = len(window.pages) - len(pages)
            removed_pages += dropped
            if counters is not None and dropped:
                counters[window.source_file]["pages"] += dropped
            if pages:
                kept_windows.append(copy.copy(window))
                kept_windows[-1].pages = pages
            else:
                removed_windows += 1
                if counters is not None:
                    counters[window.source_file]["windows"] += 1
        if kept_windows:
            kept_surfs.append(copy.copy(surf))
            kept_surfs[-1].windows = kept_windows
        else:
            removed_surfs += 1
            if counters is not None:
                counters[surf.source_file]["surfs"] += 1
    return kept_surfs, RemovalCounts(removed_surfs, removed_pages, removed_windows)


def filter_aberrant(
    surfs: typing.List[Surf],
    interval: ValidityInterval = ValidityInterval(),
    counters=None,
) -> typing.Tuple[typing.List[Surf], RemovalCounts]:
    """Remove page visits outside the validity interval (negative durations
    included) and the windows and surfs they leave empty."""
    return _cascade(surfs, lambda p: p.duration_ms in interval, counters)


def is_error_title(title: typing.Optional[str], patterns: typing.Sequence[str]) -> bool:
    if not title:
        return False
    lowered = title.lower()
    return any(pattern.lower() in lowered for pattern in patterns)


def filter_error_pages(
    surfs: typing.List[Surf],
    title_patterns: typing.Sequence[str] = DEFAULT_ERROR_TITLE_PATTERNS,
    counters=None,
) -> typing.Tuple[typing.List[Surf], RemovalCounts]:
    if not title_patterns:
        return surfs, RemovalCounts()
    return _cascade(surfs, lambda p: not is_error_title(p.title, title_patterns), counters)


def match_rule(page: PageVisit, rules: typing.Sequence[CategoryRule]) -> Category:
    for rule in rules:
        if isinstance(rule.matcher, ExactUrl) and rule.matcher.base_url == page.url:
            return rule.category
    if page.title:
        for rule in rules:
            matcher = rule.matcher
            if (
                isinstance(matcher, TitleSimilar)
                and Levenshtein.distance(page.title, matcher.title) <= matcher.max_edit_distance
            ):
                return rule.category
    return Category.UNCLASSIFIED


def categorize(
    pages: typing.Iterable[PageVisit], rules: typing.Sequence[CategoryRule]
) -> typing.Tuple[typing.Dict[int, Category], typing.List[PageVisit]]:
    """Assign each page the category of the first matching rule.

    Exact URL rules take precedence over title rules. Returns the categories
    keyed by page id and the pages left unclassified.
    """
    categories = {}
    unknown = []
    for page in pages:
        category = match_rule(page, rules)
        categories[page.page_id] = category
        if category == Category.UNCLASSIFIED:
            unknown.append(page)
    return categories, unknown


def _console_ask(prompt: str) -> str:
    if not sys.stdin.isatty():
        raise NonInteractiveEnvironment("Labeling needs an interactive terminal")
    return input(prompt)


def interactive_label(
    unknown: typing.Sequence[PageVisit],
    categories: typing.Sequence[Category] = tuple(Category),
    ask: typing.Callable[[str], str] = _console_ask,
    tell: typing.Callable[[str], None] = print,
) -> typing.List[CategoryRule]:
    """Ask once per distinct unknown URL for a category; an empty answer skips it."""
    by_url: typing.Dict[str, typing.List[PageVisit]] = collections.OrderedDict()
    for page in unknown:
        by_url.setdefault(page.url, []).append(page)
    if not by_url:
        return []

    choices = [c for c in categories if c != Category.UNCLASSIFIED]
    menu = "  ".join("%d=%s" % (c.value, c.label) for c in choices)
    rules = []
    for url, pages in by_url.items():
        sample = next((p.title for p in pages if p.title), "")
        tell("%s\n  title: %s\n  visits: %d" % (url, sample, len(pages)))
        while True:
            answer = ask("Category [%s, empty to skip]: " % menu).strip()
            if not answer:
                break
            try:
                category = Category(int(answer)) if answer.isdigit() else Category.from_label(answer)
            except ValueError:
                tell("Unknown category %r" % answer)
                continue
            if category in choices:
                rules.append(CategoryRule(ExactUrl(url), category))
                break
            tell("Unknown category %r" % answer)

    logger.info("Labeled %d of %d unknown urls", len(rules), len(by_url))
    return rules


def load_rules(path) -> typing.List[CategoryRule]:
    if not path or not os.path.exists(path):
        return []
    rules = []
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                rules.append(_parse_rule(line, path, line_no))
    except OSError as e:
        raise IoFailure("Failed to read rules %s: %s" % (path, e)) from e
    return rules


def _parse_rule(line, path, line_no) -> CategoryRule:
    parts = line.split("\t")
    try:
        kind = parts[0].strip().upper()
        if kind == "URL":
            return CategoryRule(ExactUrl(parts[1]), Category.from_label(parts[-1]))
        if kind == "TITLE":
            threshold = int(parts[2]) if parts[2].strip() else DEFAULT_TITLE_DISTANCE
            if threshold < 0:
                raise ValueError("negative threshold")
            return CategoryRule(TitleSimilar(parts[1], threshold), Category.from_label(parts[3]))
    except (IndexError, ValueError) as e:
        raise ConfigError("%s:%d: bad rule (%s)" % (path, line_no, e))
    raise ConfigError("%s:%d: unknown rule kind %r" % (path, line_no, parts[0]))


def format_rule(rule: CategoryRule) -> str:
    if isinstance(rule.matcher, ExactUrl):
        return "URL\t%s\t\t%s" % (rule.matcher.base_url, rule.category.label)
    return "TITLE\t%s\t%d\t%s" % (
        rule.matcher.title,
        rule.matcher.max_edit_distance,
        rule.category.label,
    )


def save_rules(path, rules: typing.Iterable[CategoryRule], append=False) -> None:
    try:
        with open(path, "a" if append else "w", encoding="utf-8") as f:
            for rule in rules:
                f.write(format_rule(rule) + "\n")
    except OSError as e:
        raise IoFailure("Failed to write rules %s: %s" % (path, e)) from e


def append_rules(path, rules) -> None:
    save_rules(path, rules, append=True)


@dataclass(frozen=True)
class RefinerConfig:
    interval: ValidityInterval = ValidityInterval()
    error_title_patterns: typing.Tuple[str, ...] = DEFAULT_ERROR_TITLE_PATTERNS
    rules_path: str = ""


def refine(sessions: Sessions, config: RefinerConfig = RefinerConfig(), rules=None) -> Refined:
    """Validity-interval filtering, error-page removal and categorization."""
    rules = load_rules(config.rules_path) if rules is None else rules
    counters = collections.defaultdict(collections.Counter)
    surfs, aberrant = filter_aberrant(sessions.surfs, config.interval, counters)

    error_counters = collections.defaultdict(collections.Counter)
    surfs, error_cascade = filter_error_pages(surfs, config.error_title_patterns, error_counters)
    for file_id, counter in error_counters.items():
        counters[file_id]["error_pages"] += counter["pages"]

    pages = [p for s in surfs for w in s.windows for p in w.pages]
    categories, unknown = categorize(pages, rules)
    logger.info(
        "Refined: aberrant %s, %d error pages, %d pages kept, %d unclassified",
        tuple(aberrant),
        error_cascade.pages,
        len(pages),
        len(unknown),
    )
    return Refined(
        surfs,
        aberrant,
        error_cascade.pages,
        error_cascade,
        categories,
        unknown,
        {f: dict(c) for f, c in sorted(counters.items())},
        len(sessions.surfs),
    )


REFINE_REPORT_COLUMNS = ("scope", "surfs", "pages", "windows", "error_pages")


def save_refined(refined: Refined, users, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_users(os.path.join(directory, "users.tsv"), users)
    write_surf_tables(directory, refined.surfs, users, suffix="_refined")
    write_table(
        os.path.join(directory, "categories.tsv"),
        ("page_id", "category", "name"),
        (
            (page_id, int(category), category.label)
            for page_id, category in sorted(refined.categories.items())
        ),
    )
    rows = [
        (f, c.get("surfs", 0), c.get("pages", 0), c.get("windows", 0), c.get("error_pages", 0))
        for f, c in refined.file_counts.items()
    ]
    rows.append(("*",) + tuple(refined.aberrant) + (refined.error_pages,))
    write_table(os.path.join(directory, "refine_report.tsv"), REFINE_REPORT_COLUMNS, rows)
    write_table(
        os.path.join(directory, "refine_summary.tsv"),
        ("reconstructed_surfs", "error_surfs", "error_windows"),
        [(refined.reconstructed_surfs, refined.error_cascade.surfs, refined.error_cascade.windows)],
    )


def load_refined(directory):
    users = read_users(os.path.join(directory, "users.tsv"))
    surfs = read_surf_tables(directory, users, suffix="_refined")
    categories_path = os.path.join(directory, "categories.tsv")
    records = read_records(categories_path, {"page_id": INT, "category": INT})
    with parsing(categories_path):
        categories = {r["page_id"]: Category(r["category"]) for r in records}
    file_counts = {}
    aberrant = RemovalCounts()
    error_pages = 0
    report = read_records(
        os.path.join(directory, "refine_report.tsv"), dict.fromkeys(REFINE_REPORT_COLUMNS[1:], INT)
    )
    for r in report:
        counts = {k: r[k] for k in REFINE_REPORT_COLUMNS[1:]}
        if r["scope"] == "*":
            aberrant = RemovalCounts(counts["surfs"], counts["pages"], counts["windows"])
            error_pages = counts["error_pages"]
        else:
            file_counts[r["scope"]] = counts
    summary_path = os.path.join(directory, "refine_summary.tsv")
    with parsing(summary_path):
        [summary] = read_records(
            summary_path, dict.fromkeys(("reconstructed_surfs", "error_surfs", "error_windows"), INT)
        )
    pages = [p for s in surfs for w in s.windows for p in w.pages]
    unknown = [p for p in pages if categories.get(p.page_id, Category.UNCLASSIFIED) == Category.UNCLASSIFIED]
    refined = Refined(
        surfs,
        aberrant,
        error_pages,
        RemovalCounts(summary["error_surfs"], error_pages, summary["error_windows"]),
        categories,
        unknown,
        file_counts,
        summary["reconstructed_surfs"],
    )
    return refined, users
