from dataclasses import dataclass, field
from enum import Enum, IntEnum
import logging
import os
import typing

import Levenshtein
import numpy as np

from .constants import DEFAULT_PAGES_PER_VECTOR, DEFAULT_PERIOD_HOURS, URL_CODE_PAD
from .exceptions import ConfigError, CorruptArtifact, EmptyInput, IoFailure, MissingArtifacts
from .refiner import Category
from .sessionizer import PageVisit, Surf
from .tables import INT, parsing, read_records, write_table

logger = logging.getLogger("surfminer").getChild(__name__)


def levenshtein(a: str, b: str) -> int:
    return Levenshtein.distance(a, b)


def recode_urls(urls) -> typing.Dict[int, int]:
    """Renumber URLs so that string-similar URLs get close ids.

    ``urls`` maps url id to base URL (or is a sequence of records with
    ``url_id`` and ``base_url``). The chain starts at the smallest URL and
    always moves to the nearest unvisited one, ties going to the smaller URL.
    """
    if not isinstance(urls, dict):
        urls = {u.url_id: u.base_url for u in urls}
    if not urls:
        return {}

    # several ids may share a string; they stay adjacent in the chain
    by_url: typing.Dict[str, typing.List[int]] = {}
    for url_id, base_url in urls.items():
        by_url.setdefault(base_url, []).append(url_id)

    remaining = sorted(by_url)
    current = remaining.pop(0)
    chain = [current]
    while remaining:
        best = min(range(len(remaining)), key=lambda i: (levenshtein(current, remaining[i]), remaining[i]))
        current = remaining.pop(best)
        chain.append(current)

    mapping = {}
    for base_url in chain:
        for url_id in sorted(by_url[base_url]):
            mapping[url_id] = len(mapping)
    return mapping


def chain_cost(urls: typing.Sequence[str]) -> int:
    return sum(levenshtein(a, b) for a, b in zip(urls, urls[1:]))


class PeriodBucket(IntEnum):
    M = 0
    A = 1
    N = 2


def _check_period_hours(hours):
    if len(hours) != 3 or not 0 <= hours[0] < hours[1] < hours[2] <= 24:
        raise ConfigError("Period hours must be 0 <= morning < afternoon < night <= 24: %r" % (hours,))


def period_of(ts, boundaries: typing.Tuple[int, int, int] = DEFAULT_PERIOD_HOURS) -> PeriodBucket:
    morning, afternoon, night = boundaries
    hour = ts.hour
    if morning <= hour < afternoon:
        return PeriodBucket.M
    if afternoon <= hour < night:
        return PeriodBucket.A
    return PeriodBucket.N


class Normalization(Enum):
    NONE = "none"
    MINMAX = "minmax"
    ZSCORE = "zscore"


@dataclass(frozen=True)
class NormalizationSpec:
    mode: Normalization = Normalization.NONE
    include_durations: bool = True
    max_value_cap: typing.Optional[float] = None


@dataclass(frozen=True)
class FeatureOptions:
    pages_per_vector: int = DEFAULT_PAGES_PER_VECTOR
    url_codes: bool = False
    durations: bool = False
    one_hot: bool = False
    period_hours: typing.Tuple[int, int, int] = DEFAULT_PERIOD_HOURS
    normalization: NormalizationSpec = NormalizationSpec()

    def __post_init__(self):
        if self.pages_per_vector < 1:
            raise ConfigError("pages_per_vector must be positive")
        _check_period_hours(self.period_hours)


class SessionVector(typing.NamedTuple):
    surf_id: int
    period: PeriodBucket
    categories: typing.Tuple[Category, ...]
    url_codes: typing.Optional[typing.Tuple[int, ...]] = None
    durations: typing.Optional[typing.Tuple[int, ...]] = None

    @property
    def category_pair(self) -> typing.Tuple[Category, ...]:
        return self.categories[:2]


@dataclass
class FeatureMatrix:
    columns: typing.Tuple[str, ...]
    surf_ids: np.ndarray
    values: np.ndarray
    vectors: typing.List[SessionVector] = field(default_factory=list)

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[0]


def feature_columns(options: FeatureOptions) -> typing.Tuple[str, ...]:
    k = options.pages_per_vector
    if options.one_hot:
        columns = ["period_%s" % p.name for p in PeriodBucket]
        for i in range(1, k + 1):
            columns.extend("cat%d_%s" % (i, c.name.lower()) for c in Category)
    else:
        columns = ["period"] + ["cat%d" % i for i in range(1, k + 1)]
    if options.url_codes:
        columns.extend("url%d" % i for i in range(1, k + 1))
    if options.durations:
        columns.extend("dur%d" % i for i in range(1, k + 1))
    return tuple(columns)


def _one_hot(code: int, size: int) -> typing.List[float]:
    row = [0.0] * size
    row[code] = 1.0
    return row


def vector_row(vector: SessionVector, options: FeatureOptions) -> typing.List[float]:
    if options.one_hot:
        row = _one_hot(vector.period, len(PeriodBucket))
        for category in vector.categories:
            row.extend(_one_hot(category, len(Category)))
    else:
        row = [float(vector.period)] + [float(c) for c in vector.categories]
    if options.url_codes:
        row.extend(float(u) for u in vector.url_codes)
    if options.durations:
        row.extend(float(d) for d in vector.durations)
    return row


def first_pages(surf: Surf, k: int) -> typing.List[PageVisit]:
    pages = [p for w in surf.windows for p in w.pages]
    pages.sort(key=lambda p: (p.start_ts, p.page_id))
    return pages[:k]


def _padded(values, k, pad):
    values = list(values)
    return tuple(values + [pad] * (k - len(values)))


def build_vectors(
    surfs: typing.Sequence[Surf],
    categories: typing.Dict[int, Category],
    options: FeatureOptions = FeatureOptions(),
    url_mapping: typing.Optional[typing.Dict[int, int]] = None,
) -> FeatureMatrix:
    """One vector per surf from its start period and its first pages."""
    if not surfs:
        raise EmptyInput("No surfs left to build vectors from")

    k = options.pages_per_vector
    vectors = []
    for surf in surfs:
        pages = first_pages(surf, k)
        cats = _padded(
            (categories.get(p.page_id, Category.UNCLASSIFIED) for p in pages), k, Category.UNCLASSIFIED
        )
        url_codes = None
        if options.url_codes:
            mapping = url_mapping or {}
            url_codes = _padded((mapping.get(p.url_id, p.url_id) for p in pages), k, URL_CODE_PAD)
        durations = None
        if options.durations:
            durations = _padded((p.duration_ms for p in pages), k, 0)
        vectors.append(
            SessionVector(
                surf.surf_id,
                period_of(surf.start_ts, options.period_hours),
                tuple(Category(c) for c in cats),
                url_codes,
                durations,
            )
        )

    values = np.array([vector_row(v, options) for v in vectors], dtype=float)
    surf_ids = np.array([v.surf_id for v in vectors], dtype=np.int64)
    logger.info("Built %d vectors of width %d", values.shape[0], values.shape[1])
    return FeatureMatrix(feature_columns(options), surf_ids, values, vectors)


def normalize(matrix: FeatureMatrix, spec: NormalizationSpec = NormalizationSpec()) -> FeatureMatrix:
    """Drop, cap and rescale columns; constant columns become 0."""
    columns = list(matrix.columns)
    values = matrix.values
    if not spec.include_durations:
        keep = [i for i, c in enumerate(columns) if not c.startswith("dur")]
        columns = [columns[i] for i in keep]
        values = values[:, keep]

    values = np.array(values, dtype=float)
    if spec.max_value_cap is not None:
        values = np.minimum(values, spec.max_value_cap)

    if spec.mode == Normalization.MINMAX:
        low = values.min(axis=0)
        span = values.max(axis=0) - low
        safe = np.where(span > 0, span, 1.0)
        values = np.where(span > 0, (values - low) / safe, 0.0)
    elif spec.mode == Normalization.ZSCORE:
        mean = values.mean(axis=0)
        if values.shape[0] > 1:
            std = values.std(axis=0, ddof=1)
        else:
            std = np.zeros(values.shape[1])
        safe = np.where(std > 0, std, 1.0)
        values = np.where(std > 0, (values - mean) / safe, 0.0)

    return FeatureMatrix(tuple(columns), matrix.surf_ids.copy(), values, list(matrix.vectors))


def export_features(matrix: FeatureMatrix, path) -> None:
    if len(matrix) == 0:
        raise EmptyInput("Feature matrix is empty")
    data = np.column_stack([matrix.surf_ids.astype(float), matrix.values])
    try:
        np.savetxt(
            path,
            data,
            fmt=["%d"] + ["%.17g"] * matrix.values.shape[1],
            delimiter="\t",
            header="\t".join(("surf_id",) + tuple(matrix.columns)),
            comments="",
        )
    except OSError as e:
        raise IoFailure("Failed to write features %s: %s" % (path, e)) from e
    logger.debug("Exported %s features to %s", matrix.shape, path)


def load_features(path) -> FeatureMatrix:
    if not os.path.exists(path):
        raise MissingArtifacts("Missing feature file %s" % path)
    try:
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split("\t")
        data = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    except OSError as e:
        raise IoFailure("Failed to read features %s: %s" % (path, e)) from e
    except ValueError as e:
        raise CorruptArtifact("Unreadable features %s: %s" % (path, e)) from e
    if data.size == 0:
        data = np.empty((0, len(header)))
    return FeatureMatrix(tuple(header[1:]), data[:, 0].astype(np.int64), data[:, 1:])


VECTOR_COLUMNS = ("surf_id", "period", "categories", "url_codes", "durations")


def _joined(values):
    return None if values is None else ",".join(str(int(v)) for v in values)


def _split(text):
    return None if text == "" else tuple(int(v) for v in text.split(","))


def save_vectors(path, vectors: typing.Iterable[SessionVector]) -> None:
    write_table(
        path,
        VECTOR_COLUMNS,
        (
            (v.surf_id, v.period.name, _joined(v.categories), _joined(v.url_codes), _joined(v.durations))
            for v in vectors
        ),
    )


def load_vectors(path) -> typing.List[SessionVector]:
    records = read_records(path, {"surf_id": INT})
    with parsing(path):
        return [
            SessionVector(
                r["surf_id"],
                PeriodBucket[r["period"]],
                tuple(Category(c) for c in _split(r["categories"]) or ()),
                _split(r["url_codes"]),
                _split(r["durations"]),
            )
            for r in records
        ]


def save_url_mapping(path, mapping: typing.Dict[int, int], urls) -> None:
    base = {u.url_id: u.base_url for u in urls}
    write_table(
        path,
        ("url_id", "code", "base_url"),
        ((url_id, code, base.get(url_id, "")) for url_id, code in sorted(mapping.items(), key=lambda i: i[1])),
    )
