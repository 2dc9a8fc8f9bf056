import functools
import random

from hypothesis import given
from hypothesis import strategies as st
import numpy as np
import pytest

from surfminer.cleaner import UrlRecord
from surfminer.constants import URL_CODE_PAD
from surfminer.exceptions import ConfigError, EmptyInput, MissingArtifacts
from surfminer.features import (
    FeatureMatrix,
    FeatureOptions,
    Normalization,
    NormalizationSpec,
    PeriodBucket,
    build_vectors,
    chain_cost,
    export_features,
    feature_columns,
    levenshtein,
    load_features,
    load_vectors,
    normalize,
    period_of,
    recode_urls,
    save_vectors,
)
from surfminer.logmodel import Timestamp
from surfminer.refiner import Category

from tests.factories import SurfBuilder


def slow_levenshtein(a, b):
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def test_levenshtein_against_recursion():
    rng = random.Random(42)
    alphabet = "htp:/.abcéü"
    for _ in range(200):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        assert levenshtein(a, b) == slow_levenshtein(a, b)


@pytest.mark.parametrize(
    "a, b, expected",
    [("", "", 0), ("", "abc", 3), ("kitten", "sitting", 3), ("http://a.test", "http://b.test", 1)],
)
def test_levenshtein_values(a, b, expected):
    assert levenshtein(a, b) == expected


urls_text = st.text(alphabet="abcxyz/.:", max_size=10)


@given(urls_text, urls_text, urls_text)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) is (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_recode_urls_greedy_chain():
    urls = {0: "http://b.test", 1: "http://a.test", 2: "http://a.test/x", 3: "http://zz.test"}

    mapping = recode_urls(urls)

    # a.test, then b.test, zz.test and a.test/x
    assert mapping == {1: 0, 0: 1, 3: 2, 2: 3}
    chain = [urls[i] for i in sorted(mapping, key=mapping.get)]
    assert chain_cost(chain) == 1 + 2 + levenshtein("http://zz.test", "http://a.test/x")


def test_recode_urls_from_records():
    records = [UrlRecord(0, "http://b.test", "http", "b.test"), UrlRecord(1, "http://a.test", "http", "a.test")]

    assert recode_urls(records) == {1: 0, 0: 1}


@given(st.lists(urls_text, max_size=8))
def test_recode_urls_is_a_permutation(strings):
    mapping = recode_urls(dict(enumerate(strings)))

    assert sorted(mapping) == list(range(len(strings)))
    assert sorted(mapping.values()) == list(range(len(strings)))


def test_recode_keeps_equal_urls_adjacent():
    mapping = recode_urls({0: "http://x.test", 1: "http://a.test", 2: "http://x.test"})

    assert abs(mapping[0] - mapping[2]) == 1


def test_recode_nothing():
    assert recode_urls({}) == {}


@pytest.mark.parametrize(
    "hour, bucket",
    [(0, "N"), (5, "N"), (6, "M"), (11, "M"), (12, "A"), (17, "A"), (18, "N"), (22, "N"), (23, "N")],
)
def test_period_of(hour, bucket):
    assert period_of(Timestamp.from_parts(5, 5, 2008, hour, 23)) == PeriodBucket[bucket]


def test_period_of_custom_boundaries():
    assert period_of(Timestamp.from_parts(5, 5, 2008, 7), (8, 13, 20)) == PeriodBucket.N


@pytest.mark.parametrize("hours", [(6, 12), (12, 6, 18), (6, 12, 25), (-1, 12, 18)])
def test_bad_period_hours(hours):
    with pytest.raises(ConfigError):
        FeatureOptions(period_hours=hours)


def test_bad_pages_per_vector():
    with pytest.raises(ConfigError):
        FeatureOptions(pages_per_vector=0)


@pytest.fixture
def surfs():
    b = SurfBuilder()
    return [
        b.surf(
            [(30000, "http://news.test", "Une", 4), (40000, "http://search.test", "S", 2)],
            [(50000, "http://mail.test", "M", 7)],
            start=Timestamp.from_parts(5, 5, 2008, 22, 23),
        ),
        b.surf([(25000, "http://news.test", "Une", 4)], start=Timestamp.from_parts(6, 5, 2008, 9)),
    ]


@pytest.fixture
def categories(surfs):
    pages = [p for s in surfs for w in s.windows for p in w.pages]
    by_url = {"http://news.test": Category.NEWS, "http://search.test": Category.SEARCH}
    return {p.page_id: by_url.get(p.url, Category.UNCLASSIFIED) for p in pages}


def test_build_vectors(surfs, categories):
    matrix = build_vectors(surfs, categories)

    assert matrix.columns == ("period", "cat1", "cat2")
    assert matrix.surf_ids.tolist() == [0, 1]
    assert matrix.values.tolist() == [
        [float(PeriodBucket.N), float(Category.NEWS), float(Category.SEARCH)],
        [float(PeriodBucket.M), float(Category.NEWS), float(Category.UNCLASSIFIED)],
    ]
    assert matrix.vectors[1].category_pair == (Category.NEWS, Category.UNCLASSIFIED)


def test_build_vectors_with_urls_and_durations(surfs, categories):
    options = FeatureOptions(pages_per_vector=3, url_codes=True, durations=True)

    matrix = build_vectors(surfs, categories, options, url_mapping={4: 0, 2: 1, 7: 2})

    assert matrix.columns == ("period", "cat1", "cat2", "cat3", "url1", "url2", "url3", "dur1", "dur2", "dur3")
    assert matrix.vectors[0].url_codes == (0, 1, 2)
    assert matrix.vectors[0].durations == (30000, 40000, 50000)
    assert matrix.vectors[1].url_codes == (0, URL_CODE_PAD, URL_CODE_PAD)
    assert matrix.vectors[1].durations == (25000, 0, 0)


def test_one_hot_encoding(surfs, categories):
    options = FeatureOptions(one_hot=True)

    matrix = build_vectors(surfs, categories, options)

    assert matrix.shape == (2, len(PeriodBucket) + 2 * len(Category))
    assert len(feature_columns(options)) == matrix.shape[1]
    assert matrix.values.sum(axis=1).tolist() == [3.0, 3.0]
    assert matrix.values[0, feature_columns(options).index("cat1_news")] == 1.0


def test_no_surfs():
    with pytest.raises(EmptyInput):
        build_vectors([], {})


def _matrix(rows, columns=("a", "b", "dur1")):
    return FeatureMatrix(columns, np.arange(len(rows)), np.array(rows, dtype=float))


def test_minmax():
    normalized = normalize(_matrix([[0, 5, 10], [10, 5, 30]]), NormalizationSpec(Normalization.MINMAX))

    assert normalized.values.tolist() == [[0.0, 0.0, 0.0], [1.0, 0.0, 1.0]]


def test_zscore():
    normalized = normalize(_matrix([[1, 5, 0], [3, 5, 0], [5, 5, 0]]), NormalizationSpec(Normalization.ZSCORE))

    assert normalized.values[:, 0] == pytest.approx([-1.0, 0.0, 1.0])
    assert normalized.values[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_zscore_single_row():
    normalized = normalize(_matrix([[1, 2, 3]]), NormalizationSpec(Normalization.ZSCORE))

    assert normalized.values.tolist() == [[0.0, 0.0, 0.0]]


def test_drop_durations_and_cap():
    spec = NormalizationSpec(include_durations=False, max_value_cap=4.0)

    normalized = normalize(_matrix([[1, 7, 100], [9, 2, 200]]), spec)

    assert normalized.columns == ("a", "b")
    assert normalized.values.tolist() == [[1.0, 4.0], [4.0, 2.0]]


def test_normalize_keeps_input():
    matrix = _matrix([[0, 1, 2], [4, 5, 6]])

    normalize(matrix, NormalizationSpec(Normalization.MINMAX))

    assert matrix.values.tolist() == [[0.0, 1.0, 2.0], [4.0, 5.0, 6.0]]


def test_export_and_load(tmp_path, surfs, categories):
    matrix = build_vectors(surfs, categories, FeatureOptions(durations=True))
    path = str(tmp_path / "features.tsv")

    export_features(matrix, path)
    loaded = load_features(path)

    assert loaded.columns == matrix.columns
    assert loaded.surf_ids.tolist() == matrix.surf_ids.tolist()
    assert np.array_equal(loaded.values, matrix.values)
    with open(path, encoding="utf-8") as f:
        assert f.readline() == "surf_id\tperiod\tcat1\tcat2\tdur1\tdur2\n"


def test_export_single_row(tmp_path):
    path = str(tmp_path / "features.tsv")

    export_features(_matrix([[0.25, 1, 2]]), path)

    assert load_features(path).values.tolist() == [[0.25, 1.0, 2.0]]


def test_load_missing_features(tmp_path):
    with pytest.raises(MissingArtifacts):
        load_features(str(tmp_path / "features.tsv"))


def test_vectors_file(tmp_path, surfs, categories):
    matrix = build_vectors(surfs, categories, FeatureOptions(url_codes=True))
    path = str(tmp_path / "vectors.tsv")

    save_vectors(path, matrix.vectors)

    assert load_vectors(path) == matrix.vectors
