import os

import pytest

from surfminer.cleaner import run_cleaning
from surfminer.exceptions import ConfigError
from surfminer.features import period_of
from surfminer.generator import (
    COUNT_NAMES,
    GROUND_TRUTH_NAME,
    RULES_NAME,
    GeneratorConfig,
    GroundTruth,
    generate_synthetic,
    site_rules,
)
from surfminer.logmodel import Timestamp, merge_logs, read_log_file
from surfminer.refiner import Category, TitleSimilar, load_rules
from surfminer.sessionizer import TerminationMode, sessionize


def _read_store(directory, truth):
    return merge_logs([read_log_file(os.path.join(directory, f)) for f in sorted(truth.files)])


def _contents(directory):
    result = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as f:
            result[name] = f.read()
    return result


def test_same_seed_same_corpus(tmp_path):
    generate_synthetic(GeneratorConfig(), 11, str(tmp_path / "a"))
    generate_synthetic(GeneratorConfig(), 11, str(tmp_path / "b"))
    generate_synthetic(GeneratorConfig(), 12, str(tmp_path / "c"))

    first = _contents(str(tmp_path / "a"))
    assert sorted(first) == sorted(["log1.txt", "log2.txt", GROUND_TRUTH_NAME, RULES_NAME])
    assert first == _contents(str(tmp_path / "b"))
    assert first["log1.txt"] != _contents(str(tmp_path / "c"))["log1.txt"]


@pytest.fixture
def corpus(tmp_path):
    directory = str(tmp_path / "corpus")
    truth = generate_synthetic(GeneratorConfig(users=4, files=3), 5, directory)
    return directory, truth


def test_every_line_parses(corpus):
    directory, truth = corpus

    for file_id, info in truth.files.items():
        parsed = read_log_file(os.path.join(directory, file_id))
        assert parsed.rejected == 0
        assert parsed.line_count == info["lines"]


def test_file_counts_add_up(corpus):
    _, truth = corpus

    assert set(truth.counts) == set(COUNT_NAMES)
    for name in COUNT_NAMES:
        assert sum(c[name] for c in truth.file_counts.values()) == truth.counts[name]
    assert truth.counts["surfs"] == len(truth.surfs)
    assert truth.counts["windows"] == len(truth.windows)
    assert truth.counts["pages"] == len(truth.pages)
    assert sum(f["users"] for f in truth.files.values()) == 4


def test_surfs_start_in_their_period(corpus):
    _, truth = corpus

    for surf in truth.surfs:
        assert period_of(Timestamp(surf["start_ms"])).name == surf["period"]


def test_cleaning_matches_ground_truth(corpus):
    directory, truth = corpus

    report = run_cleaning(_read_store(directory, truth)).report

    assert report.loaded == truth.counts["entries"]
    assert report.invalid_mac_removed == truth.counts["invalid_mac"]
    assert report.untargeted_removed == truth.counts["untargeted"]
    assert report.nonlatin_removed == truth.counts["nonlatin"]
    assert report.frame_events_removed == truth.counts["frame_events"]
    assert report.orphans_removed == truth.counts["orphans"]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_clean_corpus_round_trip(tmp_path, seed):
    directory = str(tmp_path)
    truth = generate_synthetic(GeneratorConfig.without_anomalies(users=2), seed, directory)

    result = run_cleaning(_read_store(directory, truth))
    sessions = sessionize(result.entries, TerminationMode.AVERAGE_RATE)

    assert result.report.removed == 0
    assert len(sessions.surfs) == truth.counts["surfs"]
    assert len(sessions.windows) == truth.counts["windows"]
    assert len(sessions.pages) == truth.counts["pages"]
    assert sessions.unterminated == []
    assert sessions.orphans == 0
    assert sorted(p.duration_ms for p in sessions.pages) == sorted(p["duration_ms"] for p in truth.pages)


def test_ground_truth_file(corpus):
    directory, truth = corpus

    loaded = GroundTruth.load(os.path.join(directory, GROUND_TRUTH_NAME))

    assert loaded == truth
    assert loaded.seed == 5
    assert loaded.config["files"] == 3


def test_rules_file(corpus):
    directory, _ = corpus

    rules = load_rules(os.path.join(directory, RULES_NAME))

    assert rules == site_rules()
    assert Category.UNCLASSIFIED not in {r.category for r in rules}
    assert sum(isinstance(r.matcher, TitleSimilar) for r in rules) == 1


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(users=0),
        dict(surfs_per_user=(3, 2)),
        dict(pages_per_window=(0, 4)),
        dict(crash_rate=1.5),
        dict(frame_count=0),
        dict(period_hours=(6, 6, 18)),
        dict(short_visit_rate=0.6, slow_visit_rate=0.3, error_page_rate=0.2),
    ],
)
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        GeneratorConfig(**kwargs)
