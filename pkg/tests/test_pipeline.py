from dataclasses import replace
import os
import time

import pytest

from surfminer.config import PipelineConfig
from surfminer.constants import stage_names
from surfminer.exceptions import ConfigError, EmptyInput, MissingArtifacts, StageFailed
from surfminer.features import Normalization, NormalizationSpec
from surfminer.generator import RULES_NAME, GeneratorConfig, generate_synthetic
from surfminer.pipeline import ERROR_REPORT_NAME, TIMINGS_NAME, Pipeline, RunReport, StageResult, run_pipeline
from surfminer.refiner import RefinerConfig, load_rules
from surfminer.som import SomConfig
from surfminer.tables import read_records


def _config(corpus, out, **kwargs):
    return PipelineConfig(
        inputs=(corpus,),
        output_dir=out,
        som=SomConfig(grid_w=3, grid_h=2, epochs=5),
        refiner=RefinerConfig(rules_path=os.path.join(corpus, RULES_NAME)),
        **kwargs,
    )


def _snapshot(directory):
    files = {}
    for root, _, names in os.walk(directory):
        for name in names:
            path = os.path.join(root, name)
            with open(path, "rb") as f:
                files[os.path.relpath(path, directory)] = f.read()
    return files


@pytest.fixture
def corpus(tmp_path):
    directory = str(tmp_path / "corpus")
    truth = generate_synthetic(GeneratorConfig(users=4, files=2), 3, directory)
    return directory, truth


async def test_full_run(tmp_path, corpus):
    directory, truth = corpus
    out = str(tmp_path / "out")

    report = await run_pipeline(_config(directory, out))

    assert [s.stage for s in report.stages] == list(stage_names)
    assert report["ingest"]["entries"] == truth.counts["entries"]
    assert report["ingest"]["rejected"] == 0
    assert report["clean"]["invalid_mac"] == truth.counts["invalid_mac"]
    assert report["clean"]["frame_events"] == truth.counts["frame_events"]
    assert report["clean"]["orphans"] == truth.counts["orphans"]
    assert report["sessionize"]["surfs"] == truth.counts["surfs"]
    assert report["sessionize"]["unterminated"] == truth.counts["crashes"]
    assert report["cluster"]["clustered"] == report["cluster"]["vectors"] == report["refine"]["surfs"]
    assert report["cluster"]["units"] == 6

    for stage in stage_names:
        assert os.path.isdir(os.path.join(out, stage))
    for name in ("stats.tsv", "stats.txt", "logs.txt", "top_sites.txt", "run_report.tsv", "run_report.txt"):
        assert os.path.exists(os.path.join(out, "report", name))
    assert [r["stage"] for r in read_records(os.path.join(out, TIMINGS_NAME))] == list(stage_names)
    trace = read_records(os.path.join(out, "cluster", "trace.tsv"))
    assert [int(r["epoch"]) for r in trace] == list(range(6))
    assert not os.path.exists(os.path.join(out, ERROR_REPORT_NAME))


async def test_rerun_is_byte_identical(tmp_path, corpus):
    directory, _ = corpus
    out = str(tmp_path / "out")
    config = _config(directory, out)

    await run_pipeline(config)
    first = _snapshot(out)
    await run_pipeline(config)
    second = _snapshot(out)

    del first[TIMINGS_NAME], second[TIMINGS_NAME]
    assert first == second


@pytest.mark.slow
async def test_large_corpus(tmp_path):
    directory = str(tmp_path / "corpus")
    truth = generate_synthetic(GeneratorConfig(users=80, files=4, surfs_per_user=(40, 60)), 17, directory)
    assert truth.counts["entries"] >= 45000
    out = str(tmp_path / "out")
    config = _config(directory, out)

    snapshots = []
    for _ in range(2):
        started = time.monotonic()
        report = await run_pipeline(config)
        assert time.monotonic() - started < 60
        snapshots.append(_snapshot(out))

    assert report["ingest"]["entries"] == truth.counts["entries"]
    for snapshot in snapshots:
        del snapshot[TIMINGS_NAME]
    assert snapshots[0] == snapshots[1]


async def test_url_codes_and_normalization(tmp_path, corpus):
    directory, _ = corpus
    out = str(tmp_path / "out")
    config = _config(directory, out)
    config = replace(
        config,
        features=replace(
            config.features, url_codes=True, durations=True, normalization=NormalizationSpec(Normalization.MINMAX)
        ),
    )

    report = await run_pipeline(config)

    assert report["features"]["width"] == 7
    assert os.path.exists(os.path.join(out, "features", "url_codes.tsv"))


async def test_empty_input_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    out = str(tmp_path / "out")

    with pytest.raises(StageFailed) as info:
        await run_pipeline(PipelineConfig(inputs=(str(tmp_path / "empty"),), output_dir=out))

    assert info.value.stage == "ingest"
    assert isinstance(info.value.cause, EmptyInput)
    assert sorted(os.listdir(out)) == [ERROR_REPORT_NAME]
    [row] = read_records(os.path.join(out, ERROR_REPORT_NAME))
    assert (row["stage"], row["error"]) == ("ingest", "EmptyInput")


async def test_missing_input_path(tmp_path):
    config = PipelineConfig(inputs=(str(tmp_path / "absent"),), output_dir=str(tmp_path / "out"))

    with pytest.raises(StageFailed) as info:
        await Pipeline(config).run(["ingest"])

    assert isinstance(info.value.cause, ConfigError)


async def test_failure_keeps_earlier_outputs(tmp_path, corpus):
    directory, _ = corpus
    out = str(tmp_path / "out")
    pipeline = Pipeline(_config(directory, out))
    await pipeline.run(["ingest", "clean"])

    with pytest.raises(StageFailed) as info:
        await pipeline.run(["refine"])

    assert info.value.stage == "refine"
    assert isinstance(info.value.cause, MissingArtifacts)
    assert os.path.exists(os.path.join(out, "clean", "cleaned_entries.tsv"))
    assert os.path.exists(os.path.join(out, ERROR_REPORT_NAME))

    await pipeline.run(["sessionize"])
    assert not os.path.exists(os.path.join(out, ERROR_REPORT_NAME))


async def test_single_stage(tmp_path, corpus):
    directory, truth = corpus
    pipeline = Pipeline(_config(directory, str(tmp_path / "out")))

    result = await pipeline.run_stage("ingest")

    assert result.stage == "ingest"
    assert result.counts["files"] == 2
    assert result.counts["users"] >= 4
    assert result.seconds >= 0


async def test_label(tmp_path, corpus):
    directory, _ = corpus
    rules_path = os.path.join(directory, RULES_NAME)
    pipeline = Pipeline(_config(directory, str(tmp_path / "out")))
    await pipeline.run(["ingest", "clean", "sessionize", "refine"])
    before = load_rules(rules_path)
    told = []

    counts = pipeline.label(ask=lambda prompt: "8", tell=told.append)

    assert counts["rules"] == counts["unknown_urls"] == len(load_rules(rules_path)) - len(before)
    assert len(told) == counts["unknown_urls"]


async def test_label_needs_rules_path(tmp_path, corpus):
    directory, _ = corpus
    config = PipelineConfig(inputs=(directory,), output_dir=str(tmp_path / "out"))

    with pytest.raises(StageFailed) as info:
        await Pipeline(config).run_stage("label")

    assert isinstance(info.value.cause, ConfigError)


def test_run_report_rendering():
    report = RunReport(
        [StageResult("clean", {"loaded": 12, "physical_cleaning_ratio": 41.666}), StageResult("report", {"logs": 1})]
    )

    assert list(report.records()) == [
        ("clean", "loaded", "12"),
        ("clean", "physical_cleaning_ratio", "41.67"),
        ("report", "logs", "1"),
    ]
    assert report.render().splitlines()[0].split() == ["Stage", "Count", "Value"]
    with pytest.raises(KeyError):
        report["cluster"]
