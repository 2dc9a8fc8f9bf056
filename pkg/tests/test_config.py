import os

import pytest

from surfminer.config import PipelineConfig, apply_overrides, load_config, write_default_config
from surfminer.exceptions import ConfigError
from surfminer.features import Normalization
from surfminer.sessionizer import TerminationMode
from surfminer.som import SomInit

SHIPPED_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "surfminer.conf")


def _write(tmp_path, text):
    path = tmp_path / "surfminer.conf"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_shipped_file_lists_the_defaults():
    assert load_config(SHIPPED_CONFIG) == PipelineConfig()


def test_no_file_means_defaults():
    config = load_config()

    assert config == PipelineConfig()
    assert config.mode == TerminationMode.AVERAGE_RATE
    assert config.refiner.interval.min_ms == 20000
    assert config.som.initial_sigma == 1.5
    assert config.top_n == 10


def test_partial_file(tmp_path):
    path = _write(
        tmp_path,
        "[sessionizer]\nmode = 1\n\n[features]\nnormalization = MinMax\nperiod_hours = 5, 13, 21\n"
        "\n[som]\ninit = uniform\nsigma0 = 0.75\n\n[input]\npaths = a.txt,\n  b.txt\n",
    )

    config = load_config(path)

    assert config.mode == TerminationMode.LAST_EVENT
    assert config.features.normalization.mode == Normalization.MINMAX
    assert config.features.period_hours == (5, 13, 21)
    assert config.generator.period_hours == (5, 13, 21)
    assert config.som.init == SomInit.UNIFORM_RANGE
    assert config.som.sigma0 == 0.75
    assert config.inputs == ("a.txt", "b.txt")
    assert config.source == path
    assert config.cleaning == PipelineConfig().cleaning


def test_written_config_round_trip(tmp_path):
    config = apply_overrides(PipelineConfig(), seed=9, mode=2, min_time=15000, top=5, out="elsewhere", environ={})
    path = str(tmp_path / "written.conf")

    write_default_config(path, config)

    assert load_config(path) == config


@pytest.mark.parametrize(
    "text",
    [
        "[som]\ngrid_w = abc\n",
        "[som]\nalpha0 = 2\n",
        "[sessionizer]\nmode = 4\n",
        "[sessionizer]\nrate_statistic = mode\n",
        "[sessionizer]\nreopen_gap_ms = 0\n",
        "[features]\nnormalization = l2\n",
        "[features]\nperiod_hours = 12, 6, 18\n",
        "[parser]\nday_first = maybe\n",
        "[refiner]\nmin_time_ms = 5000\nmax_time_ms = 100\n",
        "[report]\ntop_n = 0\n",
        "[generator]\ncrash_rate = 3\n",
        "mode = 1\n",
    ],
)
def test_bad_values(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.conf"))


def test_overrides():
    config = apply_overrides(PipelineConfig(), seed=4, mode=1, min_time=30000, top=3, environ={})

    assert config.som.seed == 4
    assert config.generator_seed == 4
    assert config.mode == TerminationMode.LAST_EVENT
    assert config.refiner.interval.min_ms == 30000
    assert config.refiner.interval.max_ms == PipelineConfig().refiner.interval.max_ms
    assert config.top_n == 3


def test_output_dir_precedence():
    env = {"SURFMINER_OUT": "/tmp/from-env"}

    assert apply_overrides(PipelineConfig(), environ={}).output_dir == "surfminer-out"
    assert apply_overrides(PipelineConfig(), environ=env).output_dir == "/tmp/from-env"
    assert apply_overrides(PipelineConfig(), out="cli", environ=env).output_dir == "cli"


@pytest.mark.parametrize("kwargs", [dict(mode=5), dict(min_time=5000000), dict(top=0)])
def test_bad_overrides(kwargs):
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), environ={}, **kwargs)


def test_input_files(tmp_path):
    (tmp_path / "logs").mkdir()
    for name in ("b.txt", "a.txt", "notes.md"):
        (tmp_path / "logs" / name).write_text("", encoding="utf-8")
    single = tmp_path / "extra.log"
    single.write_text("", encoding="utf-8")

    config = PipelineConfig(inputs=(str(tmp_path / "logs"), str(single)))

    assert config.input_files() == [
        str(tmp_path / "logs" / "a.txt"),
        str(tmp_path / "logs" / "b.txt"),
        str(single),
    ]


def test_validate(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig(inputs=(str(tmp_path / "absent"),)).validate()

    config = load_config(_write(tmp_path, "[refiner]\nrules = %s\n" % (tmp_path / "rules.tsv")))
    with pytest.raises(ConfigError):
        config.validate()

    PipelineConfig(inputs=(str(tmp_path),)).validate()


def test_stage_dir():
    assert PipelineConfig(output_dir="out").stage_dir("clean") == os.path.join("out", "clean")
