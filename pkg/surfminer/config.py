"""Pipeline configuration: one INI file, then environment, then command line."""
import configparser
from dataclasses import dataclass, field, replace
import glob
import logging
import os
import typing

from .cleaner import CleaningConfig
from .constants import DEFAULT_REOPEN_GAP_MS, DEFAULT_TOP_N, OUTPUT_ENV_VAR
from .exceptions import ConfigError
from .features import FeatureOptions, Normalization, NormalizationSpec
from .generator import GeneratorConfig
from .refiner import RefinerConfig, ValidityInterval
from .sessionizer import TerminationMode
from .som import SomConfig, SomInit

logger = logging.getLogger("surfminer").getChild(__name__)

DEFAULT_OUTPUT_DIR = "surfminer-out"
DEFAULT_INPUT_PATTERN = "*.txt"
RATE_STATISTICS = ("mean", "median")


@dataclass(frozen=True)
class PipelineConfig:
    inputs: typing.Tuple[str, ...] = ()
    input_pattern: str = DEFAULT_INPUT_PATTERN
    output_dir: str = DEFAULT_OUTPUT_DIR
    day_first: bool = True
    cleaning: CleaningConfig = CleaningConfig()
    mode: TerminationMode = TerminationMode.AVERAGE_RATE
    rate_statistic: str = "mean"
    reopen_gap_ms: int = DEFAULT_REOPEN_GAP_MS
    refiner: RefinerConfig = RefinerConfig()
    features: FeatureOptions = FeatureOptions()
    som: SomConfig = SomConfig()
    top_n: int = DEFAULT_TOP_N
    generator: GeneratorConfig = GeneratorConfig()
    generator_seed: int = 0
    source: typing.Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.rate_statistic not in RATE_STATISTICS:
            raise ConfigError("rate_statistic must be one of %s" % ", ".join(RATE_STATISTICS))
        if self.reopen_gap_ms < 1:
            raise ConfigError("reopen_gap_ms must be positive")
        if self.top_n < 1:
            raise ConfigError("top_n must be positive")

    def stage_dir(self, stage: str) -> str:
        return os.path.join(self.output_dir, stage)

    def input_files(self) -> typing.List[str]:
        """Input paths with directories expanded to their matching files."""
        files = []
        for path in self.inputs:
            if not os.path.exists(path):
                raise ConfigError("Input path %s does not exist" % path)
            if os.path.isdir(path):
                files.extend(sorted(glob.glob(os.path.join(path, self.input_pattern))))
            else:
                files.append(path)
        return files

    def validate(self) -> None:
        self.input_files()
        rules = self.refiner.rules_path
        if rules and not os.path.exists(rules):
            raise ConfigError("Rules file %s does not exist" % rules)


def _split_list(text: str) -> typing.Tuple[str, ...]:
    return tuple(item.strip() for item in text.replace("\n", ",").split(",") if item.strip())


class _Reader:
    """Typed access to a parsed file, reporting bad values with their location."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    def _raw(self, section, key):
        try:
            return self.parser.get(section, key, fallback=None)
        except configparser.Error as e:
            raise ConfigError(str(e))

    def _convert(self, section, key, default, convert):
        raw = self._raw(section, key)
        if raw is None:
            return default
        try:
            return convert(raw.strip())
        except (ValueError, KeyError) as e:
            raise ConfigError("[%s] %s: invalid value %r (%s)" % (section, key, raw, e))

    def string(self, section, key, default):
        return self._convert(section, key, default, str)

    def integer(self, section, key, default):
        return self._convert(section, key, default, int)

    def number(self, section, key, default):
        return self._convert(section, key, default, float)

    def optional_number(self, section, key, default):
        return self._convert(section, key, default, lambda v: float(v) if v else None)

    def boolean(self, section, key, default):
        def convert(value):
            lowered = value.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError("not a boolean")
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]

        return self._convert(section, key, default, convert)

    def strings(self, section, key, default):
        return self._convert(section, key, default, _split_list)

    def integers(self, section, key, default):
        return self._convert(section, key, default, lambda v: tuple(int(i) for i in _split_list(v)))


def _from_parser(parser: configparser.ConfigParser, source=None) -> PipelineConfig:
    r = _Reader(parser)
    base = PipelineConfig()
    cleaning = CleaningConfig(
        allowed_schemes=tuple(
            s.lower() for s in r.strings("cleaning", "allowed_schemes", base.cleaning.allowed_schemes)
        ),
        nonlatin_filter_on=r.boolean("cleaning", "nonlatin_filter", base.cleaning.nonlatin_filter_on),
        zero_mac_invalid=r.boolean("cleaning", "zero_mac_invalid", base.cleaning.zero_mac_invalid),
        local_hosts=r.strings("cleaning", "local_hosts", base.cleaning.local_hosts),
    )
    refiner = RefinerConfig(
        interval=ValidityInterval(
            r.integer("refiner", "min_time_ms", base.refiner.interval.min_ms),
            r.integer("refiner", "max_time_ms", base.refiner.interval.max_ms),
        ),
        error_title_patterns=r.strings("refiner", "error_titles", base.refiner.error_title_patterns),
        rules_path=r.string("refiner", "rules", base.refiner.rules_path),
    )
    features = FeatureOptions(
        pages_per_vector=r.integer("features", "pages_per_vector", base.features.pages_per_vector),
        url_codes=r.boolean("features", "url_codes", base.features.url_codes),
        durations=r.boolean("features", "durations", base.features.durations),
        one_hot=r.boolean("features", "one_hot", base.features.one_hot),
        period_hours=r.integers("features", "period_hours", base.features.period_hours),
        normalization=NormalizationSpec(
            mode=r._convert(
                "features", "normalization", base.features.normalization.mode, lambda v: Normalization(v.lower())
            ),
            include_durations=r.boolean(
                "features", "include_durations", base.features.normalization.include_durations
            ),
            max_value_cap=r.optional_number(
                "features", "max_value_cap", base.features.normalization.max_value_cap
            ),
        ),
    )
    som = SomConfig(
        grid_w=r.integer("som", "grid_w", base.som.grid_w),
        grid_h=r.integer("som", "grid_h", base.som.grid_h),
        epochs=r.integer("som", "epochs", base.som.epochs),
        alpha0=r.number("som", "alpha0", base.som.alpha0),
        sigma0=r.optional_number("som", "sigma0", base.som.sigma0),
        seed=r.integer("som", "seed", base.som.seed),
        init=r._convert("som", "init", base.som.init, lambda v: SomInit(v.lower())),
        neighborhood_cutoff=r.boolean("som", "neighborhood_cutoff", base.som.neighborhood_cutoff),
    )
    g = base.generator
    generator = GeneratorConfig(
        users=r.integer("generator", "users", g.users),
        files=r.integer("generator", "files", g.files),
        surfs_per_user=r.integers("generator", "surfs_per_user", g.surfs_per_user),
        pages_per_window=r.integers("generator", "pages_per_window", g.pages_per_window),
        secondary_pages=r.integers("generator", "secondary_pages", g.secondary_pages),
        secondary_window_rate=r.number("generator", "secondary_window_rate", g.secondary_window_rate),
        invalid_mac_rate=r.number("generator", "invalid_mac_rate", g.invalid_mac_rate),
        untargeted_rate=r.number("generator", "untargeted_rate", g.untargeted_rate),
        nonlatin_rate=r.number("generator", "nonlatin_rate", g.nonlatin_rate),
        frameset_rate=r.number("generator", "frameset_rate", g.frameset_rate),
        frame_count=r.integer("generator", "frame_count", g.frame_count),
        crash_rate=r.number("generator", "crash_rate", g.crash_rate),
        skew_rate=r.number("generator", "skew_rate", g.skew_rate),
        short_visit_rate=r.number("generator", "short_visit_rate", g.short_visit_rate),
        slow_visit_rate=r.number("generator", "slow_visit_rate", g.slow_visit_rate),
        error_page_rate=r.number("generator", "error_page_rate", g.error_page_rate),
        orphan_rate=r.number("generator", "orphan_rate", g.orphan_rate),
        start_date=r.integers("generator", "start_date", g.start_date),
        period_hours=features.period_hours,
        file_prefix=r.string("generator", "file_prefix", g.file_prefix),
    )
    return PipelineConfig(
        inputs=r.strings("input", "paths", base.inputs),
        input_pattern=r.string("input", "pattern", base.input_pattern),
        output_dir=r.string("output", "dir", base.output_dir),
        day_first=r.boolean("parser", "day_first", base.day_first),
        cleaning=cleaning,
        mode=r._convert("sessionizer", "mode", base.mode, lambda v: TerminationMode(int(v))),
        rate_statistic=r.string("sessionizer", "rate_statistic", base.rate_statistic),
        reopen_gap_ms=r.integer("sessionizer", "reopen_gap_ms", base.reopen_gap_ms),
        refiner=refiner,
        features=features,
        som=som,
        top_n=r.integer("report", "top_n", base.top_n),
        generator=generator,
        generator_seed=r.integer("generator", "seed", base.generator_seed),
        source=source,
    )


def load_config(path: typing.Optional[str] = None) -> PipelineConfig:
    """Read ``path`` (defaults everywhere when None)."""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError("Cannot read config %s: %s" % (path, e)) from e
        except configparser.Error as e:
            raise ConfigError("Bad config %s: %s" % (path, e)) from e
    try:
        return _from_parser(parser, path)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def apply_overrides(
    config: PipelineConfig,
    seed: typing.Optional[int] = None,
    mode: typing.Optional[int] = None,
    min_time: typing.Optional[int] = None,
    top: typing.Optional[int] = None,
    out: typing.Optional[str] = None,
    inputs: typing.Optional[typing.Sequence[str]] = None,
    environ: typing.Mapping[str, str] = os.environ,
) -> PipelineConfig:
    changes: typing.Dict[str, typing.Any] = {}
    if environ.get(OUTPUT_ENV_VAR):
        changes["output_dir"] = environ[OUTPUT_ENV_VAR]
    if out is not None:
        changes["output_dir"] = out
    if inputs:
        changes["inputs"] = tuple(inputs)
    if seed is not None:
        changes["som"] = replace(config.som, seed=seed)
        changes["generator_seed"] = seed
    if mode is not None:
        try:
            changes["mode"] = TerminationMode(mode)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if min_time is not None:
        interval = replace(config.refiner.interval, min_ms=min_time)
        changes["refiner"] = replace(config.refiner, interval=interval)
    if top is not None:
        changes["top_n"] = top
    return replace(config, **changes)


def _yes_no(value: bool) -> str:
    return "yes" if value else "no"


def _joined(values) -> str:
    return ", ".join(str(v) for v in values)


def config_sections(config: PipelineConfig = PipelineConfig()) -> typing.Dict[str, typing.Dict[str, str]]:
    f, s, g = config.features, config.som, config.generator
    return {
        "input": {"paths": _joined(config.inputs), "pattern": config.input_pattern},
        "output": {"dir": config.output_dir},
        "parser": {"day_first": _yes_no(config.day_first)},
        "cleaning": {
            "allowed_schemes": _joined(config.cleaning.allowed_schemes),
            "nonlatin_filter": _yes_no(config.cleaning.nonlatin_filter_on),
            "zero_mac_invalid": _yes_no(config.cleaning.zero_mac_invalid),
            "local_hosts": _joined(config.cleaning.local_hosts),
        },
        "sessionizer": {
            "mode": str(int(config.mode)),
            "rate_statistic": config.rate_statistic,
            "reopen_gap_ms": str(config.reopen_gap_ms),
        },
        "refiner": {
            "min_time_ms": str(config.refiner.interval.min_ms),
            "max_time_ms": str(config.refiner.interval.max_ms),
            "error_titles": _joined(config.refiner.error_title_patterns),
            "rules": config.refiner.rules_path,
        },
        "features": {
            "pages_per_vector": str(f.pages_per_vector),
            "url_codes": _yes_no(f.url_codes),
            "durations": _yes_no(f.durations),
            "one_hot": _yes_no(f.one_hot),
            "period_hours": _joined(f.period_hours),
            "normalization": f.normalization.mode.value,
            "include_durations": _yes_no(f.normalization.include_durations),
            "max_value_cap": "" if f.normalization.max_value_cap is None else repr(f.normalization.max_value_cap),
        },
        "som": {
            "grid_w": str(s.grid_w),
            "grid_h": str(s.grid_h),
            "epochs": str(s.epochs),
            "alpha0": repr(s.alpha0),
            "sigma0": "" if s.sigma0 is None else repr(s.sigma0),
            "seed": str(s.seed),
            "init": s.init.value,
            "neighborhood_cutoff": _yes_no(s.neighborhood_cutoff),
        },
        "report": {"top_n": str(config.top_n)},
        "generator": {
            "seed": str(config.generator_seed),
            "users": str(g.users),
            "files": str(g.files),
            "surfs_per_user": _joined(g.surfs_per_user),
            "pages_per_window": _joined(g.pages_per_window),
            "secondary_pages": _joined(g.secondary_pages),
            "secondary_window_rate": repr(g.secondary_window_rate),
            "invalid_mac_rate": repr(g.invalid_mac_rate),
            "untargeted_rate": repr(g.untargeted_rate),
            "nonlatin_rate": repr(g.nonlatin_rate),
            "frameset_rate": repr(g.frameset_rate),
            "frame_count": str(g.frame_count),
            "crash_rate": repr(g.crash_rate),
            "skew_rate": repr(g.skew_rate),
            "short_visit_rate": repr(g.short_visit_rate),
            "slow_visit_rate": repr(g.slow_visit_rate),
            "error_page_rate": repr(g.error_page_rate),
            "orphan_rate": repr(g.orphan_rate),
            "start_date": _joined(g.start_date),
            "file_prefix": g.file_prefix,
        },
    }


def write_default_config(path, config: PipelineConfig = PipelineConfig()) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(config_sections(config))
    try:
        with open(path, "w", encoding="utf-8") as f:
            parser.write(f)
    except OSError as e:
        raise ConfigError("Cannot write config %s: %s" % (path, e)) from e
