"""Stage orchestration.

Every stage reads the artifacts of the stages before it from the output
directory and writes its own under ``<out>/<stage>``, so each one can also be
run on its own.
"""
import asyncio
from dataclasses import dataclass, field
import logging
import os
import time
import typing

from .cleaner import load_cleaning, load_urls, run_cleaning, save_cleaning
from .config import PipelineConfig
from .constants import stage_names
from .exceptions import ConfigError, EmptyInput, IoFailure, StageFailed, SurfMinerException
from .features import (
    build_vectors,
    export_features,
    load_features,
    load_vectors,
    normalize,
    recode_urls,
    save_url_mapping,
    save_vectors,
)
from .logmodel import ingest, load_store, persist_store
from .refiner import append_rules, interactive_label, load_refined, refine, save_refined
from .reporting import (
    BY_DURATION,
    BY_FREQUENCY,
    log_characteristics,
    render_cleaning_summary,
    render_log_characteristics,
    render_stats,
    render_table,
    render_top_sites,
    report_stats,
    save_log_characteristics,
    save_stats,
    save_top_sites,
    top_sites,
)
from .sessionizer import load_sessions, save_sessions, sessionize
from .som import assign, init_map, render_clusters, save_assignments, save_clusters, save_map, train
from .tables import write_table, write_text

logger = logging.getLogger("surfminer").getChild(__name__)

Counts = typing.Dict[str, typing.Union[int, float]]

ERROR_REPORT_NAME = "error_report.tsv"
TIMINGS_NAME = "timings.tsv"


@dataclass
class StageResult:
    stage: str
    counts: Counts
    seconds: float = 0.0


@dataclass
class RunReport:
    stages: typing.List[StageResult] = field(default_factory=list)

    def __getitem__(self, stage: str) -> Counts:
        for result in self.stages:
            if result.stage == stage:
                return result.counts
        raise KeyError(stage)

    def records(self):
        for result in self.stages:
            for name, value in result.counts.items():
                yield result.stage, name, "%.2f" % value if isinstance(value, float) else str(value)

    def render(self) -> str:
        return render_table(("Stage", "Count", "Value"), list(self.records()))


def _makedirs(directory) -> None:
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise IoFailure("Cannot create %s: %s" % (directory, e)) from e


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config

    def _dir(self, stage: str, create=False) -> str:
        directory = self.config.stage_dir(stage)
        if create:
            _makedirs(directory)
        return directory

    async def ingest(self) -> Counts:
        files = self.config.input_files()
        if not files:
            raise EmptyInput("No input log files in %s" % ", ".join(self.config.inputs or ("(none)",)))

        store = await ingest(files, self.config.day_first)
        if not store.entries:
            raise EmptyInput("No parseable entries in %d input files" % len(files))
        persist_store(store, self._dir("ingest", create=True))
        return {
            "files": len(store.files),
            "lines": sum(f.line_count for f in store.files),
            "entries": len(store.entries),
            "rejected": sum(store.rejected.values()),
            "users": len(store.users),
            "warnings": len(store.warnings),
        }

    def clean(self) -> Counts:
        store = load_store(self._dir("ingest"))
        result = run_cleaning(store, self.config.cleaning)
        save_cleaning(result, store.users, self._dir("clean", create=True))
        logger.info("%s", render_cleaning_summary(result.report))

        report = result.report
        return {
            "loaded": report.loaded,
            "invalid_mac": report.invalid_mac_removed,
            "untargeted": report.untargeted_removed,
            "nonlatin": report.nonlatin_removed,
            "frame_events": report.frame_events_removed,
            "orphans": report.orphans_removed,
            "retained": report.retained,
            "urls": len(result.urls),
            "physical_cleaning_ratio": report.physical_cleaning_ratio,
        }

    def sessionize(self) -> Counts:
        cleaning, users = load_cleaning(self._dir("clean"))
        sessions = sessionize(
            cleaning.entries, self.config.mode, self.config.rate_statistic, self.config.reopen_gap_ms
        )
        save_sessions(sessions, users, self._dir("sessionize", create=True))
        return {
            "surfs": len(sessions.surfs),
            "windows": len(sessions.windows),
            "pages": len(sessions.pages),
            "unterminated": len(sessions.unterminated),
            "orphans": sessions.orphans,
        }

    def refine(self) -> Counts:
        sessions, users = load_sessions(self._dir("sessionize"))
        refined = refine(sessions, self.config.refiner)
        save_refined(refined, users, self._dir("refine", create=True))
        return {
            "surfs": len(refined.surfs),
            "pages": len(refined.pages),
            "aberrant_surfs": refined.aberrant.surfs,
            "aberrant_windows": refined.aberrant.windows,
            "aberrant_pages": refined.aberrant.pages,
            "error_pages": refined.error_pages,
            "unclassified": len(refined.unknown),
            "removed_surf_ratio": refined.removed_surf_ratio,
        }

    def features(self) -> Counts:
        refined, _ = load_refined(self._dir("refine"))
        urls = load_urls(self._dir("clean"))
        options = self.config.features
        directory = self._dir("features", create=True)

        mapping = recode_urls(urls) if options.url_codes else None
        matrix = build_vectors(refined.surfs, refined.categories, options, mapping)
        matrix = normalize(matrix, options.normalization)
        export_features(matrix, os.path.join(directory, "features.tsv"))
        save_vectors(os.path.join(directory, "vectors.tsv"), matrix.vectors)
        if mapping is not None:
            save_url_mapping(os.path.join(directory, "url_codes.tsv"), mapping, urls)
        return {"vectors": matrix.shape[0], "width": matrix.shape[1]}

    def cluster(self) -> Counts:
        features_dir = self._dir("features")
        matrix = load_features(os.path.join(features_dir, "features.tsv"))
        vectors = load_vectors(os.path.join(features_dir, "vectors.tsv"))
        som_config = self.config.som

        som = init_map(som_config, matrix)
        trained, trace = train(som, matrix, som_config)
        assignments, summaries = assign(trained, matrix, vectors)

        directory = self._dir("cluster", create=True)
        save_map(trained, som_config, os.path.join(directory, "map.tsv"))
        save_clusters(summaries, os.path.join(directory, "clusters.tsv"))
        write_text(os.path.join(directory, "clusters.txt"), render_clusters(summaries, som_config.grid_w))
        save_assignments(os.path.join(directory, "assignments.tsv"), matrix.surf_ids, assignments)
        write_table(
            os.path.join(directory, "trace.tsv"),
            ("epoch", "quantization_error"),
            [(0, trace.initial_error)] + [(i + 1, e) for i, e in enumerate(trace.errors)],
        )
        return {
            "vectors": len(matrix),
            "units": trained.units,
            "occupied_units": sum(1 for s in summaries if s.count),
            "clustered": sum(s.count for s in summaries),
            "initial_error": trace.initial_error,
            "final_error": trace.final_error,
        }

    def report(self) -> Counts:
        store = load_store(self._dir("ingest"))
        cleaning, _ = load_cleaning(self._dir("clean"))
        sessions, _ = load_sessions(self._dir("sessionize"))
        refined, _ = load_refined(self._dir("refine"))
        directory = self._dir("report", create=True)

        columns, rows = report_stats(
            store, cleaning.file_reports, sessions, refined, self.config.refiner.interval.min_ms
        )
        save_stats(os.path.join(directory, "stats.tsv"), columns, rows)
        write_text(os.path.join(directory, "stats.txt"), render_stats(columns, rows))

        characteristics = log_characteristics(store)
        save_log_characteristics(os.path.join(directory, "logs.tsv"), characteristics)
        write_text(os.path.join(directory, "logs.txt"), render_log_characteristics(characteristics))

        pages = refined.pages
        by_frequency = top_sites(pages, self.config.top_n, BY_FREQUENCY)
        by_duration = top_sites(pages, self.config.top_n, BY_DURATION)
        save_top_sites(os.path.join(directory, "top_sites.tsv"), by_frequency, by_duration)
        write_text(os.path.join(directory, "top_sites.txt"), render_top_sites(by_frequency, by_duration))
        return {"logs": len(characteristics), "sites": len(by_frequency)}

    def label(self, ask=None, tell=print) -> Counts:
        """Prompt for the categories of unclassified URLs and append them as rules."""
        path = self.config.refiner.rules_path
        if not path:
            raise ConfigError("Labeling needs [refiner] rules to name the rules file")

        refined, _ = load_refined(self._dir("refine"))
        kwargs = {"tell": tell}
        if ask is not None:
            kwargs["ask"] = ask
        rules = interactive_label(refined.unknown, **kwargs)
        if rules:
            append_rules(path, rules)
        logger.info("Appended %d rules to %s", len(rules), path)
        return {"unknown_urls": len({p.url for p in refined.unknown}), "rules": len(rules)}

    async def run_stage(self, stage: str) -> StageResult:
        method = getattr(self, stage)
        started = time.perf_counter()
        try:
            counts = method()
            if asyncio.iscoroutine(counts):
                counts = await counts
        except SurfMinerException as e:
            raise StageFailed(stage, e) from e

        result = StageResult(stage, counts, time.perf_counter() - started)
        logger.info("Stage %s done in %.3fs", stage, result.seconds)
        return result

    def _write_error_report(self, error: StageFailed) -> None:
        try:
            _makedirs(self.config.output_dir)
            write_table(
                os.path.join(self.config.output_dir, ERROR_REPORT_NAME),
                ("stage", "error", "message"),
                [(error.stage, type(error.cause).__name__, str(error.cause))],
            )
        except IoFailure:
            logger.exception("Could not write the error report")

    def _write_run_report(self, report: RunReport) -> None:
        directory = self._dir("report", create=True)
        write_table(os.path.join(directory, "run_report.tsv"), ("stage", "count", "value"), report.records())
        write_text(os.path.join(directory, "run_report.txt"), report.render())
        write_table(
            os.path.join(self.config.output_dir, TIMINGS_NAME),
            ("stage", "seconds"),
            ((r.stage, "%.6f" % r.seconds) for r in report.stages),
        )

    async def run(self, stages: typing.Sequence[str] = stage_names) -> RunReport:
        report = RunReport()
        stale = os.path.join(self.config.output_dir, ERROR_REPORT_NAME)
        if os.path.exists(stale):
            os.remove(stale)
        for stage in stages:
            try:
                report.stages.append(await self.run_stage(stage))
            except StageFailed as e:
                logger.error("%s", e)
                self._write_error_report(e)
                raise

        self._write_run_report(report)
        return report


async def run_pipeline(config: PipelineConfig) -> RunReport:
    """ingest, clean, sessionize, refine, features, cluster and report in turn."""
    return await Pipeline(config).run()
