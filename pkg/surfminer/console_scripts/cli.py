import argparse
import asyncio
import logging
import os
import sys

from surfminer.config import apply_overrides, load_config
from surfminer.constants import stage_names
from surfminer.exceptions import (
    ConfigError,
    NonInteractiveEnvironment,
    StageFailed,
    SurfMinerException,
)
from surfminer.generator import generate_synthetic
from surfminer.pipeline import Pipeline, RunReport, run_pipeline

logger = logging.getLogger("surfminer").getChild(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE_FAILED = 2

COMMANDS = stage_names + ("label", "generate", "run")
_TAKES_INPUTS = ("ingest", "run")
_REPORT_TEXTS = ("stats.txt", "logs.txt", "top_sites.txt")


class ArgumentParser(argparse.ArgumentParser):
    """Exits with the usage error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", default=None, help="configuration file")
    common.add_argument("--seed", type=int, default=None, help="SOM and generator seed")
    common.add_argument(
        "--mode", type=int, default=None, choices=(1, 2, 3), help="unterminated window strategy"
    )
    common.add_argument("--min-time", type=int, default=None, help="minimum visit duration in ms")
    common.add_argument("--top", type=int, default=None, help="number of top sites reported")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="output debug messages")

    parser = ArgumentParser(prog="surfminer", description="Client-side web usage mining")
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)
    subparsers.required = True
    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[common], help="%s stage" % command)
        if command in _TAKES_INPUTS:
            sub.add_argument("inputs", nargs="*", help="log files or directories")
    return parser


def _print_report(report: RunReport) -> None:
    print(report.render(), end="")


def _generate(config) -> int:
    try:
        truth = generate_synthetic(config.generator, config.generator_seed, config.output_dir)
    except SurfMinerException as e:
        print("surfminer: stage generate failed: %s" % e, file=sys.stderr)
        return EXIT_STAGE_FAILED
    print(
        "Generated %d entries in %d files under %s"
        % (truth.counts["entries"], len(truth.files), config.output_dir)
    )
    return EXIT_OK


async def _single_stage(config, command) -> RunReport:
    result = await Pipeline(config).run_stage(command)
    return RunReport([result])


def _run(config, command) -> int:
    try:
        if command == "run":
            report = asyncio.run(run_pipeline(config))
        else:
            report = asyncio.run(_single_stage(config, command))
    except StageFailed as e:
        if command == "label" and isinstance(e.cause, NonInteractiveEnvironment):
            logger.warning("Labeling skipped: %s", e.cause)
            return EXIT_OK
        if isinstance(e.cause, ConfigError):
            print("surfminer: error: %s" % e.cause, file=sys.stderr)
            return EXIT_USAGE
        print("surfminer: stage %s failed: %s" % (e.stage, e.cause), file=sys.stderr)
        return EXIT_STAGE_FAILED

    _print_report(report)
    if command in ("report", "run"):
        for name in _REPORT_TEXTS:
            with open(os.path.join(config.stage_dir("report"), name), encoding="utf-8") as f:
                print()
                print(f.read(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)-8s %(name)-15s %(message)s",
    )

    try:
        config = apply_overrides(
            load_config(args.config),
            seed=args.seed,
            mode=args.mode,
            min_time=args.min_time,
            top=args.top,
            out=args.out,
            inputs=getattr(args, "inputs", None),
        )
        if args.command in _TAKES_INPUTS:
            config.validate()
    except ConfigError as e:
        print("surfminer: error: %s" % e, file=sys.stderr)
        return EXIT_USAGE

    if args.command == "generate":
        return _generate(config)
    return _run(config, args.command)


if __name__ == "__main__":
    sys.exit(main())
