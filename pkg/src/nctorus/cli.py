"""Command-line entry point: ``nctorus run`` and ``nctorus validate``."""

from __future__ import annotations

import argparse
import inspect
import logging
import sys
import time
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence, get_args

import anyio
from dotenv import load_dotenv

from . import __version__
from .config import Diagnostic, ExperimentConfig, ExperimentKind, load_config, validate_text
from .exceptions import ConfigError, ValidationError
from .reporting import ExperimentResult, RunManifest, write_outputs
from .runner import ComputationRunner
from .settings import LabSettings
from .tools import AlgebraApi, DiracApi, EuclideanApi, FlowApi, SpectrumApi, WorkflowApi
from .tools.common import kind_of

__all__ = ["main", "run", "validate", "experiment_registry"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_INVALID = 2

Experiment = Callable[[ComputationRunner, ExperimentConfig], Awaitable[ExperimentResult]]

API_CLASSES = [
    AlgebraApi,
    SpectrumApi,
    DiracApi,
    FlowApi,
    EuclideanApi,
    WorkflowApi,
]


def experiment_registry() -> Dict[str, Experiment]:
    """Map every experiment kind to the ``run_<kind>`` coroutine that implements it."""
    registry: Dict[str, Experiment] = {}
    for api_class in API_CLASSES:
        api = api_class()
        for name in dir(api):
            if not name.startswith("run_"):
                continue
            method = getattr(api, name)
            if not inspect.iscoroutinefunction(method):
                continue
            kind = kind_of(name)
            if kind in registry:
                raise RuntimeError(f"experiment kind {kind!r} registered twice")
            registry[kind] = method
    missing = set(get_args(ExperimentKind)) - set(registry)
    if missing:
        raise RuntimeError(f"no implementation for kind(s): {', '.join(sorted(missing))}")
    return registry


async def _execute(config: ExperimentConfig, settings: LabSettings) -> ExperimentResult:
    experiment = experiment_registry()[config.kind]
    runner = ComputationRunner(settings)
    logger.info("Running %s (window N=%d)", config.kind, config.window_N)
    return await experiment(runner, config)


def run(
    config: ExperimentConfig,
    *,
    output_dir: Optional[Path] = None,
    settings: Optional[LabSettings] = None,
) -> RunManifest:
    """Execute one experiment and write its CSV tables and ``manifest.json``.

    The output directory is ``output_dir`` if given, else the config's
    ``output_dir``, else ``NCTORUS_OUTPUT_DIR``. Files are written once, after
    every computation has finished.
    """
    settings = settings or LabSettings()
    target = output_dir or config.output_dir or settings.output_dir
    started = time.perf_counter()
    result = anyio.run(_execute, config, settings)
    elapsed = time.perf_counter() - started
    manifest = write_outputs(
        result,
        config_digest=config.digest(),
        output_dir=Path(target),
        matrix_dump=config.matrix_dump,
        wall_time=elapsed if settings.record_wall_time else None,
    )
    logger.info(
        "Finished %s in %.2fs: %s", config.kind, elapsed, "passed" if manifest.passed else "FAILED"
    )
    return manifest


def validate(path: Path) -> List[Diagnostic]:
    """Every schema and invariant diagnostic for the config at ``path``; never raises."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        return [Diagnostic("error", "<file>", f"cannot read {path}: {exc}")]
    return validate_text(text)


def _build_parser(settings: LabSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nctorus",
        description="Numerical laboratory for the magnetic noncommutative two-torus",
        epilog=(
            "Environment overrides: NCTORUS_OUTPUT_DIR, NCTORUS_LOG_LEVEL, "
            "NCTORUS_MAX_CONCURRENCY, NCTORUS_SPECTRUM_CACHE_ENTRIES, "
            "NCTORUS_DEFAULT_DT, NCTORUS_RECORD_WALL_TIME"
        ),
    )
    parser.add_argument(
        "--version",
        action="store_true",
        help="Print package version and exit",
    )
    parser.add_argument(
        "--list-kinds",
        action="store_true",
        help="List available experiment kinds and exit",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Enable verbose (DEBUG level) logging",
    )
    commands = parser.add_subparsers(dest="command")

    run_parser = commands.add_parser("run", help="Run the experiment described by a config file")
    run_parser.add_argument("--config", required=True, type=Path, help="Path to a JSON config")
    run_parser.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help=f"Directory for result files (default: config output_dir, else {settings.output_dir})",
    )
    run_parser.add_argument(
        "--validate",
        action="store_true",
        help="Only validate the config, as `nctorus validate` does",
    )

    validate_parser = commands.add_parser("validate", help="Check a config file without running it")
    validate_parser.add_argument("--config", required=True, type=Path, help="Path to a JSON config")
    return parser


def _report(diagnostics: Sequence[Diagnostic]) -> int:
    for diagnostic in diagnostics:
        print(diagnostic, file=sys.stderr)
    return EXIT_INVALID if any(d.level == "error" for d in diagnostics) else EXIT_OK


def _first_line(method: Any) -> str:
    doc = (inspect.getdoc(method) or "").strip().splitlines()
    return doc[0] if doc else "No description available"


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    settings = LabSettings()
    parser = _build_parser(settings)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    if args.version:
        print(f"nctorus {__version__}")
        return EXIT_OK

    if args.list_kinds:
        for kind, method in sorted(experiment_registry().items()):
            print(f"{kind}: {_first_line(method)}")
        return EXIT_OK

    if args.command is None:
        parser.print_help()
        return EXIT_INVALID

    if args.command == "validate" or args.validate:
        return _report(validate(args.config))

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _report(exc.diagnostics)
        return EXIT_INVALID

    try:
        manifest = run(config, output_dir=args.output_dir, settings=settings)
    except ValidationError as exc:
        logger.error("Invalid input: %s", exc)
        return EXIT_INVALID
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
