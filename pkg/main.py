#!/usr/bin/env python3
"""
Main entry point for spixreg

Command-line tools for superpixel-regularized segmentation: classic SLIC,
coarse-annotation synthesis, direct superpixel fitting, toy training and
prediction, evaluation and run comparison.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from backend import BackendOrchestrator, CommandResult, load_settings
from backend.settings import Settings
from engine.errors import EXIT_INPUT_ERROR, EXIT_OK, SpixError, exit_code_for

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(settings: Settings, level: Optional[str] = None) -> None:
    """Console plus file logging; the log directory is created on demand"""
    log_file = Path(settings.logging.file)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    except OSError as e:
        print(f"Cannot open log file {log_file}: {e}", file=sys.stderr)
    logging.basicConfig(
        level=getattr(logging, (level or settings.logging.level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _radius(value: str):
    return value if value.lower() == "auto" else int(value)


def _size(value: str):
    parts = value.lower().replace('x', ',').split(',')
    if len(parts) == 1:
        parts = parts * 2
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spixreg", description=__doc__.strip().splitlines()[0])
    parser.add_argument('--settings', help="settings YAML (default: config/settings.yaml)")
    parser.add_argument('--log-level', help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument('--quiet', action='store_true', help="disable progress bars")
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('slic', help="classic SLIC superpixels")
    p.add_argument('--image', required=True)
    p.add_argument('--n', type=int)
    p.add_argument('--compactness', type=float)
    p.add_argument('--iters', type=int)
    p.add_argument('--out-labels', required=True)
    p.add_argument('--out-overlay')

    p = commands.add_parser('coarsen', help="coarse annotation from a fine label map")
    p.add_argument('--fine', required=True)
    p.add_argument('--radius', type=float)
    p.add_argument('--epsilon', type=float)
    p.add_argument('--out', required=True)

    p = commands.add_parser('eval', help="pixel accuracy and boundary recall")
    p.add_argument('--pred', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--r', type=_radius, help="'auto' or an integer radius")
    p.add_argument('--variant', choices=('two_sided', 'standard'))
    p.add_argument('--seed', type=int)
    p.add_argument('--out-json')

    p = commands.add_parser('fit', help="fit superpixels to one image with the SLIC loss")
    p.add_argument('--image', required=True)
    p.add_argument('--levels', type=int)
    p.add_argument('--m', type=float)
    p.add_argument('--steps', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--out-labels', required=True)

    p = commands.add_parser('train', help="train the toy encoder")
    p.add_argument('--data-dir', required=True)
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--m', type=float)
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--out-checkpoint', required=True)

    p = commands.add_parser('predict', help="segment an image with a checkpoint")
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--image', required=True)
    p.add_argument('--out', required=True)

    p = commands.add_parser('compare', help="one-sided Mann-Whitney U test of two metric files")
    p.add_argument('--metrics-a', required=True)
    p.add_argument('--metrics-b', required=True)
    p.add_argument('--field', dest='field_name', default='BR', choices=('BR', 'ACC'))

    p = commands.add_parser('experiment', help="run a lambda / m / radius sweep")
    p.add_argument('--config', required=True)
    p.add_argument('--out')
    p.add_argument('--workers', type=int)

    p = commands.add_parser('synth', help="write a synthetic dataset")
    p.add_argument('--out-dir', required=True)
    p.add_argument('--train', type=int, default=200)
    p.add_argument('--val', type=int, default=50)
    p.add_argument('--test', type=int, default=50)
    p.add_argument('--size', type=_size, default=(64, 64))
    p.add_argument('--classes', type=int, default=3)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--coarse-radius', type=float)
    p.add_argument('--epsilon', type=float)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> CommandResult:
    parser = build_parser()
    args = parser.parse_args(argv)
    options = vars(args).copy()
    command = options.pop('command')
    settings_path = options.pop('settings')
    log_level = options.pop('log_level')
    quiet = options.pop('quiet')

    try:
        settings = load_settings(settings_path)
    except SpixError as e:
        return CommandResult(False, str(e), exit_code_for(e))
    setup_logging(settings, log_level)
    logger.info(f"Running {command}")

    orchestrator = BackendOrchestrator(settings, progress=not quiet and sys.stderr.isatty())
    return orchestrator.execute(command, **options)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    try:
        result = run(argv)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INPUT_ERROR
    if result.success:
        print(result.message)
        return EXIT_OK
    print(f"error: {result.message}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
