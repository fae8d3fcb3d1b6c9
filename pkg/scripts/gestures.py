#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Simulate RFID gesture captures, train Einsum Networks and report accuracy and cost

commands: simulate | aoa | preprocess | features | train | eval | fuse | cost | pipeline
"""

from airtight.cli import configure_commandline
from einsum_gestures.commands import EXIT_USAGE, run_command
from einsum_gestures.config import ConfigError, resolve_config
import logging
from pathlib import Path
import sys

logger = logging.getLogger(__name__)

DEFAULT_LOG_LEVEL = logging.WARNING
OPTIONAL_ARGUMENTS = [
    [
        "-l",
        "--loglevel",
        "NOTSET",
        "desired logging level ("
        + "case-insensitive string: DEBUG, INFO, WARNING, or ERROR",
        False,
    ],
    ["-v", "--verbose", False, "verbose output (logging level == INFO)", False],
    [
        "-w",
        "--veryverbose",
        False,
        "very verbose output (logging level == DEBUG)",
        False,
    ],
    ["-c", "--config", "", "JSON configuration file layered over the defaults", False],
    ["-d", "--dataset", "", "workspace directory holding the dataset and its artifacts", False],
    ["-o", "--out", "", "output directory of the cost command", False],
    ["-k", "--classes", -1, "number of gesture classes to simulate (1-21)", False],
    ["-n", "--samples", -1, "samples per class to simulate", False],
    ["-s", "--seed", -1, "dataset seed", False],
    ["-t", "--split-seed", -1, "seed of the stratified train/test split", False],
    ["-e", "--epochs", -1, "EM training epochs", False],
    ["-f", "--fusion", "", "fusion mode: product or average", False],
    ["-j", "--workers", -1, "worker processes (0: one per CPU)", False],
    ["-x", "--deterministic", False, "run sequentially for bit-exact outputs", False],
    [
        "-p",
        "--check-published",
        False,
        "fail unless every cost figure matches the published tables (alias: --paper-check)",
        False,
    ],
]
POSITIONAL_ARGUMENTS = [
    # each row is a list with 3 elements: name, type, help
    ["command", str, "pipeline stage to run"],
]
ALIASES = {"--paper-check": "--check-published"}
FLAG_KEYS = {
    "classes": "classes",
    "samples": "samples_per_class",
    "seed": "seed",
    "split_seed": "split_seed",
    "epochs": "epochs",
    "fusion": "fusion",
    "workers": "workers",
}


def canonical_args(argv: list) -> list:
    """Replace alias flags with the names the parser knows."""
    return [ALIASES.get(a, a) for a in argv]


def overrides(kwargs: dict) -> dict:
    """Configuration values given on the command line; sentinels mean "not given"."""
    d = dict()
    for flag, key in FLAG_KEYS.items():
        value = kwargs.get(flag)
        if value in (-1, "", None):
            continue
        d[key] = value
    if kwargs.get("deterministic"):
        d["deterministic"] = True
    return d


def main(**kwargs):
    """
    main function
    """
    try:
        config = resolve_config(
            overrides(kwargs), config_path=Path(kwargs["config"]) if kwargs["config"] else None
        )
    except ConfigError as err:
        logger.error(str(err))
        sys.exit(EXIT_USAGE)
    sys.exit(
        run_command(
            kwargs["command"],
            config,
            workspace=Path(kwargs["dataset"]) if kwargs["dataset"] else None,
            out=Path(kwargs["out"]) if kwargs["out"] else None,
            check=kwargs["check_published"],
        )
    )


if __name__ == "__main__":
    sys.argv[1:] = canonical_args(sys.argv[1:])
    try:
        kwargs = configure_commandline(
            OPTIONAL_ARGUMENTS, POSITIONAL_ARGUMENTS, DEFAULT_LOG_LEVEL
        )
    except SystemExit as err:
        # argparse reports usage errors with status 2
        sys.exit(EXIT_USAGE if err.code == 2 else err.code)
    main(**kwargs)
