"""Run configuration files and the flags shared by the subcommands"""

import argparse
import configparser
import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from plom.config import OUTPUT_DIR
from plom.exceptions import InputError
from plom.models import RunConfig
from plom.storage import ArtifactStore

logger = logging.getLogger(__name__)

SECTIONS = tuple(RunConfig.model_fields)


def read_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    """INI sections as nested dicts; empty values are left to their defaults"""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Config file not found: {path}", path=path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise InputError(f"Unreadable config file {path}: {e}", path=path) from e

    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise InputError(f"Unknown section [{section}] in {path}; expected one of {list(SECTIONS)}", path=path)
        values[section] = {key: value for key, value in parser.items(section) if value.strip() != ""}
    return values


def apply_override(values: dict[str, dict[str, Any]], assignment: str) -> None:
    """section.key=value"""
    key, sep, value = assignment.partition("=")
    section, dot, field = key.strip().partition(".")
    if not sep or not dot or section not in SECTIONS:
        raise InputError(f"Override must look like section.key=value, got {assignment!r}")
    values.setdefault(section, {})[field] = value.strip()


def build_config(values: dict[str, dict[str, Any]]) -> RunConfig:
    try:
        return RunConfig(**values)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or "config"
        raise InputError(f"Invalid config value for {field}: {error['msg']}", field=field) from e


def add_input_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags that locate the data and the outputs; they override the config file"""
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--input", help="Dataset (CSV or binary, one realization per column)")
    parser.add_argument("--preset", help="Synthetic dataset preset instead of --input")
    parser.add_argument("--format", choices=["auto", "csv", "bin"], help="Input format")
    parser.add_argument("--skip-pca", action="store_true", help="Input already holds normalized [eta_d]")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--output", help="Output directory")
    parser.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override one config value"
    )


def load_run_config(args: argparse.Namespace, config_path: str | None = None) -> RunConfig:
    """Config file (if any), then command-line flags, validated into a RunConfig"""
    path = config_path or getattr(args, "config", None)
    values = read_config_file(path) if path else {}
    flags = {
        ("input", "path"): getattr(args, "input", None),
        ("input", "preset"): getattr(args, "preset", None),
        ("input", "format"): getattr(args, "format", None),
        ("run", "seed"): getattr(args, "seed", None),
        ("run", "output_dir"): getattr(args, "output", None),
    }
    for (section, key), value in flags.items():
        if value is not None:
            values.setdefault(section, {})[key] = value
    if getattr(args, "input", None):
        values["input"].pop("preset", None)
    elif getattr(args, "preset", None):
        values["input"].pop("path", None)
    if getattr(args, "skip_pca", False):
        values.setdefault("pca", {})["skip"] = True
    for assignment in getattr(args, "set", []):
        apply_override(values, assignment)
    cfg = build_config(values)
    logger.debug(f"Run configuration: {cfg.model_dump(mode='json')}")
    return cfg


def open_store(args: argparse.Namespace, output_dir: str | None = None) -> ArtifactStore:
    """Artifact store for the command; remembered on args so errors land next to the outputs"""
    root = output_dir or getattr(args, "output", None) or OUTPUT_DIR
    store = ArtifactStore(root)
    args.store = store
    return store
