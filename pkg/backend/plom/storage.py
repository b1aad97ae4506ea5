"""
Artifact storage for runs

Layout of a run directory:
- run.json / report JSON files (UTF-8, sorted keys)
- curves/*.csv (plot-ready series, 17 significant digits)
- learned/*.bin, bases/*.bin, trajectories/*.bin (matrices)
- error.json when a stage fails

Matrices are stored one realization per column, either as CSV or in the
binary format: magic "PLOM", u32 rows, u32 cols, f64 column-major, little-endian.
"""

import csv
import json
import logging
import struct
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from plom.config import BINARY_MAGIC, CSV_SIGNIFICANT_DIGITS, OUTPUT_DIR
from plom.exceptions import InputError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sII")


def format_number(value: Any) -> str:
    """Fixed-precision text for CSV cells"""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{CSV_SIGNIFICANT_DIGITS}g}"
    return str(value)


def _resolve_format(path: Path, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    return "bin" if path.suffix.lower() in (".bin", ".plom") else "csv"


def read_matrix(path: str | Path, fmt: str = "auto") -> np.ndarray:
    """Load a matrix stored one realization per column"""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Input file not found: {path}", path=path)
    fmt = _resolve_format(path, fmt)
    if fmt == "bin":
        return _read_binary(path)
    if fmt == "csv":
        return _read_csv(path)
    raise InputError(f"Unknown matrix format: {fmt}", path=path)


def write_matrix(path: str | Path, matrix: np.ndarray, fmt: str = "auto", header: Sequence[str] | None = None) -> Path:
    """Write a matrix, creating parent directories"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if _resolve_format(path, fmt) == "bin":
        rows, cols = matrix.shape
        with open(path, "wb") as f:
            f.write(_HEADER.pack(BINARY_MAGIC, rows, cols))
            f.write(np.asarray(matrix, dtype="<f8").tobytes(order="F"))
    else:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            if header is not None:
                writer.writerow(header)
            for row in matrix:
                writer.writerow([format_number(v) for v in row])
    logger.debug(f"Wrote matrix {matrix.shape} to {path}")
    return path


def _read_binary(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise InputError(f"Truncated matrix header in {path}", path=path)
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise InputError(f"Bad magic {magic!r} in {path}", path=path)
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise InputError(
            f"Matrix payload of {path} has {len(data) - _HEADER.size} bytes, expected {expected - _HEADER.size}",
            path=path,
        )
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return payload.reshape((rows, cols), order="F").astype(float)


def _read_csv(path: Path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    except (UnicodeDecodeError, csv.Error) as e:
        raise InputError(f"Unreadable CSV {path}: {e}", path=path) from e
    if not rows:
        raise InputError(f"Empty matrix file: {path}", path=path)

    def numeric(row: list[str]) -> list[float] | None:
        try:
            return [float(cell) for cell in row]
        except ValueError:
            return None

    # Optional header row
    if numeric(rows[0]) is None:
        rows = rows[1:]
    values = []
    for index, row in enumerate(rows):
        parsed = numeric(row)
        if parsed is None:
            raise InputError(f"Non-numeric cell in {path}, row {index + 1}", path=path)
        values.append(parsed)
    if not values:
        raise InputError(f"Matrix file has a header but no data: {path}", path=path)
    widths = {len(row) for row in values}
    if len(widths) != 1:
        raise InputError(f"Ragged rows in {path}: widths {sorted(widths)}", path=path)
    return np.array(values, dtype=float)


class ArtifactStore:
    """Writes the artifacts of one run under a root directory"""

    def __init__(self, root: str | Path = OUTPUT_DIR, auto_create: bool = True):
        self.root = Path(root)
        if auto_create:
            self._ensure_root()

    def _ensure_root(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        logger.info(f"Artifact store at {self.root}")

    def path(self, relative: str) -> Path:
        return self.root / relative

    def write_json(self, relative: str, payload: dict[str, Any]) -> Path:
        """UTF-8 JSON with stable key order"""
        path = self.path(relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(payload), f, sort_keys=True, indent=2, ensure_ascii=False)
            f.write("\n")
        return path

    def read_json(self, relative: str) -> dict[str, Any]:
        with open(self.path(relative), encoding="utf-8") as f:
            data: dict[str, Any] = json.load(f)
        return data

    def write_rows(self, relative: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Plot-ready CSV series"""
        path = self.path(relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) for v in row])
        return path

    def write_matrix(self, relative: str, matrix: np.ndarray, fmt: str = "auto") -> Path:
        return write_matrix(self.path(relative), matrix, fmt)

    def write_error(self, record: dict[str, Any]) -> Path | None:
        """error.json, skipped when the directory is not writable"""
        try:
            return self.write_json("error.json", record)
        except OSError as e:
            logger.error(f"Could not write error record in {self.root}: {e}")
            return None


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no NaN/Inf
        return value if np.isfinite(value) else None
    return value
