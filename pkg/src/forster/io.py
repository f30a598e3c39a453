"""CSV and metadata I/O. Floats are written with repr() so files round-trip exactly."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .montecarlo import Spectrum

DELIMITERS = {"csv": ",", "tsv": "\t"}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_table(path: Path, header: list[str], rows, fmt: str = "csv") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=DELIMITERS[fmt], lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_columns(path: Path, columns: dict, fmt: str = "csv") -> Path:
    header = list(columns)
    return write_table(path, header, zip(*(np.asarray(c) for c in columns.values())), fmt)


def read_table(path: Path) -> dict[str, np.ndarray]:
    path = Path(path)
    text = path.read_text()
    delimiter = "\t" if "\t" in text.splitlines()[0] else ","
    rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header, data = rows[0], rows[1:]
    try:
        return {name: np.array([float(r[k]) for r in data]) for k, name in enumerate(header)}
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed table ({exc})") from exc


def write_spectrum(path: Path, spec: Spectrum, value_column: str = "rho", with_stderr: bool = True, fmt: str = "csv") -> Path:
    columns = {"detuning_mhz": spec.detunings, value_column: spec.values}
    if with_stderr:
        columns["stderr"] = spec.stderr
    return write_columns(path, columns, fmt)


def read_spectrum(path: Path, meta: dict | None = None) -> Spectrum:
    """Read a spectrum table whose first column is ``detuning_mhz`` and second the values."""
    table = read_table(path)
    names = list(table)
    if names[0] != "detuning_mhz" or len(names) < 2:
        raise ValueError(f"{path}: expected columns detuning_mhz,<value>[,stderr], got {names}")
    stderr = table.get("stderr", np.zeros_like(table[names[1]]))
    return Spectrum(table["detuning_mhz"], table[names[1]], stderr, meta=meta or {"source": str(path)})


def write_metadata(path: Path, meta: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
