"""Result files: sweep tables, reports, inventory snapshots and run manifests.

Every writer goes through a temporary file in the target directory followed
by :func:`os.replace`, so a reader never sees a half-written file. Numbers
are written with ``repr`` (always a '.' decimal, no locale) and lines end in
``\\n``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import __version__

__all__ = [
    "SWEEP_COLUMNS",
    "ANALYTIC_COLUMNS",
    "RunManifest",
    "atomic_write_text",
    "format_value",
    "write_rows_csv",
    "read_rows_csv",
    "write_json",
    "write_inventories_csv",
]

SWEEP_COLUMNS = ("sweep_value", "N_bs_mean", "policy", "p_hit_mean", "ci95", "n_replications", "seed")
ANALYTIC_COLUMNS = ("sweep_variable", "sweep_value", "N_bs_mean", "policy", "p_hit", "T_C")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(v) -> str:
    """Locale-free text for one CSV cell."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item"):  # numpy scalars
        return format_value(v.item())
    return str(v)


def write_rows_csv(rows: Iterable[Mapping], path, columns: Optional[Sequence[str]] = None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    return atomic_write_text(path, buf.getvalue())


def _parse_cell(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_rows_csv(path) -> list[dict]:
    """Rows of a CSV file with numeric cells converted back to numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(obj, path) -> Path:
    """Pretty, key-sorted JSON; NaN becomes ``null`` so the file stays standard."""
    return atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_inventories_csv(inventories: Sequence[Iterable[int]], path) -> Path:
    """Snapshot as ``(station, rank, object)`` rows, rank 0 being the MRU slot."""
    rows = []
    for s, inv in enumerate(inventories):
        items = inv.items() if hasattr(inv, "items") else list(inv)
        rows.extend({"station": s, "rank": r, "object": int(j)} for r, j in enumerate(items))
    return write_rows_csv(rows, path, ("station", "rank", "object"))


@dataclass
class RunManifest:
    """What produced a set of result files, sufficient to rerun it.

    ``wall_clock`` is the elapsed time in seconds and is the only field
    that varies between identical reruns.
    """

    command: str
    config: dict
    seeds: list
    outputs: list = field(default_factory=list)
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    wall_clock: float = 0.0
    started: float = field(default_factory=time.time)

    def finish(self, outputs: Sequence, path) -> Path:
        self.outputs = [str(p) for p in outputs]
        self.wall_clock = time.time() - self.started
        return write_json(self, path)
