"""Atomic CSV/JSON writers with a versioned, self-describing header."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from . import __version__

CSV_SCHEMA = "abpsim-csv/1"
JSON_SCHEMA = "abpsim-summary/1"
OUTPUT_ENV = "ABPSIM_OUTPUT_DIR"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, os.getcwd())


def atomic_write(path: str, text: str):
    """Write through a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows, config_echo: str = "", seed=None) -> str:
    """Header lines start with '#': schema version, seed, resolved config."""
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} abpsim {__version__}\n")
    if seed is not None:
        buf.write(f"# seed: {seed}\n")
    if config_echo:
        buf.write(f"# config: {config_echo}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, config_echo="", seed=None):
    atomic_write(path, csv_text(columns, rows, config_echo, seed))


def read_csv(path):
    """Returns (meta lines, column names, float array)."""
    meta, body = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            (meta if line.startswith("#") else body).append(line)
    reader = csv.reader(body)
    cols = next(reader)
    data = np.array([[float(v) for v in r] for r in reader if r])
    return meta, cols, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path, payload: dict, config: dict | None = None, seed=None):
    doc = {"schema": JSON_SCHEMA, "version": __version__}
    if seed is not None:
        doc["seed"] = seed
    if config is not None:
        doc["config"] = config
    doc.update(payload)
    atomic_write(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
