"""CSV and structured-text writers with shortest round-trip float formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..errors import SpecError


def fmt(value) -> str:
    """Shortest decimal that round-trips the binary value."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(path, header, rows, manifest=None):
    path = Path(path)
    buf = io.StringIO()
    if manifest is not None:
        buf.write(f"# manifest={manifest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_csv(path):
    """Return ``(header, float array)``; comment lines starting with '#' are skipped.

    Raises :class:`SpecError` on empty or ragged input.
    """
    path = Path(path)
    if not path.exists():
        raise SpecError(f"no such CSV file: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2:
        raise SpecError(f"CSV {path} has no data rows")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    rows = []
    for i, r in enumerate(reader, start=2):
        if len(r) != len(header):
            raise SpecError(f"CSV {path} line {i}: expected {len(header)} fields, got {len(r)}")
        try:
            rows.append([float(v) for v in r])
        except ValueError as exc:
            raise SpecError(f"CSV {path} line {i}: {exc}") from None
    return header, np.array(rows, dtype=float)


def read_manifest_ref(path):
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("# manifest="):
            return ln.split("=", 1)[1].strip()
        if not ln.startswith("#"):
            break
    return None


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")
