"""NLPF1 field snapshots, CSV tables and atomic file writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .spectral import SpectralField, TorusGrid

MAGIC = b"NLPF1\n"
LAYOUT = "row-major complex interleaved little-endian float64"


class SnapshotFormatError(ValueError):
    pass


def encode_snapshot(field: SpectralField) -> bytes:
    """Serialize a field: magic line, JSON header line, raw coefficients.

    Coefficients are written species-major in FFT lattice ordering.
    """
    header = {
        "d": field.grid.d,
        "n": field.grid.n,
        "period": field.grid.period,
        "m": field.m,
        "time": field.time,
        "layout": LAYOUT,
        "shape": list(field.coeffs.shape),
        "ordering": "fft",
    }
    body = np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes()
    return MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + body


def decode_snapshot(data: bytes) -> SpectralField:
    if not data.startswith(MAGIC):
        raise SnapshotFormatError("missing NLPF1 magic")
    rest = data[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise SnapshotFormatError("missing header line")
    header = json.loads(rest[:nl])
    if header.get("layout") != LAYOUT:
        raise SnapshotFormatError(f"unsupported layout {header.get('layout')!r}")
    grid = TorusGrid(header["d"], header["n"], header["period"])
    shape = tuple(header.get("shape", (header["m"],) + grid.shape))
    raw = rest[nl + 1:]
    expected = int(np.prod(shape)) * 16
    if len(raw) != expected:
        raise SnapshotFormatError(f"expected {expected} payload bytes, got {len(raw)}")
    coeffs = np.frombuffer(raw, dtype="<c16").reshape(shape).astype(np.complex128)
    return SpectralField(grid, coeffs, float(header["time"]))


def write_snapshot(path, field: SpectralField) -> None:
    atomic_write_bytes(path, encode_snapshot(field))


def read_snapshot(path) -> SpectralField:
    return decode_snapshot(Path(path).read_bytes())


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def format_float(x) -> str:
    # repr round-trips float64 exactly
    return repr(float(x))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                    for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    return header, rows


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)!r}")
