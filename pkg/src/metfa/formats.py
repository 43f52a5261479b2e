"""On-disk formats: METF sample matrices, PGM maps and JSON reports.

METF v1 layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"METF"
    4       1     version (1)
    5       1     flags (bit 0: tie_broken; other bits must be 0)
    6       4     n_samples  (uint32, >= 1)
    10      4     n_features (uint32, >= 1)
    14      4     width      (uint32; 0 when not spatial)
    18      ...   n_samples * n_features float32, sample-major

Height is not stored: it is ``n_features / width`` and width must divide
n_features. A 1x1 matrix therefore takes 22 bytes.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from metfa.errors import FormatError, NonFiniteValue
from metfa.maps import SampleMatrix

MAGIC = b"METF"
VERSION = 1
_HEADER = struct.Struct("<4sBBIII")
HEADER_SIZE = _HEADER.size  # 18

_FLAG_TIE_BROKEN = 0x01


def encode_sample_matrix(matrix: SampleMatrix) -> bytes:
    width = matrix.shape[0] if matrix.shape else 0
    flags = _FLAG_TIE_BROKEN if matrix.tie_broken else 0
    head = _HEADER.pack(MAGIC, VERSION, flags, matrix.n_samples, matrix.n_features, width)
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(matrix.values, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        i, j = np.argwhere(~np.isfinite(payload))[0]
        raise ValueError(f"value at sample {i}, feature {j} overflows float32")
    return head + payload.tobytes()


def decode_sample_matrix(data: bytes) -> SampleMatrix:
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", len(data))
    magic, version, flags, n, f, width = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if flags & ~_FLAG_TIE_BROKEN:
        raise FormatError(f"unknown flag bits 0x{flags:02x}", 5)
    if n == 0:
        raise FormatError("n_samples must be positive", 6)
    if f == 0:
        raise FormatError("n_features must be positive", 10)
    if width and f % width:
        raise FormatError(f"width {width} does not divide {f} features", 14)
    expected = HEADER_SIZE + 4 * n * f
    if len(data) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(data)}", len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes", expected)
    values = np.frombuffer(data, dtype="<f4", count=n * f, offset=HEADER_SIZE).reshape(n, f)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise NonFiniteValue(i, j, HEADER_SIZE + 4 * (i * f + j))
    shape = (width, f // width) if width else None
    return SampleMatrix(values.astype(np.float64), shape=shape, tie_broken=bool(flags & _FLAG_TIE_BROKEN))


def write_sample_matrix(matrix: SampleMatrix, path) -> None:
    Path(path).write_bytes(encode_sample_matrix(matrix))


def read_sample_matrix(path) -> SampleMatrix:
    return decode_sample_matrix(Path(path).read_bytes())


# ------------------------------------------------------------------------ PGM

TERNARY_LEVELS = {-1: 0, 0: 128, 1: 255}


def map_to_bytes(values, mode: str = "grayscale") -> bytes:
    v = np.asarray(values, dtype=np.float64).ravel()
    if mode == "grayscale":
        # round half up
        return np.floor(255.0 * np.clip(v, 0.0, 1.0) + 0.5).astype(np.uint8).tobytes()
    if mode == "ternary":
        try:
            return bytes(TERNARY_LEVELS[int(x)] for x in v)
        except KeyError:
            raise ValueError("ternary maps take only -1, 0 and +1") from None
    raise ValueError(f"unknown mode {mode!r}")


def encode_pgm(values, shape, mode: str = "grayscale") -> bytes:
    if shape is None:
        raise ValueError("exporting a map needs a spatial shape (width, height)")
    w, h = shape
    payload = map_to_bytes(values, mode)
    if len(payload) != w * h:
        raise ValueError(f"map has {len(payload)} values, shape {w}x{h} needs {w * h}")
    return f"P5\n{w} {h}\n255\n".encode("ascii") + payload


def export_map(values, shape, path, mode: str = "grayscale") -> None:
    """Write a feature map as a binary PGM (row-major, feature y*width + x)."""
    Path(path).write_bytes(encode_pgm(values, shape, mode))


def read_pgm(path) -> tuple[tuple[int, int], bytes]:
    """Parse a P5 file with maxval 255; returns ((width, height), pixels)."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", pos)
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError("not a binary PGM", 0)
    w, h, maxval = (int(t) for t in fields[1:])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    pixels = data[pos + 1 :]
    if len(pixels) != w * h:
        raise FormatError(f"expected {w * h} pixels, got {len(pixels)}", pos + 1)
    return (w, h), pixels


# ----------------------------------------------------------------------- JSON


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return '"undefined"'
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _dump(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.append("true" if obj is True else "false" if obj is False else "null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        for i, (k, v) in enumerate(items):
            out.append(pad)
            _dump(str(k), indent, level + 1, out)
            out.append(": ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            out.append("[]")
            return
        # numeric arrays stay on one line
        out.append("[")
        for i, v in enumerate(seq):
            if i:
                out.append(", ")
            _dump(v, indent, level + 1, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    """Serialize with sorted keys and floats at 17 significant digits.

    Non-finite floats are written as the string "undefined".
    """
    out: list[str] = []
    _dump(report, 2, 0, out)
    return "".join(out) + "\n"


def write_report(report: dict, path) -> None:
    path = Path(path)
    try:
        path.write_text(dumps_report(report), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
