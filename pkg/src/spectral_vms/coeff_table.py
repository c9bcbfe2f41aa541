"""Offline tabulation of psi over a (Pe1, Pe2) grid and online bilinear lookup.

Only psi is stored; ``tau = 8 h^2 psi / mu`` is rebuilt at query time so one
table serves every element size and diffusivity.

Binary layout (little-endian)::

    b"VMST"  u32 version
    f64 pe1_min, pe1_max, pe2_min, pe2_max, step
    u32 m1, m2, n1, n2
    f64 values[n1 * n2]      (row-major, Pe2 fastest)
    u32 crc32 of everything above
"""

from __future__ import annotations

import io
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .stabilization import PE_GUARD, DEFAULT_TRUNCATION, Truncation, psi, psi_batch

MAGIC = b"VMST"
VERSION = 1
_HEADER = struct.Struct("<4sI5d4I")


class TableFormatError(ValueError):
    """Unreadable, truncated or corrupted table file."""


def _node_count(lo: float, hi: float, step: float) -> int:
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ValueError(f"invalid range [{lo}, {hi}]")
    ratio = (hi - lo) / step
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"range [{lo}, {hi}] is not a whole number of steps of {step}")
    return n + 1


@dataclass(frozen=True)
class StabTable:
    pe1_min: float
    pe1_max: float
    pe2_min: float
    pe2_max: float
    step: float
    m1: int
    m2: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        n1 = _node_count(self.pe1_min, self.pe1_max, self.step)
        n2 = _node_count(self.pe2_min, self.pe2_max, self.step)
        vals = np.ascontiguousarray(self.values, dtype="<f8")
        if vals.shape != (n1, n2):
            raise ValueError(f"values shape {vals.shape} does not match grid ({n1}, {n2})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.m1, self.m2)

    def axis(self, which: int) -> np.ndarray:
        lo = self.pe1_min if which == 1 else self.pe2_min
        n = self.shape[0 if which == 1 else 1]
        return lo + self.step * np.arange(n)

    def node(self, i: int, k: int) -> tuple[float, float]:
        return self.pe1_min + i * self.step, self.pe2_min + k * self.step

    def checksum(self) -> int:
        return zlib.crc32(_encode_body(self))


def build_table(pe1_range=(-32.0, 32.0), pe2_range=None, step: float = 0.125,
                tr: Truncation = DEFAULT_TRUNCATION, check_symmetry: bool = True,
                progress=None) -> StabTable:
    """Evaluate psi at every node of a rectangular grid.

    Rows (fixed Pe2) are evaluated together, which keeps the cost at one
    matrix product per row. ``progress(done, total)`` is called after each row.
    """
    tr = Truncation(*tr).validate()
    pe2_range = pe1_range if pe2_range is None else pe2_range
    lo1, hi1 = map(float, pe1_range)
    lo2, hi2 = map(float, pe2_range)
    step = float(step)
    if not step > 0:
        raise ValueError("step must be positive")
    for v in (lo1, hi1, lo2, hi2):
        if abs(v) > PE_GUARD:
            raise ValueError(f"table range must lie within [-{PE_GUARD:g}, {PE_GUARD:g}]")
    n1 = _node_count(lo1, hi1, step)
    n2 = _node_count(lo2, hi2, step)
    pe1 = lo1 + step * np.arange(n1)
    pe2 = lo2 + step * np.arange(n2)
    values = np.empty((n1, n2))
    for k, p2 in enumerate(pe2):
        values[:, k] = psi_batch(pe1, p2, tr)
        if progress is not None:
            progress(k + 1, n2)
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ArithmeticError("psi table contains non-positive or non-finite samples")
    table = StabTable(lo1, hi1, lo2, hi2, step, tr.m1, tr.m2, values)
    if check_symmetry:
        check_table_symmetry(table)
    return table


def check_table_symmetry(table: StabTable, rtol: float = 1e-10) -> float:
    """Check psi(P) = psi(-P) on the part of the grid that is closed under negation."""
    v = table.values
    # -P maps onto the grid by reversing both axes only for symmetric ranges
    if not (np.isclose(table.pe1_min, -table.pe1_max) and np.isclose(table.pe2_min, -table.pe2_max)):
        return 0.0
    flipped = v[::-1, ::-1]
    rel = float(np.max(np.abs(v - flipped) / np.abs(v)))
    if rel > rtol:
        raise ArithmeticError(f"table symmetry check failed: relative mismatch {rel:.3e}")
    return rel


# ------------------------------------------------------------ persistence

def _encode_body(t: StabTable) -> bytes:
    n1, n2 = t.shape
    head = _HEADER.pack(MAGIC, VERSION, t.pe1_min, t.pe1_max, t.pe2_min, t.pe2_max,
                        t.step, t.m1, t.m2, n1, n2)
    return head + t.values.astype("<f8").tobytes(order="C")


def table_to_bytes(t: StabTable) -> bytes:
    body = _encode_body(t)
    return body + struct.pack("<I", zlib.crc32(body))


def table_from_bytes(data: bytes) -> StabTable:
    if len(data) < _HEADER.size + 4:
        raise TableFormatError("truncated table file (header incomplete)")
    magic, version, lo1, hi1, lo2, hi2, step, m1, m2, n1, n2 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TableFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TableFormatError(f"unsupported table version {version}")
    expected = _HEADER.size + 8 * n1 * n2 + 4
    if len(data) < expected:
        raise TableFormatError(f"truncated table file ({len(data)} of {expected} bytes)")
    if len(data) > expected:
        raise TableFormatError(f"trailing data after table ({len(data) - expected} bytes)")
    body = data[:-4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise TableFormatError("checksum mismatch: table file is corrupted")
    values = np.frombuffer(body, dtype="<f8", offset=_HEADER.size).reshape(n1, n2).copy()
    try:
        return StabTable(lo1, hi1, lo2, hi2, step, m1, m2, values)
    except ValueError as exc:
        raise TableFormatError(str(exc)) from exc


def save_table(t: StabTable, path) -> int:
    """Write ``t`` to ``path``; returns the CRC32 stored in the file."""
    data = table_to_bytes(t)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return struct.unpack("<I", data[-4:])[0]


def load_table(path) -> StabTable:
    with open(path, "rb") as fh:
        return table_from_bytes(fh.read())


def export_csv(t: StabTable, stream: TextIO | None = None) -> str:
    out = io.StringIO()
    out.write("pe1,pe2,psi\n")
    p1 = t.axis(1)
    p2 = t.axis(2)
    for i in range(t.shape[0]):
        for k in range(t.shape[1]):
            out.write(f"{p1[i]:.17g},{p2[k]:.17g},{t.values[i, k]:.17g}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


# ------------------------------------------------------------ online lookup

_SNAP = 1e-9


def _locate(coord: np.ndarray, lo: float, step: float, n: int):
    """Cell index and local coordinate in [0, 1]; snaps onto nodes within 1e-9 steps."""
    r = (coord - lo) / step
    nearest = np.rint(r)
    r = np.where(np.abs(r - nearest) < _SNAP, nearest, r)
    i = np.clip(np.floor(r).astype(np.int64), 0, n - 2)
    return i, r - i


def query(t: StabTable, pe1, pe2=None):
    """Bilinear interpolation of psi; points outside the grid fall back to direct psi.

    Accepts a pair ``query(t, (p1, p2))`` or arrays ``query(t, p1, p2)``.
    """
    if pe2 is None:
        pe1, pe2 = pe1
    scalar = np.ndim(pe1) == 0 and np.ndim(pe2) == 0
    p1, p2 = np.broadcast_arrays(np.asarray(pe1, float), np.asarray(pe2, float))
    p1 = p1.ravel()
    p2 = p2.ravel()
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise ValueError("Peclet numbers must be finite")
    n1, n2 = t.shape
    tol1 = _SNAP * t.step
    inside = ((p1 >= t.pe1_min - tol1) & (p1 <= t.pe1_max + tol1)
              & (p2 >= t.pe2_min - tol1) & (p2 <= t.pe2_max + tol1))
    out = np.empty(p1.shape)
    if n1 < 2 or n2 < 2:
        inside[:] = False
    if np.any(inside):
        a, b = p1[inside], p2[inside]
        i, u = _locate(a, t.pe1_min, t.step, n1)
        k, v = _locate(b, t.pe2_min, t.step, n2)
        vals = t.values
        out[inside] = ((1 - u) * (1 - v) * vals[i, k] + u * (1 - v) * vals[i + 1, k]
                       + (1 - u) * v * vals[i, k + 1] + u * v * vals[i + 1, k + 1])
    if not np.all(inside):
        for idx in np.flatnonzero(~inside):
            out[idx] = psi((p1[idx], p2[idx]), t.truncation)
    return float(out[0]) if scalar else out.reshape(np.broadcast(np.asarray(pe1), np.asarray(pe2)).shape)


def direct_psi(p1, p2, tr: Truncation = DEFAULT_TRUNCATION) -> np.ndarray:
    """psi at arbitrary point lists, grouping points that share a Pe2 value."""
    p1 = np.asarray(p1, float).ravel()
    p2 = np.asarray(p2, float).ravel()
    out = np.empty(p1.shape)
    keys, inverse = np.unique(p2, return_inverse=True)
    for g, val in enumerate(keys):
        sel = np.flatnonzero(inverse == g)
        out[sel] = psi_batch(p1[sel], val, tr)
    return out
