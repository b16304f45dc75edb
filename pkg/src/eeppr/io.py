"""Text (``t_us,x,y,p``) and binary (``EVS1``) event-stream files.

Binary layout, all little-endian::

    header (24 bytes)
        0   4s   magic "EVS1" (the trailing digit is the format version)
        4   u16  width
        6   u16  height
        8   u64  event_count
        16  u64  duration_us
    record (16 bytes each)
        0   u64  t
        8   u16  x
        10  u16  y
        12  u8   p (0/1)
        13  3x   zero padding
"""

from __future__ import annotations

import io as _io
import os
import struct
import warnings
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import BadMagic, CountMismatch, OutOfRangeEvent, ParseError, TruncatedFile, UnsortedEvents
from .events import EventStream, validate_arrays

PathLike = Union[str, os.PathLike]

MAGIC = b"EVS1"
VERSION = 1
HEADER = struct.Struct("<4sHHQQ")
RECORD = np.dtype(
    {"names": ["t", "x", "y", "p"], "formats": ["<u8", "<u2", "<u2", "u1"], "offsets": [0, 8, 10, 12], "itemsize": 16}
)
assert HEADER.size == 24 and RECORD.itemsize == 16

TEXT_HEADER = "t,x,y,p"


# ---------------------------------------------------------------------------
# binary
# ---------------------------------------------------------------------------

def to_bytes(stream: EventStream) -> bytes:
    rec = np.zeros(len(stream), dtype=RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    head = HEADER.pack(MAGIC, stream.width, stream.height, len(stream), stream.duration_us)
    return head + rec.tobytes()


def write_binary(stream: EventStream, path: PathLike) -> None:
    Path(path).write_bytes(to_bytes(stream))


def from_bytes(buf: bytes, strict: bool = False) -> EventStream:
    if len(buf) < HEADER.size:
        raise TruncatedFile(f"{len(buf)} bytes is shorter than the {HEADER.size}-byte header")
    magic, width, height, count, duration = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    body = len(buf) - HEADER.size
    if body % RECORD.itemsize:
        raise TruncatedFile(f"{body} body bytes is not a whole number of {RECORD.itemsize}-byte records")
    n = body // RECORD.itemsize
    if n != count:
        raise CountMismatch(f"header declares {count} events, file holds {n}")
    rec = np.frombuffer(buf, dtype=RECORD, count=n, offset=HEADER.size)
    t = rec["t"].astype(np.int64)
    if n and int(rec["t"].max()) > np.iinfo(np.int64).max:
        raise ParseError(0, "timestamp does not fit 63 bits")
    bad_p = np.flatnonzero(rec["p"] > 1)
    if bad_p.size:
        raise ParseError(int(bad_p[0]) + 1, f"polarity {rec['p'][bad_p[0]]} not in {{0, 1}}")
    x = rec["x"].astype(np.int64)
    y = rec["y"].astype(np.int64)
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        raise OutOfRangeEvent(int(bad[0]))
    if n > 1 and np.any(t[1:] < t[:-1]):
        if strict:
            raise UnsortedEvents("binary events are not sorted by timestamp")
        warnings.warn("binary events were not time-sorted; re-sorting", stacklevel=3)
    if n and duration < int(t.max()) + 1:
        raise ParseError(0, f"duration_us {duration} shorter than last timestamp + 1")
    return validate_arrays(t, x, y, rec["p"], width, height, duration)


def read_binary(path: PathLike, strict: bool = False) -> EventStream:
    return from_bytes(Path(path).read_bytes(), strict=strict)


# ---------------------------------------------------------------------------
# text
# ---------------------------------------------------------------------------

def write_text(stream: EventStream, path: PathLike, header: bool = True) -> None:
    cols = np.column_stack([stream.t, stream.x.astype(np.int64), stream.y.astype(np.int64), stream.p.astype(np.int64)])
    with open(path, "w", newline="\n") as fh:
        if header:
            fh.write(TEXT_HEADER + "\n")
        np.savetxt(fh, cols, fmt="%d", delimiter=",")


def _is_header(line: str) -> bool:
    return line.replace(" ", "").lower().startswith("t,x,y,p")


def _scan_lines(lines: list[str], first_no: int) -> np.ndarray:
    rows = []
    for off, line in enumerate(lines):
        no = first_no + off
        s = line.strip()
        if not s:
            continue
        parts = s.split(",")
        if len(parts) != 4:
            raise ParseError(no, f"expected 4 fields, got {len(parts)}")
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise ParseError(no, f"non-integer field in {s!r}") from None
        if p not in (0, 1):
            raise ParseError(no, f"polarity {p} not in {{0, 1}}")
        if t < 0 or x < 0 or y < 0:
            raise ParseError(no, "negative value")
        rows.append((t, x, y, p))
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def parse_text(text: str, width: Optional[int] = None, height: Optional[int] = None) -> EventStream:
    lines = text.splitlines()
    first_no = 1
    if lines and _is_header(lines[0]):
        lines = lines[1:]
        first_no = 2
    arr = None
    if any(s.strip() for s in lines):
        try:
            # fast path; any irregularity (warnings included) falls through to
            # the line scanner, which reports the offending line number
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                arr = np.loadtxt(_io.StringIO("\n".join(lines)), delimiter=",", dtype=np.int64, ndmin=2)
            if arr.size and (arr.shape[1] != 4 or np.any(arr < 0) or np.any(arr[:, 3] > 1)):
                arr = None
        except (ValueError, Warning):
            arr = None
    if arr is None or (arr.size == 0 and any(s.strip() for s in lines)):
        arr = _scan_lines(lines, first_no)
    arr = arr.reshape(-1, 4)
    t, x, y, p = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    if width is None:
        width = int(x.max()) + 1 if x.size else 1
    if height is None:
        height = int(y.max()) + 1 if y.size else 1
    return validate_arrays(t, x, y, p, width, height)


def read_text(path: PathLike, width: Optional[int] = None, height: Optional[int] = None) -> EventStream:
    """Read ``t_us,x,y,p`` lines; sensor size defaults to max coordinate + 1."""
    return parse_text(Path(path).read_text(), width, height)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def detect_format(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".evs", ".bin"):
        return "binary"
    if suffix in (".csv", ".txt"):
        return "text"
    with open(path, "rb") as fh:
        return "binary" if fh.read(4) == MAGIC else "text"


def read_events(
    path: PathLike,
    fmt: str = "auto",
    width: Optional[int] = None,
    height: Optional[int] = None,
    strict: bool = False,
) -> EventStream:
    if fmt == "auto":
        fmt = detect_format(path)
    if fmt == "binary":
        return read_binary(path, strict=strict)
    if fmt == "text":
        return read_text(path, width, height)
    raise ValueError(f"unknown format {fmt!r}")


def write_events(stream: EventStream, path: PathLike, fmt: str = "auto") -> None:
    if fmt == "auto":
        fmt = "text" if Path(path).suffix.lower() in (".csv", ".txt") else "binary"
    if fmt == "binary":
        write_binary(stream, path)
    elif fmt == "text":
        write_text(stream, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


__all__ = [
    "MAGIC",
    "VERSION",
    "read_binary",
    "write_binary",
    "read_text",
    "write_text",
    "read_events",
    "write_events",
    "parse_text",
    "to_bytes",
    "from_bytes",
]
