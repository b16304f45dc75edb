"""Events, validated streams and quantization into the ternary voxel grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import EmptyStream, InvalidROI, NegativeTimestamp, OutOfRangeEvent, WindowTooLarge

#: ``(x0, y0, width, height)`` in sensor pixels.
ROI = tuple[int, int, int, int]

# refuse to materialise dense grids above this many cells (~1 GB of int8)
MAX_DENSE_CELLS = 1 << 30


class Event(NamedTuple):
    x: int
    y: int
    p: bool
    t: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-sorted events held column-wise.

    ``t`` is int64 microseconds, ``x``/``y`` uint16 pixel coordinates and
    ``p`` a boolean polarity (True = positive).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    duration_us: int

    def __len__(self) -> int:
        return int(self.t.size)

    def __iter__(self) -> Iterator[Event]:
        for x, y, p, t in zip(self.x.tolist(), self.y.tolist(), self.p.tolist(), self.t.tolist()):
            yield Event(x, y, p, t)

    @property
    def events(self) -> list[Event]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.duration_us == other.duration_us
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def segment(self, start_us: int = 0, length_us: Optional[int] = None) -> "EventStream":
        """Events with ``start_us <= t < start_us + length_us``, re-based to 0."""
        end = self.duration_us if length_us is None else min(self.duration_us, start_us + length_us)
        lo, hi = np.searchsorted(self.t, [start_us, end], side="left")
        return EventStream(
            self.t[lo:hi] - start_us,
            self.x[lo:hi],
            self.y[lo:hi],
            self.p[lo:hi],
            self.width,
            self.height,
            max(0, end - start_us),
        )

    def crop(self, roi: Optional[ROI]) -> "EventStream":
        """Events inside ``roi`` with coordinates shifted to the roi origin."""
        if roi is None:
            return self
        x0, y0, w, h = check_roi(roi, self.width, self.height)
        m = (self.x >= x0) & (self.x < x0 + w) & (self.y >= y0) & (self.y < y0 + h)
        return EventStream(
            self.t[m],
            (self.x[m] - x0).astype(np.uint16),
            (self.y[m] - y0).astype(np.uint16),
            self.p[m],
            w,
            h,
            self.duration_us,
        )


def make_stream(t, x, y, p, width: int, height: int, duration_us: Optional[int] = None) -> EventStream:
    """Build a stream from already-sorted, already-checked columns."""
    t = np.ascontiguousarray(t, dtype=np.int64)
    if duration_us is None:
        duration_us = int(t[-1]) + 1 if t.size else 0
    return EventStream(
        t,
        np.ascontiguousarray(x, dtype=np.uint16),
        np.ascontiguousarray(y, dtype=np.uint16),
        np.ascontiguousarray(p, dtype=bool),
        int(width),
        int(height),
        int(duration_us),
    )


def validate_arrays(t, x, y, p, width: int, height: int, duration_us: Optional[int] = None) -> EventStream:
    """Column-wise :func:`validate_stream`."""
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    p = np.asarray(p).astype(bool)
    bad = np.flatnonzero((x < 0) | (x >= width) | (y < 0) | (y >= height))
    if bad.size:
        i = int(bad[0])
        raise OutOfRangeEvent(i, f"({x[i]}, {y[i]}) not in {width}x{height}")
    neg = np.flatnonzero(t < 0)
    if neg.size:
        raise NegativeTimestamp(int(neg[0]))
    if t.size > 1 and np.any(t[1:] < t[:-1]):
        order = np.argsort(t, kind="stable")
        t, x, y, p = t[order], x[order], y[order], p[order]
    stream = make_stream(t, x, y, p, width, height)
    if duration_us is not None:
        if duration_us < stream.duration_us:
            raise ValueError(f"duration_us={duration_us} shorter than last timestamp + 1")
        stream = make_stream(t, x, y, p, width, height, duration_us)
    return stream


def validate_stream(raw_events: Iterable[Sequence], width: int, height: int) -> EventStream:
    """Check ``(x, y, p, t)`` tuples against the sensor and sort them by time.

    The sort is stable, so events sharing a timestamp keep their input order.
    """
    rows = list(raw_events)
    if not rows:
        return make_stream([], [], [], [], width, height, 0)
    arr = np.array([(int(x), int(y), bool(p), int(t)) for x, y, p, t in rows], dtype=np.int64)
    return validate_arrays(arr[:, 3], arr[:, 0], arr[:, 1], arr[:, 2], width, height)


def check_roi(roi: Optional[ROI], width: int, height: int) -> ROI:
    if roi is None:
        return (0, 0, width, height)
    try:
        x0, y0, w, h = (int(v) for v in roi)
    except (TypeError, ValueError):
        raise InvalidROI(f"roi must be (x0, y0, width, height), got {roi!r}") from None
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > width or y0 + h > height:
        raise InvalidROI(f"roi {roi} does not fit a {width}x{height} sensor")
    return (x0, y0, w, h)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Ternary (x, y, time-bin) grid stored as its nonzero cells.

    Cells are sorted by ``(x, y, k)``.  ``count`` holds the number of raw
    events that fell into each cell.  A dense ``(width, height, depth)`` view
    is available through :attr:`values` for grids small enough to hold.
    """

    width: int
    height: int
    depth: int
    t_quant_us: int
    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    value: np.ndarray
    count: np.ndarray
    origin: tuple[int, int] = (0, 0)
    n_events: int = field(default=0)

    @property
    def nnz(self) -> int:
        return int(self.k.size)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.depth)

    @property
    def values(self) -> np.ndarray:
        return self.block(0, 0, self.width, self.height)

    def block(self, x0: int, y0: int, w: int, h: int) -> np.ndarray:
        """Dense int8 sub-volume ``[x0:x0+w, y0:y0+h, :]``."""
        if w * h * self.depth > MAX_DENSE_CELLS:
            raise MemoryError(f"dense block of {w}x{h}x{self.depth} cells is too large")
        out = np.zeros((w, h, self.depth), dtype=np.int8)
        m = (self.x >= x0) & (self.x < x0 + w) & (self.y >= y0) & (self.y < y0 + h)
        out[self.x[m] - x0, self.y[m] - y0, self.k[m]] = self.value[m]
        return out

    def bin_event_counts(self, x0: int, y0: int, w: int, h: int) -> np.ndarray:
        """Raw events per time bin inside a rectangle."""
        m = (self.x >= x0) & (self.x < x0 + w) & (self.y >= y0) & (self.y < y0 + h)
        return np.bincount(self.k[m], weights=self.count[m], minlength=self.depth).astype(np.int64)


def quantize(stream: EventStream, t_quant_us: int, roi: Optional[ROI] = None) -> VoxelGrid:
    """Bin events into ``t_quant_us`` slabs keeping the last event's polarity.

    Event ``t`` lands in bin ``t // t_quant_us``; the grid depth is
    ``ceil(duration_us / t_quant_us)``.  Events outside ``roi`` are dropped and
    coordinates are re-based to the roi origin.
    """
    if int(t_quant_us) < 1:
        raise ValueError(f"t_quant_us must be >= 1, got {t_quant_us}")
    t_quant_us = int(t_quant_us)
    x0, y0, w, h = check_roi(roi, stream.width, stream.height)
    sub = stream.crop(roi) if roi is not None else stream
    if len(sub) == 0:
        raise EmptyStream("no events inside the region of interest")
    depth = -(-max(sub.duration_us, int(sub.t[-1]) + 1) // t_quant_us)
    pix = sub.x.astype(np.int64) * h + sub.y.astype(np.int64)
    pol = np.where(sub.p, 1, -1).astype(np.int8)
    cp, ck, cv, cc = kernels.quantize_cells(pix, sub.t, pol, t_quant_us, depth)
    return VoxelGrid(
        width=w,
        height=h,
        depth=int(depth),
        t_quant_us=t_quant_us,
        x=(cp // h).astype(np.int32),
        y=(cp % h).astype(np.int32),
        k=ck.astype(np.int64),
        value=cv.astype(np.int8),
        count=cc.astype(np.int32),
        origin=(x0, y0),
        n_events=len(sub),
    )


@dataclass(frozen=True)
class AreaRef:
    index: int
    x0: int
    y0: int
    size: int


def split_windows(grid: VoxelGrid, window: int) -> list[AreaRef]:
    """Non-overlapping ``window`` x ``window`` areas anchored at the grid origin.

    Right and bottom margins narrower than ``window`` are left out.  Areas are
    numbered row by row (x varies fastest).
    """
    if window < 1:
        raise ValueError(f"window size must be >= 1, got {window}")
    nx, ny = grid.width // window, grid.height // window
    if nx == 0 or ny == 0:
        raise WindowTooLarge(f"{window}px windows do not fit a {grid.width}x{grid.height} grid")
    return [AreaRef(j * nx + i, i * window, j * window, window) for j in range(ny) for i in range(nx)]
