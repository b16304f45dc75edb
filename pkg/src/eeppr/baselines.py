"""Per-pixel comparison methods: inter-event median and Fourier peak."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from . import kernels
from .core import lower_median
from .errors import EmptyStream, NoEstimate, WindowTooLarge
from .events import ROI, EventStream

POLARITIES = ("positive", "negative")

# pixels transformed together by the FFT baseline
_PIXEL_CHUNK = 512


@dataclass
class SimpleBaselineResult:
    rate_hz: float
    window_rates: dict[tuple[int, int], float]
    window_periods: dict[tuple[int, int], int]
    pixel_results: int


@dataclass
class FFTBaselineResult:
    rate_hz: float
    rate_map: np.ndarray            # (width, height), NaN where there is no estimate
    raw_map: np.ndarray             # before the 3x3 median filter
    resolution_hz: float
    n_fft: int
    bin_us: int
    polarity: str
    extra: dict = field(default_factory=dict)


def pixel_timestamp_index(stream: EventStream) -> dict[tuple[int, int, bool], np.ndarray]:
    """``(x, y, p) -> sorted timestamps``; mostly for inspection and tests."""
    key = (stream.x.astype(np.int64) * stream.height + stream.y) * 2 + stream.p
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    t_s = stream.t[order]
    ids, first = np.unique(key_s, return_index=True)
    bounds = np.append(first, key_s.size)
    out = {}
    for i, kid in enumerate(ids.tolist()):
        pix, p = divmod(kid, 2)
        x, y = divmod(pix, stream.height)
        out[(x, y, bool(p))] = t_s[bounds[i]:bounds[i + 1]]
    return out


def simple_baseline(stream: EventStream, window: int = 45, roi: Optional[ROI] = None) -> SimpleBaselineResult:
    """Median inter-event time per pixel/polarity, then median per window.

    Per window the period is the median over its pixel results, the rate is
    ``1e6 / period``, and the output is the median over window rates.  Every
    median on an even count takes the lower middle element.
    """
    sub = stream.crop(roi)
    if len(sub) == 0:
        raise EmptyStream("no events in the region of interest")
    nx, ny = sub.width // window, sub.height // window
    if nx == 0 or ny == 0:
        raise WindowTooLarge(f"{window}px windows do not fit a {sub.width}x{sub.height} area")
    key = (sub.x.astype(np.int64) * sub.height + sub.y) * 2 + sub.p
    order = np.argsort(key, kind="stable")
    ids, med = kernels.group_lower_median_deltas(key[order], sub.t[order])
    pix = ids // 2
    x, y = pix // sub.height, pix % sub.height
    wx, wy = x // window, y // window
    inside = (wx < nx) & (wy < ny)
    wid = (wy * nx + wx)[inside]
    med = med[inside]
    if wid.size == 0:
        raise NoEstimate("no pixel holds two events of the same polarity")
    o = np.lexsort((med, wid))
    wid, med = wid[o], med[o]
    uw, first, counts = np.unique(wid, return_index=True, return_counts=True)
    periods = med[first + (counts - 1) // 2]
    window_periods, window_rates = {}, {}
    for w, T in zip(uw.tolist(), periods.tolist()):
        if T <= 0:
            continue
        origin = ((w % nx) * window, (w // nx) * window)
        window_periods[origin] = int(T)
        window_rates[origin] = 1e6 / T
    if not window_rates:
        raise NoEstimate("every window has a zero median period")
    rate = float(lower_median(list(window_rates.values())))
    return SimpleBaselineResult(rate, window_rates, window_periods, int(wid.size))


def default_n_fft(duration_us: int, bin_us: int) -> int:
    n = max(2, -(-duration_us // bin_us))
    return 1 << (n - 1).bit_length()


def _spectral_peak(mag: np.ndarray, harmonic_tolerance: float) -> np.ndarray:
    # mag (P, F) with the DC column already removed.  Take the lowest bin whose
    # magnitude is within the tolerance of the row maximum, then climb to the
    # local maximum of that lobe.
    best = mag.max(axis=1, keepdims=True)
    cand = np.argmax(mag >= (1.0 - harmonic_tolerance) * best, axis=1)
    rows = np.arange(mag.shape[0])
    pos = cand.copy()
    n_f = mag.shape[1]
    while True:
        nxt = np.minimum(pos + 1, n_f - 1)
        up = mag[rows, nxt] > mag[rows, pos]
        if not up.any():
            break
        pos = np.where(up, nxt, pos)
    return pos


def median_filter_3x3(rate_map: np.ndarray) -> np.ndarray:
    """3x3 median over available (non-NaN) neighbours; NaN cells stay NaN.

    Even neighbour counts take the lower middle value so filtered rates stay on
    the DFT grid.
    """
    w, h = rate_map.shape
    pad = np.full((w + 2, h + 2), np.nan)
    pad[1:-1, 1:-1] = rate_map
    stack = np.stack([pad[i:i + w, j:j + h] for i in range(3) for j in range(3)], axis=-1)
    stack.sort(axis=-1)                              # NaNs sort last
    n_valid = np.sum(~np.isnan(stack), axis=-1)
    idx = np.maximum(n_valid - 1, 0) // 2
    out = np.take_along_axis(stack, idx[..., None], axis=-1)[..., 0]
    out[np.isnan(rate_map)] = np.nan
    return out


def fft_baseline(
    stream: EventStream,
    polarity: str = "negative",
    bin_us: int = 100,
    n_fft: Optional[int] = None,
    roi: Optional[ROI] = None,
    min_events: int = 2,
    harmonic_tolerance: float = 0.2,
) -> FFTBaselineResult:
    """Per-pixel spectral peak of the event impulse train, filtered, then mode.

    Events of the chosen polarity become unit impulses on a ``bin_us`` grid.
    Each pixel train is Hann-windowed and transformed with an ``n_fft``-point
    real FFT.  The pixel rate is the lowest-frequency spectral lobe whose peak
    is within ``harmonic_tolerance`` of the strongest non-DC bin.  Pixels with
    fewer than ``min_events`` events get no estimate.
    """
    if polarity not in POLARITIES:
        raise ValueError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
    if bin_us < 1:
        raise ValueError(f"bin_us must be >= 1, got {bin_us}")
    if n_fft is not None and n_fft < 2:
        raise ValueError(f"n_fft must be >= 2, got {n_fft}")
    if not 0 <= harmonic_tolerance < 1:
        raise ValueError(f"harmonic_tolerance must be in [0, 1), got {harmonic_tolerance}")
    sub = stream.crop(roi)
    if len(sub) == 0:
        raise EmptyStream("no events in the region of interest")
    want = polarity == "positive"
    m = sub.p == want
    length = max(1, -(-sub.duration_us // bin_us))
    n = n_fft or default_n_fft(sub.duration_us, bin_us)
    L = min(length, n)
    pix = sub.x[m].astype(np.int64) * sub.height + sub.y[m]
    k = sub.t[m] // bin_us
    keep = k < L
    pix, k = pix[keep], k[keep]
    ids, inv, counts = np.unique(pix, return_inverse=True, return_counts=True)
    sel = counts >= min_events
    resolution = 1e6 / (bin_us * n)
    raw = np.full((sub.width, sub.height), np.nan)
    if not sel.any():
        raise NoEstimate(f"no pixel has {min_events} {polarity} events")
    rank = np.cumsum(sel) - 1
    use = sel[inv]
    row, col = rank[inv[use]], k[use]
    active = ids[sel]
    window = np.hanning(L)
    peaks = np.empty(active.size, np.int64)
    order = np.argsort(row, kind="stable")
    row, col = row[order], col[order]
    bounds = np.searchsorted(row, np.arange(0, active.size + _PIXEL_CHUNK, _PIXEL_CHUNK))
    for c, lo in enumerate(range(0, active.size, _PIXEL_CHUNK)):
        hi = min(lo + _PIXEL_CHUNK, active.size)
        sig = np.zeros((hi - lo, L))
        a, b = bounds[c], bounds[c + 1]
        np.add.at(sig, (row[a:b] - lo, col[a:b]), 1.0)
        spec = np.abs(sp_fft.rfft(sig * window, n=n, axis=1))
        peaks[lo:hi] = _spectral_peak(spec[:, 1:], harmonic_tolerance) + 1
    raw[active // sub.height, active % sub.height] = peaks * resolution
    filtered = median_filter_3x3(raw)
    vals = filtered[~np.isnan(filtered)]
    bins = np.rint(vals / resolution).astype(np.int64)
    uniq, cnt = np.unique(bins, return_counts=True)
    mode_bin = uniq[np.argmax(cnt)]                  # first maximum = lowest frequency
    return FFTBaselineResult(
        rate_hz=float(mode_bin * resolution),
        rate_map=filtered,
        raw_map=raw,
        resolution_hz=resolution,
        n_fft=n,
        bin_us=bin_us,
        polarity=polarity,
        extra={"pixels": int(active.size)},
    )
