"""Template selection, time-axis correlation, peak picking and aggregation.

The pipeline for one stream is::

    quantize -> split_windows -> per window:
        select_template -> correlate_time -> detect_peaks -> window_period
    -> median of accepted periods -> rate = 1e6 / period
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import fft as sp_fft
from scipy.signal import find_peaks

from . import kernels
from .events import ROI, AreaRef, EventStream, VoxelGrid, quantize, split_windows
from .errors import EmptyStream, NoValidWindows, TemplateDeeperThanArea, TemplateRejected

CORRELATION_METHODS = ("auto", "sparse", "fft")

# pixels transformed together on the FFT path (bounds memory per window)
_FFT_PIXEL_CHUNK = 256


@dataclass(frozen=True)
class PeakParams:
    min_prominence: float = 0.3
    min_separation_bins: int = 2

    def __post_init__(self):
        if not 0 < self.min_prominence <= 1:
            raise ValueError(f"min_prominence must be in (0, 1], got {self.min_prominence}")
        if self.min_separation_bins < 1:
            raise ValueError(f"min_separation_bins must be >= 1, got {self.min_separation_bins}")


@dataclass(frozen=True)
class EepprConfig:
    """Estimator parameters with the recommended defaults."""

    window: int = 45
    template_events: int = 1800
    t_quant_us: int = 100
    peaks: PeakParams = field(default_factory=PeakParams)
    max_template_fraction: float = 0.25
    normalize: bool = True
    correlation: str = "auto"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.template_events < 1:
            raise ValueError(f"template_events must be >= 1, got {self.template_events}")
        if self.t_quant_us < 1:
            raise ValueError(f"t_quant_us must be >= 1, got {self.t_quant_us}")
        if not 0 < self.max_template_fraction <= 1:
            raise ValueError(f"max_template_fraction must be in (0, 1], got {self.max_template_fraction}")
        if self.correlation not in CORRELATION_METHODS:
            raise ValueError(f"correlation must be one of {CORRELATION_METHODS}, got {self.correlation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Template:
    area_index: int
    origin: tuple[int, int]
    size: int
    depth_bins: int
    cells: np.ndarray
    event_count: int


@dataclass(frozen=True, eq=False)
class ResponseSeries:
    area_index: int
    scores: np.ndarray
    normalized: bool = False

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.scores.size)

    def __len__(self) -> int:
        return int(self.scores.size)


@dataclass
class WindowEstimate:
    area_index: int
    origin: tuple[int, int] = (0, 0)
    peak_offsets: list[int] = field(default_factory=list)
    period_us: Optional[int] = None
    status: str = "rejected"
    reason: Optional[str] = None
    template_depth: int = 0
    template_events: int = 0
    template_voxels: int = 0
    window_events: int = 0
    method: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RateEstimate:
    rate_hz: float
    period_us: float
    window_estimates: list[WindowEstimate]
    config: EepprConfig

    @property
    def accepted(self) -> list[WindowEstimate]:
        return [w for w in self.window_estimates if w.accepted]

    @property
    def rejected(self) -> list[WindowEstimate]:
        return [w for w in self.window_estimates if not w.accepted]

    def to_dict(self, windows: bool = True) -> dict:
        d = {
            "rate_hz": self.rate_hz,
            "period_us": self.period_us,
            "accepted_windows": len(self.accepted),
            "rejected_windows": len(self.rejected),
            "config": self.config.to_dict(),
        }
        if windows:
            d["windows"] = [w.to_dict() for w in self.window_estimates]
        return d


# ---------------------------------------------------------------------------
# template selection
# ---------------------------------------------------------------------------

def template_depth(bin_counts: np.ndarray, n_events: int, max_fraction: float) -> int:
    """Smallest number of leading bins whose raw event count reaches ``n_events``.

    Raises :class:`TemplateRejected` when the window is empty or the
    threshold is not reached within ``max_fraction`` of the grid depth.
    """
    bin_counts = np.asarray(bin_counts)
    cum = np.cumsum(bin_counts)
    if cum.size == 0 or cum[-1] == 0:
        raise TemplateRejected("EmptyWindow")
    d = int(np.searchsorted(cum, n_events, side="left")) + 1
    if d > cum.size:
        raise TemplateRejected("InsufficientEvents", f"{int(cum[-1])} < {n_events} events in window")
    if d > max_fraction * cum.size:
        raise TemplateRejected(
            "InsufficientEvents", f"template needs {d} of {cum.size} bins (cap {max_fraction:g})"
        )
    return d


def select_template(grid: VoxelGrid, area: AreaRef, n_events: int = 1800, max_fraction: float = 0.25) -> Template:
    counts = grid.bin_event_counts(area.x0, area.y0, area.size, area.size)
    d = template_depth(counts, n_events, max_fraction)
    block = grid.block(area.x0, area.y0, area.size, area.size)
    return Template(
        area_index=area.index,
        origin=(area.x0, area.y0),
        size=area.size,
        depth_bins=d,
        cells=block[:, :, :d].copy(),
        event_count=int(counts[:d].sum()),
    )


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------

def normalize_scores(scores: np.ndarray) -> np.ndarray:
    """Affine min-max rescale to [0, 1]; a constant series maps to zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


def _fft_correlate_rows(area_rows: np.ndarray, tmpl_rows: np.ndarray, n_lags: int) -> np.ndarray:
    # area_rows (P, D), tmpl_rows (P, d); a circular length >= D keeps the
    # negative lags from wrapping onto 0..D-d
    depth = area_rows.shape[1]
    n = sp_fft.next_fast_len(depth, real=True)
    acc = np.zeros(n // 2 + 1, dtype=np.complex128)
    for lo in range(0, area_rows.shape[0], _FFT_PIXEL_CHUNK):
        fa = sp_fft.rfft(area_rows[lo:lo + _FFT_PIXEL_CHUNK], n=n, axis=1)
        ft = sp_fft.rfft(tmpl_rows[lo:lo + _FFT_PIXEL_CHUNK], n=n, axis=1)
        acc += np.einsum("pk,pk->k", fa, ft.conj())
    return sp_fft.irfft(acc, n=n)[:n_lags]


def correlate_time(
    area: np.ndarray,
    template: Union[Template, np.ndarray],
    normalize: bool = False,
    method: str = "fft",
    area_index: int = -1,
) -> ResponseSeries:
    """Slide ``template`` along the time axis of ``area``.

    ``score[tau] = sum_{x,y,k} area[x, y, tau + k] * template[x, y, k]`` for
    ``tau`` in ``0 .. D - d``.  ``method="fft"`` sums per-pixel spectra;
    ``method="sparse"`` enumerates nonzero cell pairs exactly.
    """
    cells = template.cells if isinstance(template, Template) else np.asarray(template)
    if isinstance(template, Template):
        area_index = template.area_index
    area = np.asarray(area)
    if area.ndim != 3 or cells.ndim != 3 or area.shape[:2] != cells.shape[:2]:
        raise ValueError(f"area {area.shape} and template {cells.shape} must share x/y extent")
    depth, d = area.shape[2], cells.shape[2]
    if d > depth:
        raise TemplateDeeperThanArea(f"template depth {d} exceeds area depth {depth}")
    if d < 1:
        raise ValueError("template depth must be >= 1")
    n_lags = depth - d + 1
    if method == "fft":
        rows_a = area.reshape(-1, depth).astype(np.float64)
        rows_t = cells.reshape(-1, d).astype(np.float64)
        active = np.flatnonzero(np.any(rows_t != 0, axis=1))
        if active.size:
            scores = _fft_correlate_rows(rows_a[active], rows_t[active], n_lags)
        else:
            scores = np.zeros(n_lags)
    elif method in ("sparse", "direct"):
        scores = _sparse_dense_pair(area, cells, n_lags).astype(np.float64)
    else:
        raise ValueError(f"unknown correlation method {method!r}")
    if normalize:
        scores = normalize_scores(scores)
    return ResponseSeries(area_index, np.asarray(scores, dtype=np.float64), normalize)


def _sparse_dense_pair(area: np.ndarray, cells: np.ndarray, n_lags: int) -> np.ndarray:
    # template cells keep bins 0..d-1 and area cells are shifted to d.., so one
    # kernel pass sees each (template, area) pair at lag tau + d
    w, h, depth = area.shape
    d = cells.shape[2]
    flat_a = area.reshape(w * h, depth)
    flat_t = cells.reshape(w * h, d)
    pa, ka = np.nonzero(flat_a)
    pt, kt = np.nonzero(flat_t)
    pix = np.concatenate([pt, pa])
    k = np.concatenate([kt, ka + d])
    val = np.concatenate([flat_t[pt, kt], flat_a[pa, ka]]).astype(np.int64)
    order = np.lexsort((k, pix))
    pix, k, val = pix[order], k[order], val[order]
    starts, ends = _runs(pix)
    full = kernels.sparse_time_correlation(starts, ends, k, val, d, n_lags + d)
    # lags below d pair two template cells
    return full[d:]


def _runs(sorted_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if sorted_ids.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    cut = np.flatnonzero(sorted_ids[1:] != sorted_ids[:-1]) + 1
    starts = np.concatenate([[0], cut]).astype(np.int64)
    ends = np.concatenate([cut, [sorted_ids.size]]).astype(np.int64)
    return starts, ends


# ---------------------------------------------------------------------------
# peaks and periods
# ---------------------------------------------------------------------------

def detect_peaks(response: Union[ResponseSeries, np.ndarray], params: PeakParams = PeakParams()) -> np.ndarray:
    """Interior local maxima that stand out by topographic prominence.

    A peak is kept when its prominence is at least
    ``min_prominence * (max - min)`` of the series and it is at least
    ``min_separation_bins`` away from every other kept peak.  Separation is
    enforced after the prominence filter, higher peaks first and the earlier
    one on equal heights.
    """
    scores = response.scores if isinstance(response, ResponseSeries) else np.asarray(response, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("response is empty")
    span = float(scores.max() - scores.min())
    if span == 0.0:
        return np.empty(0, dtype=np.int64)
    # scipy's own ``distance`` runs before prominence and breaks height ties
    # with an unstable sort, so separation is applied here instead
    peaks, _ = find_peaks(scores, prominence=params.min_prominence * span)
    sep = params.min_separation_bins
    if sep <= 1 or peaks.size < 2:
        return peaks.astype(np.int64)
    order = np.lexsort((peaks, -scores[peaks]))
    removed = np.zeros(peaks.size, dtype=bool)
    for i in order:
        if removed[i]:
            continue
        lo = np.searchsorted(peaks, peaks[i] - sep + 1)
        hi = np.searchsorted(peaks, peaks[i] + sep)
        removed[lo:hi] = True
        removed[i] = False
    keep = peaks[~removed]
    return keep.astype(np.int64)


def lower_median(values: Sequence) -> float:
    """Median that picks the lower of the two middle elements."""
    v = np.sort(np.asarray(values))
    if v.size == 0:
        raise ValueError("median of an empty sequence")
    return v[(v.size - 1) // 2]


def window_period(peaks: Sequence[int], t_quant_us: int, area_index: int = -1) -> WindowEstimate:
    """Period from the lower median of consecutive peak spacings."""
    peaks = [int(p) for p in peaks]
    est = WindowEstimate(area_index=area_index, peak_offsets=peaks)
    if len(peaks) < 2:
        est.reason = "TooFewPeaks"
        return est
    deltas = np.diff(peaks)
    est.period_us = int(lower_median(deltas)) * int(t_quant_us)
    est.status = "accepted"
    return est


def aggregate_periods(periods: Sequence[float]) -> float:
    """Median over windows (mean of the two middles for an even count)."""
    if len(periods) == 0:
        raise NoValidWindows("no window produced a period")
    return float(np.median(np.asarray(periods, dtype=np.float64)))


def rate_from_period(period_us: float) -> float:
    return 1e6 / period_us


# ---------------------------------------------------------------------------
# whole pipeline
# ---------------------------------------------------------------------------

@dataclass
class _WindowCells:
    area: AreaRef
    lp: np.ndarray      # local pixel id, ascending
    k: np.ndarray
    value: np.ndarray
    count: np.ndarray


def _group_by_window(grid: VoxelGrid, areas: list[AreaRef], window: int) -> list[_WindowCells]:
    nx = grid.width // window
    ny = grid.height // window
    wx = grid.x // window
    wy = grid.y // window
    valid = np.flatnonzero((wx < nx) & (wy < ny))
    wid = (wy[valid] * nx + wx[valid]).astype(np.int64)
    order = np.argsort(wid, kind="stable")
    idx = valid[order]
    wid = wid[order]
    bounds = np.searchsorted(wid, np.arange(len(areas) + 1))
    out = []
    for a in areas:
        sl = idx[bounds[a.index]:bounds[a.index + 1]]
        lp = (grid.x[sl] - a.x0).astype(np.int64) * window + (grid.y[sl] - a.y0)
        out.append(_WindowCells(a, lp, grid.k[sl], grid.value[sl].astype(np.int64), grid.count[sl]))
    return out


def _choose_method(requested: str, pair_cost: int, n_active: int, depth: int) -> str:
    if requested != "auto":
        return requested
    n = sp_fft.next_fast_len(depth, real=True)
    fft_cost = 2.0 * n_active * n * math.log2(max(n, 2))
    pair_weight = 1.0 if kernels.sparse_time_correlation is kernels.sparse_time_correlation_numba else 20.0
    return "sparse" if pair_weight * pair_cost <= fft_cost else "fft"


def _window_response(wc: _WindowCells, d: int, depth: int, method: str) -> tuple[np.ndarray, str]:
    n_lags = depth - d + 1
    starts, ends = _runs(wc.lp)
    in_tmpl = wc.k < d
    tmpl_per_run = np.add.reduceat(in_tmpl.astype(np.int64), starts) if starts.size else np.empty(0, np.int64)
    active = tmpl_per_run > 0
    pair_cost = int(np.sum(tmpl_per_run * (ends - starts)))
    method = _choose_method(method, pair_cost, int(active.sum()), depth)
    if method == "sparse":
        return kernels.sparse_time_correlation(starts, ends, wc.k, wc.value, d, n_lags).astype(np.float64), method
    run_of_cell = np.repeat(np.arange(starts.size), ends - starts)
    act_rank = np.cumsum(active) - 1
    m = active[run_of_cell]
    rows = act_rank[run_of_cell[m]]
    dense = np.zeros((int(active.sum()), depth), dtype=np.float64)
    dense[rows, wc.k[m]] = wc.value[m]
    return _fft_correlate_rows(dense, dense[:, :d], n_lags), method


def _process_window(wc: _WindowCells, depth: int, cfg: EepprConfig) -> WindowEstimate:
    a = wc.area
    est = WindowEstimate(area_index=a.index, origin=(a.x0, a.y0), window_events=int(wc.count.sum()))
    counts = np.bincount(wc.k, weights=wc.count, minlength=depth)
    try:
        d = template_depth(counts, cfg.template_events, cfg.max_template_fraction)
    except TemplateRejected as exc:
        est.reason = exc.reason
        return est
    est.template_depth = d
    est.template_events = int(counts[:d].sum())
    est.template_voxels = int(np.count_nonzero(wc.k < d))
    scores, est.method = _window_response(wc, d, depth, cfg.correlation)
    response = ResponseSeries(a.index, normalize_scores(scores) if cfg.normalize else scores, cfg.normalize)
    peaks = detect_peaks(response, cfg.peaks)
    per = window_period(peaks, cfg.t_quant_us, a.index)
    est.peak_offsets = per.peak_offsets
    est.period_us = per.period_us
    est.status = per.status
    est.reason = per.reason
    return est


def estimate(
    stream: EventStream,
    config: Optional[EepprConfig] = None,
    roi: Optional[ROI] = None,
    workers: int = 1,
) -> RateEstimate:
    """Estimate the rate (Hz) of the periodic phenomenon seen in ``stream``.

    Windows are processed independently; with ``workers > 1`` they are spread
    over a thread pool (the correlation kernels release the GIL).  The
    result does not depend on the number of workers.
    """
    cfg = config or EepprConfig()
    if len(stream) == 0:
        raise EmptyStream("stream has no events")
    grid = quantize(stream, cfg.t_quant_us, roi)
    areas = split_windows(grid, cfg.window)
    groups = _group_by_window(grid, areas, cfg.window)

    def run(chunk: list[_WindowCells]) -> list[WindowEstimate]:
        return [_process_window(wc, grid.depth, cfg) for wc in chunk]

    if workers > 1 and len(groups) > 1:
        chunks = [groups[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = [w for part in pool.map(run, chunks) for w in part]
    else:
        results = run(groups)
    results.sort(key=lambda w: w.area_index)

    periods = [w.period_us for w in results if w.accepted]
    if not periods:
        raise NoValidWindows(f"all {len(results)} windows were rejected")
    period = aggregate_periods(periods)
    return RateEstimate(rate_from_period(period), period, results, cfg)
