"""Hot inner loops, each in a compiled flavour and a pure-numpy flavour.

The module-level names without a suffix (``quantize_cells``,
``sparse_time_correlation``, ``group_lower_median_deltas``) dispatch to the
backend chosen in :mod:`eeppr._accel`.  Both flavours are always importable
so tests and benchmarks can compare them directly.
"""

import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, jit

# Upper bound on the number of (template cell, area cell) pairs materialised at
# once by the numpy correlation path.
_PAIR_CHUNK = 1 << 22


# ---------------------------------------------------------------------------
# quantization: last event per (pixel, bin)
# ---------------------------------------------------------------------------

def quantize_cells_numpy(pix, t, pol, t_quant, depth):
    """Reduce time-sorted events to one cell per (pixel, time bin).

    Returns ``(cell_pix, cell_k, cell_val, cell_count)`` sorted by
    ``(pix, k)``.  ``cell_val`` is the polarity of the last event in the cell.
    """
    pix = np.asarray(pix, dtype=np.int64)
    k = np.asarray(t, dtype=np.int64) // t_quant
    key = pix * depth + k
    rev = key[::-1]
    uniq, first_rev, counts = np.unique(rev, return_index=True, return_counts=True)
    last = key.size - 1 - first_rev
    return (
        uniq // depth,
        uniq % depth,
        np.asarray(pol, dtype=np.int8)[last],
        counts.astype(np.int32),
    )


def _quantize_loop(pix, t, pol, t_quant, n_pix):
    n = t.shape[0]
    last_bin = np.full(n_pix, -1, np.int64)
    slot = np.zeros(n_pix, np.int64)
    cell_pix = np.empty(n, np.int64)
    cell_k = np.empty(n, np.int64)
    cell_val = np.empty(n, np.int8)
    cell_cnt = np.empty(n, np.int32)
    m = 0
    for i in range(n):
        q = pix[i]
        k = t[i] // t_quant
        if last_bin[q] == k:
            s = slot[q]
            cell_val[s] = pol[i]
            cell_cnt[s] += 1
        else:
            last_bin[q] = k
            slot[q] = m
            cell_pix[m] = q
            cell_k[m] = k
            cell_val[m] = pol[i]
            cell_cnt[m] = 1
            m += 1
    return cell_pix[:m], cell_k[:m], cell_val[:m], cell_cnt[:m]


_quantize_loop_jit = jit(_quantize_loop)


def quantize_cells_numba(pix, t, pol, t_quant, depth):
    # events are time-sorted, so a pixel never returns to an earlier bin and a
    # single pass with a per-pixel "open cell" slot suffices
    pix = np.ascontiguousarray(pix, dtype=np.int64)
    t = np.ascontiguousarray(t, dtype=np.int64)
    pol = np.ascontiguousarray(pol, dtype=np.int8)
    n_pix = int(pix.max()) + 1 if pix.size else 1
    cp, ck, cv, cc = _quantize_loop_jit(pix, t, pol, np.int64(t_quant), n_pix)
    order = np.argsort(cp, kind="stable")
    return cp[order], ck[order], cv[order], cc[order]


# ---------------------------------------------------------------------------
# time-axis correlation on sparse cells
# ---------------------------------------------------------------------------

def _sparse_corr_loop(starts, ends, k, val, depth, n_lags):
    out = np.zeros(n_lags, np.int64)
    for r in range(starts.shape[0]):
        e = ends[r]
        i = starts[r]
        while i < e and k[i] < depth:
            ki = k[i]
            vi = val[i]
            for j in range(i, e):
                lag = k[j] - ki
                if lag >= n_lags:
                    break
                out[lag] += vi * val[j]
            i += 1
    return out


_sparse_corr_loop_jit = jit(_sparse_corr_loop)


def sparse_time_correlation_numba(starts, ends, k, val, depth, n_lags):
    """Time-lag correlation of a leading template with its own area.

    Cells are grouped in consecutive per-pixel runs ``[starts[r], ends[r])``
    that together cover every cell, with ``k`` ascending inside each run.
    The template is every cell with ``k < depth`` and
    ``out[lag] = sum T[p, k] * A[p, k + lag]``.
    """
    return _sparse_corr_loop_jit(
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(ends, dtype=np.int64),
        np.ascontiguousarray(k, dtype=np.int64),
        np.ascontiguousarray(val, dtype=np.int64),
        np.int64(depth),
        np.int64(n_lags),
    )


def sparse_time_correlation_numpy(starts, ends, k, val, depth, n_lags):
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    val = np.asarray(val, dtype=np.int64)
    out = np.zeros(n_lags, np.int64)
    if k.size == 0 or n_lags <= 0:
        return out
    cell_end = np.repeat(ends, ends - starts)
    tmpl = np.flatnonzero(k < depth)
    if tmpl.size == 0:
        return out
    lens = cell_end[tmpl] - tmpl
    csum = np.cumsum(lens)
    lo = 0
    while lo < tmpl.size:
        base = csum[lo - 1] if lo else 0
        hi = int(np.searchsorted(csum, base + _PAIR_CHUNK, side="right"))
        hi = max(hi, lo + 1)
        ti, tl = tmpl[lo:hi], lens[lo:hi]
        rep = np.repeat(ti, tl)
        offs = np.arange(rep.size) - np.repeat(np.cumsum(tl) - tl, tl)
        j = rep + offs
        lag = k[j] - k[rep]
        ok = lag < n_lags
        prod = (val[rep] * val[j])[ok]
        acc = np.bincount(lag[ok], weights=prod, minlength=n_lags)
        out += np.rint(acc).astype(np.int64)
        lo = hi
    return out


# ---------------------------------------------------------------------------
# simple baseline: lower median of consecutive deltas per group
# ---------------------------------------------------------------------------

def group_lower_median_deltas_numpy(group, t):
    """Per group, the lower-middle median of consecutive timestamp deltas.

    ``group`` must be sorted and ``t`` sorted within each group.  Returns
    ``(group_ids, medians)`` for groups holding at least two timestamps.
    """
    group = np.asarray(group, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    if group.size < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    same = group[1:] == group[:-1]
    dg = group[1:][same]
    dv = (t[1:] - t[:-1])[same]
    if dg.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    order = np.lexsort((dv, dg))
    dg, dv = dg[order], dv[order]
    ids, first, counts = np.unique(dg, return_index=True, return_counts=True)
    return ids, dv[first + (counts - 1) // 2]


def _group_median_loop(group, t, out_ids, out_med):
    n = group.shape[0]
    m = 0
    i = 0
    while i < n:
        j = i + 1
        while j < n and group[j] == group[i]:
            j += 1
        if j - i >= 2:
            d = np.empty(j - i - 1, np.int64)
            for q in range(j - i - 1):
                d[q] = t[i + q + 1] - t[i + q]
            d.sort()
            out_ids[m] = group[i]
            out_med[m] = d[(d.shape[0] - 1) // 2]
            m += 1
        i = j
    return m


_group_median_loop_jit = jit(_group_median_loop)


def group_lower_median_deltas_numba(group, t):
    group = np.ascontiguousarray(group, dtype=np.int64)
    t = np.ascontiguousarray(t, dtype=np.int64)
    ids = np.empty(group.size, np.int64)
    med = np.empty(group.size, np.int64)
    m = _group_median_loop_jit(group, t, ids, med)
    return ids[:m], med[:m]


if BACKEND == "numba" and HAVE_NUMBA:
    quantize_cells = quantize_cells_numba
    sparse_time_correlation = sparse_time_correlation_numba
    group_lower_median_deltas = group_lower_median_deltas_numba
else:
    quantize_cells = quantize_cells_numpy
    sparse_time_correlation = sparse_time_correlation_numpy
    group_lower_median_deltas = group_lower_median_deltas_numpy
