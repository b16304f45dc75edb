import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeppr.errors import EmptyStream, InvalidROI, NegativeTimestamp, OutOfRangeEvent, WindowTooLarge
from eeppr.events import Event, make_stream, quantize, split_windows, validate_stream


def test_single_event_duration():
    s = validate_stream([(0, 0, True, 5)], 10, 10)
    assert len(s) == 1
    assert s.duration_us == 6
    assert s.events == [Event(0, 0, True, 5)]


def test_validate_sorts_by_time():
    s = validate_stream([(0, 0, True, 9), (1, 1, False, 3)], 4, 4)
    assert s.t.tolist() == [3, 9]
    assert s.x.tolist() == [1, 0]


def test_validate_stable_on_ties():
    s = validate_stream([(0, 0, True, 7), (1, 0, False, 2), (2, 0, True, 7), (3, 0, False, 7)], 4, 1)
    assert s.x.tolist() == [1, 0, 2, 3]


def test_out_of_range_index():
    with pytest.raises(OutOfRangeEvent) as ei:
        validate_stream([(5, 0, True, 0)], 4, 4)
    assert ei.value.index == 0
    with pytest.raises(OutOfRangeEvent) as ei:
        validate_stream([(0, 0, True, 0), (1, 9, True, 1)], 4, 4)
    assert ei.value.index == 1


def test_negative_timestamp():
    with pytest.raises(NegativeTimestamp):
        validate_stream([(0, 0, True, 1), (0, 0, True, -1)], 4, 4)


def test_empty_stream():
    s = validate_stream([], 4, 4)
    assert len(s) == 0 and s.duration_us == 0
    with pytest.raises(EmptyStream):
        quantize(s, 100)


def test_quantize_single_positive():
    g = quantize(validate_stream([(1, 2, True, 50)], 3, 3), 100)
    v = g.values
    assert v[1, 2, 0] == 1
    assert np.count_nonzero(v) == 1


def test_quantize_last_event_wins():
    g = quantize(validate_stream([(0, 0, True, 10), (0, 0, False, 90)], 1, 1), 100)
    assert g.values[0, 0, 0] == -1
    assert g.count.tolist() == [2]


def test_quantize_bin_index():
    s = make_stream([250], [0], [0], [True], 1, 1)
    g = quantize(s, 100)
    assert g.depth == 3
    assert g.k.tolist() == [2]


def test_quantize_depth_uses_duration():
    s = make_stream([5], [0], [0], [True], 1, 1, duration_us=1001)
    assert quantize(s, 100).depth == 11


def test_quantize_roi_rebases_and_drops():
    s = validate_stream([(0, 0, True, 1), (3, 4, False, 2), (4, 4, True, 3)], 6, 6)
    g = quantize(s, 10, roi=(3, 3, 2, 2))
    assert (g.width, g.height) == (2, 2)
    assert g.origin == (3, 3)
    assert sorted(zip(g.x.tolist(), g.y.tolist(), g.value.tolist())) == [(0, 1, -1), (1, 1, 1)]


@pytest.mark.parametrize("roi", [(0, 0, 0, 1), (-1, 0, 2, 2), (0, 0, 7, 1), (5, 5, 2, 2)])
def test_bad_roi(roi):
    s = validate_stream([(0, 0, True, 1)], 6, 6)
    with pytest.raises(InvalidROI):
        quantize(s, 10, roi=roi)


def test_segment_rebases_and_truncates():
    s = make_stream([0, 10, 20, 30], [0] * 4, [0] * 4, [True] * 4, 1, 1, 40)
    seg = s.segment(10, 15)
    assert seg.t.tolist() == [0, 10]
    assert seg.duration_us == 15


def _grid(w, h):
    return quantize(make_stream([0], [0], [0], [True], w, h), 1)


def test_split_windows_square():
    areas = split_windows(_grid(90, 90), 45)
    assert [(a.x0, a.y0) for a in areas] == [(0, 0), (45, 0), (0, 45), (45, 45)]
    assert [a.index for a in areas] == [0, 1, 2, 3]


def test_split_windows_drops_margin():
    areas = split_windows(_grid(100, 90), 45)
    assert len(areas) == 4
    assert max(a.x0 + a.size for a in areas) == 90


def test_split_windows_too_large():
    with pytest.raises(WindowTooLarge):
        split_windows(_grid(44, 44), 45)


events_strategy = st.lists(
    st.tuples(st.integers(0, 5), st.integers(0, 4), st.booleans(), st.integers(0, 2000)),
    min_size=1,
    max_size=200,
)


@settings(max_examples=100, deadline=None)
@given(events_strategy, st.integers(1, 300))
def test_quantize_properties(raw, tq):
    s = validate_stream(raw, 6, 5)
    g = quantize(s, tq)
    # conservation
    assert g.nnz <= len(s)
    assert g.count.sum() == len(s)
    keys = {(x, y, t // tq) for x, y, _, t in raw}
    assert g.nnz == len(keys)
    # last-event dominance, ties resolved by input order
    expect = {}
    for x, y, p, t in sorted(raw, key=lambda e: e[3]):
        expect[(x, y, t // tq)] = 1 if p else -1
    got = {(int(x), int(y), int(k)): int(v) for x, y, k, v in zip(g.x, g.y, g.k, g.value)}
    assert got == expect
    # determinism
    g2 = quantize(s, tq)
    assert np.array_equal(g.values, g2.values)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 120), st.integers(1, 120), st.integers(1, 50))
def test_window_partition(w, h, win):
    g = _grid(w, h)
    if w // win == 0 or h // win == 0:
        with pytest.raises(WindowTooLarge):
            split_windows(g, win)
        return
    areas = split_windows(g, win)
    assert len(areas) == (w // win) * (h // win)
    cover = np.zeros((w, h), dtype=int)
    for a in areas:
        assert a.x0 + a.size <= w and a.y0 + a.size <= h
        cover[a.x0:a.x0 + a.size, a.y0:a.y0 + a.size] += 1
    assert cover.max() == 1
