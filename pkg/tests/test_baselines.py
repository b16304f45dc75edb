import numpy as np
import pytest
from conftest import brute_simple_baseline, merge_streams
from hypothesis import given, settings
from hypothesis import strategies as st

from eeppr.baselines import (
    default_n_fft,
    fft_baseline,
    median_filter_3x3,
    pixel_timestamp_index,
    simple_baseline,
)
from eeppr.errors import EmptyStream, NoEstimate, WindowTooLarge
from eeppr.events import make_stream, validate_stream
from eeppr.synth import SynthSpec, generate


def _random_stream(seed, n, w=90, h=90, t_max=1_000_000):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, t_max, n))
    return make_stream(t, rng.integers(0, w, n), rng.integers(0, h, n), rng.random(n) < 0.5, w, h, t_max)


# ---------------------------------------------------------------------------
# simple baseline
# ---------------------------------------------------------------------------

def test_simple_single_pixel():
    s = validate_stream([(0, 0, True, t) for t in (0, 500, 1000, 1500)], 45, 45)
    r = simple_baseline(s)
    assert r.rate_hz == 2000.0
    assert r.window_periods == {(0, 0): 500}


def test_simple_single_event_pixel_contributes_nothing():
    s = validate_stream([(0, 0, True, t) for t in (0, 500, 1000)] + [(1, 1, True, 7)], 45, 45)
    r = simple_baseline(s)
    assert r.pixel_results == 1 and r.rate_hz == 2000.0


def test_simple_no_estimate():
    s = validate_stream([(0, 0, True, 3), (1, 0, True, 9)], 45, 45)
    with pytest.raises(NoEstimate):
        simple_baseline(s)


def test_simple_errors():
    with pytest.raises(EmptyStream):
        simple_baseline(make_stream([], [], [], [], 45, 45, 0))
    with pytest.raises(WindowTooLarge):
        simple_baseline(validate_stream([(0, 0, True, 1)], 10, 10))


@pytest.mark.parametrize("rate", [20.0, 40.0, 2000.0])
def test_simple_flash_exact(rate):
    s = generate(SynthSpec("flash", rate, width=90, height=90))
    assert simple_baseline(s).rate_hz == rate


@pytest.mark.parametrize("seed", range(3))
def test_simple_matches_brute_force(seed):
    s = _random_stream(seed, 10_000)
    assert simple_baseline(s).rate_hz == brute_simple_baseline(s, 45)


@pytest.mark.parametrize("seed", range(3))
def test_simple_matches_brute_force_small_windows(seed):
    s = _random_stream(seed, 10_000, w=37, h=23, t_max=50_000)
    assert simple_baseline(s, window=5).rate_hz == brute_simple_baseline(s, 5)


def test_pixel_timestamp_index():
    s = validate_stream([(1, 2, True, 5), (1, 2, False, 6), (1, 2, True, 9), (0, 0, True, 1)], 3, 3)
    idx = pixel_timestamp_index(s)
    assert idx[(1, 2, True)].tolist() == [5, 9]
    assert idx[(1, 2, False)].tolist() == [6]
    assert idx[(0, 0, True)].tolist() == [1]
    for ts in idx.values():
        assert np.all(np.diff(ts) >= 0)


# ---------------------------------------------------------------------------
# FFT baseline
# ---------------------------------------------------------------------------

def _direct_dft_mag(times_us, bin_us, n_fft, length):
    # explicit sum of windowed impulses, independent of any FFT routine
    k = np.asarray(times_us) // bin_us
    k = k[k < length]
    win = np.hanning(length)[k]
    f = np.arange(n_fft // 2 + 1)
    return np.abs(np.exp(-2j * np.pi * np.outer(f, k) / n_fft) @ win)


def test_fft_single_pixel_2k():
    times = np.arange(0, 1_000_000, 500)
    s = make_stream(times, np.zeros_like(times), np.zeros_like(times), np.zeros(times.size, bool), 1, 1, 1_000_000)
    r = fft_baseline(s, polarity="negative", bin_us=100, n_fft=8192)
    res = 1e6 / (100 * 8192)
    assert r.resolution_hz == pytest.approx(res)
    assert abs(r.rate_hz - 2000.0) <= res
    mag = _direct_dft_mag(times, 100, 8192, 8192)
    b = int(round(r.rate_hz / res))
    assert mag[b] >= mag[b - 1] and mag[b] >= mag[b + 1]
    assert mag[b] >= 0.8 * mag[1:].max()


@pytest.mark.parametrize("rate", [20.0, 40.0, 240.0, 2000.0])
def test_fft_flash_within_one_bin(rate):
    s = generate(SynthSpec("flash", rate, width=20, height=20))
    r = fft_baseline(s)
    assert r.n_fft == default_n_fft(1_000_000, 100) == 16384
    assert abs(r.rate_hz - rate) <= r.resolution_hz


def test_fft_zero_event_pixel_is_nan():
    s = generate(SynthSpec("flash", 500.0, width=10, height=10, region=(0, 0, 5, 10)))
    r = fft_baseline(s)
    assert np.isnan(r.rate_map[7, 3])
    assert np.isfinite(r.rate_map[2, 3])


def test_fft_mode_majority():
    a = generate(SynthSpec("flash", 500.0, width=10, height=10, region=(0, 0, 6, 10)))
    b = generate(SynthSpec("flash", 125.0, width=10, height=10, region=(6, 0, 4, 10)))
    r = fft_baseline(merge_streams(a, b))
    assert abs(r.rate_hz - 500.0) <= r.resolution_hz


def test_fft_polarity_selection():
    s = generate(SynthSpec("flash", 400.0, width=10, height=10))
    # extra positive-only events at another rate must not move the negative result
    t = np.arange(0, 1_000_000, 1300)
    extra = make_stream(t, t % 10, (t // 10) % 10, np.ones(t.size, bool), 10, 10, 1_000_000)
    noisy = merge_streams(s, extra)
    neg_a, neg_b = fft_baseline(s, "negative"), fft_baseline(noisy, "negative")
    assert neg_a.rate_hz == neg_b.rate_hz
    np.testing.assert_array_equal(neg_a.rate_map, neg_b.rate_map)
    assert not np.array_equal(fft_baseline(noisy, "positive").raw_map, fft_baseline(s, "positive").raw_map)


def test_fft_validation():
    s = generate(SynthSpec("flash", 400.0, width=4, height=4))
    with pytest.raises(ValueError):
        fft_baseline(s, n_fft=1)
    with pytest.raises(ValueError):
        fft_baseline(s, bin_us=0)
    with pytest.raises(ValueError):
        fft_baseline(s, polarity="both")
    with pytest.raises(EmptyStream):
        fft_baseline(make_stream([], [], [], [], 4, 4, 0))
    single = validate_stream([(0, 0, False, 10)], 4, 4)
    with pytest.raises(NoEstimate):
        fft_baseline(single)


def test_median_filter_constant_idempotent():
    m = np.full((7, 5), 42.0)
    assert np.array_equal(median_filter_3x3(m), m)


def test_median_filter_sentinel_aware():
    m = np.full((3, 3), 10.0)
    m[0, 0] = np.nan
    m[1, 1] = 99.0
    out = median_filter_3x3(m)
    assert np.isnan(out[0, 0])
    assert out[1, 1] == 10.0
    # corner (2, 2) sees 10, 10, 10, 99 -> lower middle 10
    assert out[2, 2] == 10.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_median_filter_brute_force(w, h, seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 5, (w, h)).astype(float)
    m[rng.random((w, h)) < 0.3] = np.nan
    out = median_filter_3x3(m)
    for i in range(w):
        for j in range(h):
            if np.isnan(m[i, j]):
                assert np.isnan(out[i, j])
                continue
            nb = sorted(v for v in m[max(0, i - 1):i + 2, max(0, j - 1):j + 2].ravel() if not np.isnan(v))
            assert out[i, j] == nb[(len(nb) - 1) // 2]
