import numpy as np
import pytest

from eeppr.events import EventStream, make_stream

# pass/fail lines from test_acceptance, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def brute_correlation(area: np.ndarray, tmpl: np.ndarray) -> np.ndarray:
    """Direct triple sum, written with explicit loops over lags."""
    w, h, depth = area.shape
    d = tmpl.shape[2]
    out = np.zeros(depth - d + 1)
    a = area.astype(np.int64)
    t = tmpl.astype(np.int64)
    for tau in range(depth - d + 1):
        s = 0
        for k in range(d):
            s += int(np.sum(a[:, :, tau + k] * t[:, :, k]))
        out[tau] = s
    return out


def merge_streams(*streams: EventStream) -> EventStream:
    t = np.concatenate([s.t for s in streams])
    order = np.argsort(t, kind="stable")
    cat = lambda name: np.concatenate([getattr(s, name) for s in streams])[order]  # noqa: E731
    return make_stream(
        t[order], cat("x"), cat("y"), cat("p"),
        streams[0].width, streams[0].height, max(s.duration_us for s in streams),
    )


def brute_simple_baseline(stream: EventStream, window: int) -> float:
    """Reference simple baseline with dicts and sorted lists."""
    per = {}
    for x, y, p, t in zip(stream.x.tolist(), stream.y.tolist(), stream.p.tolist(), stream.t.tolist()):
        per.setdefault((x, y, p), []).append(t)
    lower = lambda v: sorted(v)[(len(v) - 1) // 2]  # noqa: E731
    nx, ny = stream.width // window, stream.height // window
    by_window = {}
    for (x, y, p), ts in per.items():
        if len(ts) < 2:
            continue
        wx, wy = x // window, y // window
        if wx >= nx or wy >= ny:
            continue
        deltas = [b - a for a, b in zip(ts, ts[1:])]
        by_window.setdefault((wx, wy), []).append(lower(deltas))
    rates = [1e6 / lower(v) for v in by_window.values() if lower(v) > 0]
    return lower(rates)
