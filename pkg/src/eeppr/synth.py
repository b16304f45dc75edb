"""Synthetic event streams with exact ground-truth rates.

Every generator describes one period of the phenomenon as per-pixel event
phases (time offset within the period plus polarity).  The phases are then
repeated over the stream duration, optionally jittered, rounded half-up to
integer microseconds, and mixed with uniform background noise.

Emission is geometric: a pixel fires when a moving feature's boundary passes
its centre.  There is no contrast threshold or latency model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidSpec
from .events import EventStream, make_stream

KINDS = ("flash", "rotating_line", "rotating_dot", "vibrating_edge", "translating_pattern")

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic scene.

    ``region`` is ``(x0, y0, w, h)`` for flash, vibrating_edge and
    translating_pattern; rotating kinds use ``center`` and ``radius``.  When
    ``region`` or ``center`` is omitted the scene is placed in the middle of
    the sensor.
    """

    kind: str = "flash"
    rate_hz: float = 2000.0
    duration_us: int = 1_000_000
    width: int = 128
    height: int = 128
    region: Optional[tuple[int, int, int, int]] = None
    center: Optional[tuple[float, float]] = None
    radius: float = 40.0
    dot_radius: float = 6.0
    amplitude_px: float = 5.0
    wavelength_px: float = 16.0
    duty: float = 0.5
    phase: float = 0.0
    jitter_us: float = 0.0
    noise_rate: float = 0.0
    seed: int = 0

    @property
    def period_us(self) -> float:
        return 1e6 / self.rate_hz

    def with_(self, **kw) -> "SynthSpec":
        return replace(self, **kw)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if not (self.rate_hz > 0 and np.isfinite(self.rate_hz)):
            raise InvalidSpec(f"rate_hz must be positive, got {self.rate_hz}")
        if self.width < 1 or self.height < 1 or self.width > 65535 or self.height > 65535:
            raise InvalidSpec(f"bad sensor size {self.width}x{self.height}")
        if self.duration_us < 2 * self.period_us:
            raise InvalidSpec(
                f"duration {self.duration_us} us holds fewer than two periods of {self.period_us:.1f} us"
            )
        if not 0 < self.duty < 1:
            raise InvalidSpec(f"duty must be in (0, 1), got {self.duty}")
        if self.jitter_us < 0 or self.noise_rate < 0:
            raise InvalidSpec("jitter_us and noise_rate must be non-negative")
        if self.region is not None:
            x0, y0, w, h = self.region
            if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > self.width or y0 + h > self.height:
                raise InvalidSpec(f"region {self.region} does not fit the {self.width}x{self.height} sensor")
        if self.kind in ("rotating_line", "rotating_dot") and self.radius <= 0:
            raise InvalidSpec(f"radius must be positive, got {self.radius}")
        if self.kind == "rotating_dot" and self.dot_radius <= 0:
            raise InvalidSpec(f"dot_radius must be positive, got {self.dot_radius}")
        if self.kind == "vibrating_edge" and self.amplitude_px < 0:
            raise InvalidSpec(f"amplitude_px must be non-negative, got {self.amplitude_px}")
        if self.kind == "translating_pattern" and self.wavelength_px <= 0:
            raise InvalidSpec("translating pattern needs a positive wavelength (non-zero velocity)")


def _region(spec: SynthSpec, default_w: int, default_h: int) -> tuple[int, int, int, int]:
    if spec.region is not None:
        return tuple(int(v) for v in spec.region)
    w, h = min(default_w, spec.width), min(default_h, spec.height)
    return ((spec.width - w) // 2, (spec.height - h) // 2, w, h)


def _center(spec: SynthSpec) -> tuple[float, float]:
    if spec.center is not None:
        return float(spec.center[0]), float(spec.center[1])
    return spec.width / 2.0, spec.height / 2.0


def _grid(x0: int, y0: int, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.meshgrid(np.arange(y0, y0 + h), np.arange(x0, x0 + w), indexing="ij")
    return xx.ravel(), yy.ravel()


# ---------------------------------------------------------------------------
# per-pixel phases of one period: (x, y, phase_us in [0, P), polarity)
# ---------------------------------------------------------------------------

def _flash_phases(spec: SynthSpec):
    x0, y0, w, h = _region(spec, spec.width, spec.height)
    x, y = _grid(x0, y0, w, h)
    P = spec.period_us
    on = np.full(x.size, (spec.phase % 1.0) * P)
    off = (on + spec.duty * P) % P
    return (np.concatenate([x, x]), np.concatenate([y, y]),
            np.concatenate([on, off]), np.concatenate([np.ones(x.size, bool), np.zeros(x.size, bool)]))


def _occluder_phases(spec: SynthSpec, x, y, theta, half):
    # a dark feature occupying angles [phi - half, phi + half] with
    # phi(t) = 2*pi*(rate*t + phase); entering darkens (negative event)
    P = spec.period_us
    start = (theta - half) / TWO_PI - spec.phase
    t_in = (start % 1.0) * P
    t_out = ((start + 2 * half / TWO_PI) % 1.0) * P
    return (np.concatenate([x, x]), np.concatenate([y, y]),
            np.concatenate([t_in, t_out]), np.concatenate([np.zeros(x.size, bool), np.ones(x.size, bool)]))


def _rotating_line_phases(spec: SynthSpec):
    cx, cy = _center(spec)
    R = spec.radius
    xs = np.arange(max(0, int(np.floor(cx - R - 1))), min(spec.width, int(np.ceil(cx + R + 2))))
    ys = np.arange(max(0, int(np.floor(cy - R - 1))), min(spec.height, int(np.ceil(cy + R + 2))))
    x, y = _grid(int(xs[0]), int(ys[0]), xs.size, ys.size)
    dx, dy = x - cx, y - cy
    r = np.hypot(dx, dy)
    keep = (r >= 0.5) & (r <= R)
    x, y, dx, dy, r = x[keep], y[keep], dx[keep], dy[keep], r[keep]
    theta = np.arctan2(dy, dx)
    half = np.arctan2(0.5, r)
    return _occluder_phases(spec, x, y, theta, half)


def _rotating_dot_phases(spec: SynthSpec):
    cx, cy = _center(spec)
    Ro, rd = spec.radius, spec.dot_radius
    reach = Ro + rd + 1
    xs = np.arange(max(0, int(np.floor(cx - reach))), min(spec.width, int(np.ceil(cx + reach + 1))))
    ys = np.arange(max(0, int(np.floor(cy - reach))), min(spec.height, int(np.ceil(cy + reach + 1))))
    x, y = _grid(int(xs[0]), int(ys[0]), xs.size, ys.size)
    dx, dy = x - cx, y - cy
    r = np.hypot(dx, dy)
    # pixel covered when its distance to the dot centre is below rd; by the
    # law of cosines that is an angular half-width around the pixel angle
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (r * r + Ro * Ro - rd * rd) / (2 * r * Ro)
    keep = (r > 0) & (c > -1) & (c < 1)
    x, y, dx, dy, c = x[keep], y[keep], dx[keep], dy[keep], c[keep]
    return _occluder_phases(spec, x, y, np.arctan2(dy, dx), np.arccos(c))


def _vibrating_edge_phases(spec: SynthSpec):
    x0, y0, w, h = _region(spec, spec.width, spec.height)
    A = spec.amplitude_px
    # rest line off the half-pixel lattice so no row centre sits at a turning point
    rest = y0 + h / 2.0 + 0.25
    rows = np.arange(y0, y0 + h)
    centres = rows + 0.5
    hit = np.abs(centres - rest) < A if A > 0 else np.zeros(rows.size, bool)
    rows, centres = rows[hit], centres[hit]
    P = spec.period_us
    phi1 = np.arcsin((centres - rest) / A) if rows.size else np.empty(0)
    # edge position rest + A*sin(phi); bright above the edge, so a downward
    # pass (cos > 0) brightens the pixel and an upward pass darkens it
    t_down = ((phi1 / TWO_PI - spec.phase) % 1.0) * P
    t_up = (((np.pi - phi1) / TWO_PI - spec.phase) % 1.0) * P
    cols = np.arange(x0, x0 + w)
    xx = np.repeat(cols[None, :], rows.size, axis=0).ravel()
    yy = np.repeat(rows[:, None], w, axis=1).ravel()
    td = np.repeat(t_down[:, None], w, axis=1).ravel()
    tu = np.repeat(t_up[:, None], w, axis=1).ravel()
    n = xx.size
    return (np.concatenate([xx, xx]), np.concatenate([yy, yy]),
            np.concatenate([td, tu]), np.concatenate([np.ones(n, bool), np.zeros(n, bool)]))


def _translating_phases(spec: SynthSpec, rng: np.random.Generator):
    x0, y0, w, h = _region(spec, spec.width, spec.height)
    lam = spec.wavelength_px
    v = spec.rate_hz * lam / 1e6  # px per us
    x, y = _grid(x0, y0, w, h)
    # each row carries its own stripe offset so the texture is two-dimensional
    row_shift = rng.uniform(0.0, lam, size=h)[y - y0]
    c = x + 0.5 - row_shift
    P = spec.period_us
    # stripes move towards +x; the trailing (right) boundary of a bright
    # stripe brightens the pixel, the leading (left) one darkens it
    t_on = ((c - spec.duty * lam) / v) % P
    t_off = (c / v) % P
    return (np.concatenate([x, x]), np.concatenate([y, y]),
            np.concatenate([t_on, t_off]), np.concatenate([np.ones(x.size, bool), np.zeros(x.size, bool)]))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _repeat(spec: SynthSpec, x, y, phase, pol, rng: np.random.Generator):
    P = spec.period_us
    n_rep = int(np.ceil(spec.duration_us / P)) + 1
    order = np.argsort(phase, kind="stable")
    x, y, phase, pol = x[order], y[order], phase[order], pol[order]
    reps = np.arange(n_rep, dtype=np.float64)
    t = (reps[:, None] * P + phase[None, :]).ravel()
    xs = np.tile(x, n_rep)
    ys = np.tile(y, n_rep)
    ps = np.tile(pol, n_rep)
    if spec.jitter_us > 0:
        # bounded so an edge never swaps with its neighbour in the same period
        bound = 0.5 * min(spec.duty, 1 - spec.duty) * P if spec.kind == "flash" else 0.25 * P
        t = t + np.clip(rng.normal(0.0, spec.jitter_us, size=t.size), -bound, bound)
        t = np.maximum(t, 0.0)
    ti = np.floor(t + 0.5).astype(np.int64)
    keep = ti < spec.duration_us
    return ti[keep], xs[keep], ys[keep], ps[keep]


def _noise(spec: SynthSpec, rng: np.random.Generator):
    expected = spec.noise_rate * spec.width * spec.height * spec.duration_us / 1e6
    n = int(rng.poisson(expected)) if expected > 0 else 0
    return (
        rng.integers(0, spec.duration_us, size=n, dtype=np.int64),
        rng.integers(0, spec.width, size=n),
        rng.integers(0, spec.height, size=n),
        rng.integers(0, 2, size=n).astype(bool),
    )


def generate(spec: SynthSpec) -> EventStream:
    """Render ``spec`` into a time-sorted :class:`EventStream`."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "flash":
        phases = _flash_phases(spec)
    elif spec.kind == "rotating_line":
        phases = _rotating_line_phases(spec)
    elif spec.kind == "rotating_dot":
        phases = _rotating_dot_phases(spec)
    elif spec.kind == "vibrating_edge":
        phases = _vibrating_edge_phases(spec)
    else:
        phases = _translating_phases(spec, rng)
    t, x, y, p = _repeat(spec, *phases, rng)
    if spec.noise_rate > 0:
        nt, nx, ny, npol = _noise(spec, rng)
        t = np.concatenate([t, nt])
        x = np.concatenate([x, nx])
        y = np.concatenate([y, ny])
        p = np.concatenate([p, npol])
    order = np.argsort(t, kind="stable")
    return make_stream(t[order], x[order], y[order], p[order], spec.width, spec.height, spec.duration_us)


def _check_kind(spec: SynthSpec, kind: str) -> None:
    if spec.kind != kind:
        raise InvalidSpec(f"expected kind {kind!r}, got {spec.kind!r}")


def gen_flash(spec: SynthSpec) -> EventStream:
    _check_kind(spec, "flash")
    return generate(spec)


def gen_rotating_line(spec: SynthSpec) -> EventStream:
    _check_kind(spec, "rotating_line")
    return generate(spec)


def gen_rotating_dot(spec: SynthSpec) -> EventStream:
    _check_kind(spec, "rotating_dot")
    return generate(spec)


def gen_vibrating_edge(spec: SynthSpec) -> EventStream:
    _check_kind(spec, "vibrating_edge")
    return generate(spec)


def gen_translating_pattern(spec: SynthSpec) -> EventStream:
    _check_kind(spec, "translating_pattern")
    return generate(spec)


def signal_event_count(spec: SynthSpec) -> int:
    """Number of noiseless events ``spec`` renders to."""
    return len(generate(replace(spec, noise_rate=0.0)))


def noise_rate_for_fraction(spec: SynthSpec, fraction: float) -> float:
    """Per-pixel noise rate adding ``fraction`` x the signal event count."""
    n_signal = signal_event_count(spec)
    return fraction * n_signal / (spec.width * spec.height * spec.duration_us / 1e6)
