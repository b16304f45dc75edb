"""Evaluation harness: one-second segments, relative errors, parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .baselines import fft_baseline, simple_baseline
from .core import EepprConfig, PeakParams, estimate
from .errors import EepprError
from .events import EventStream
from .io import read_events
from .synth import SynthSpec, generate, noise_rate_for_fraction

METHODS = ("eeppr", "simple", "fft")

CSV_COLUMNS = (
    "scenario",
    "method",
    "gt_rate_hz",
    "estimate_hz",
    "relative_error_pct",
    "runtime_ms",
    "status",
    "accepted_windows",
    "rejected_windows",
    "message",
)


@dataclass
class Scenario:
    id: str
    source: Union[str, SynthSpec]
    gt_rate_hz: float
    segment_us: int = 1_000_000
    start_us: int = 0
    methods: tuple[str, ...] = METHODS
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gt_rate_hz > 0:
            raise ValueError(f"scenario {self.id}: gt_rate_hz must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"scenario {self.id}: unknown methods {sorted(bad)}")


@dataclass
class BenchRow:
    scenario: str
    method: str
    gt_rate_hz: float
    estimate_hz: float = math.nan
    relative_error_pct: float = math.nan
    runtime_ms: float = 0.0
    status: str = "ok"
    message: str = ""
    accepted_windows: Optional[int] = None
    rejected_windows: Optional[int] = None
    diagnostics: Optional[dict] = None


@dataclass
class BenchReport:
    rows: list[BenchRow]

    def summary(self) -> dict[str, dict[str, float]]:
        """Mean and max relative error per method over successful rows."""
        out = {}
        for m in dict.fromkeys(r.method for r in self.rows):
            errs = [r.relative_error_pct for r in self.rows if r.method == m and r.status == "ok"]
            failed = sum(1 for r in self.rows if r.method == m and r.status == "failed")
            out[m] = {
                "mean_error_pct": float(np.mean(errs)) if errs else math.nan,
                "max_error_pct": float(np.max(errs)) if errs else math.nan,
                "ok": len(errs),
                "failed": failed,
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt_csv(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"rows": [_jsonable(asdict(r)) for r in self.rows], "summary": _jsonable(self.summary())},
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        head = f"{'scenario':<24} {'method':<7} {'GT':>9} {'estimate':>11} {'rel.err %':>10} {'ms':>8}  status"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.scenario:<24} {r.method:<7} {r.gt_rate_hz:>9.1f} {_num(r.estimate_hz, 11, 2)} "
                f"{_num(r.relative_error_pct, 10, 3)} {r.runtime_ms:>8.1f}  {r.status}"
                + (f" ({r.message})" if r.message else "")
            )
        lines.append("")
        for m, s in self.summary().items():
            lines.append(
                f"{m:<7} mean {s['mean_error_pct']:.3f}%  max {s['max_error_pct']:.3f}%  "
                f"ok {s['ok']}  failed {s['failed']}"
            )
        return "\n".join(lines)


def _num(v: float, width: int, prec: int) -> str:
    return f"{'n/a':>{width}}" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:>{width}.{prec}f}"


def _fmt_csv(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return v


def _jsonable(obj):
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def relative_error_pct(estimate_hz: float, gt_hz: float) -> float:
    return abs(estimate_hz - gt_hz) / gt_hz * 100.0


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------

def load_source(s: Scenario) -> EventStream:
    if isinstance(s.source, SynthSpec):
        stream = generate(s.source)
    else:
        stream = read_events(s.source, **s.overrides.get("io", {}))
    return stream.segment(s.start_us, s.segment_us)


def _eeppr_config(over: dict) -> EepprConfig:
    over = dict(over)
    peaks = over.pop("peaks", None)
    if isinstance(peaks, dict):
        over["peaks"] = PeakParams(**peaks)
    elif peaks is not None:
        over["peaks"] = peaks
    return EepprConfig(**over)


def run_method(method: str, stream: EventStream, gt: float, over: dict, scenario_id: str = "") -> BenchRow:
    row = BenchRow(scenario_id, method, gt)
    t0 = time.perf_counter()
    try:
        if method == "eeppr":
            o = dict(over)
            roi = o.pop("roi", None)
            workers = o.pop("workers", 1)
            res = estimate(stream, _eeppr_config(o), roi=roi, workers=workers)
            row.estimate_hz = res.rate_hz
            row.accepted_windows = len(res.accepted)
            row.rejected_windows = len(res.rejected)
            row.diagnostics = res.to_dict(windows=True)
        elif method == "simple":
            row.estimate_hz = simple_baseline(stream, **over).rate_hz
        elif method == "fft":
            row.estimate_hz = fft_baseline(stream, **over).rate_hz
        else:
            raise ValueError(f"unknown method {method!r}")
        row.relative_error_pct = relative_error_pct(row.estimate_hz, gt)
    except (EepprError, ValueError, MemoryError) as exc:
        row.status = "failed"
        row.message = f"{type(exc).__name__}: {exc}"
    row.runtime_ms = (time.perf_counter() - t0) * 1e3
    return row


def run_scenario(s: Scenario) -> list[BenchRow]:
    """Load or generate the stream, cut the segment and run every method.

    Missing input files yield ``skipped`` rows; method errors yield
    ``failed`` rows.  Runtime covers the method call only.
    """
    if isinstance(s.source, str) and not Path(s.source).exists():
        return [BenchRow(s.id, m, s.gt_rate_hz, status="skipped", message=f"missing file {s.source}") for m in s.methods]
    try:
        stream = load_source(s)
    except (EepprError, ValueError, OSError) as exc:
        return [BenchRow(s.id, m, s.gt_rate_hz, status="failed", message=f"{type(exc).__name__}: {exc}")
                for m in s.methods]
    return [run_method(m, stream, s.gt_rate_hz, s.overrides.get(m, {}), s.id) for m in s.methods]


def run_bench(scenarios: Sequence[Scenario], workers: int = 1) -> BenchReport:
    """Run scenarios (concurrently when ``workers > 1``) in a stable row order."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_scenario, scenarios))
    else:
        parts = [run_scenario(s) for s in scenarios]
    return BenchReport([r for part in parts for r in part])


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

_SPEC_FIELDS = {f.name for f in fields(SynthSpec)}


def scenario_from_dict(d: dict, base_dir: Optional[Path] = None) -> Scenario:
    src = d["source"]
    if isinstance(src, dict):
        spec = dict(src.get("synth", src))
        unknown = set(spec) - _SPEC_FIELDS
        if unknown:
            raise ValueError(f"unknown synth fields {sorted(unknown)}")
        for key in ("region", "center"):
            if spec.get(key) is not None:
                spec[key] = tuple(spec[key])
        source: Union[str, SynthSpec] = SynthSpec(**spec)
    else:
        p = Path(src)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        source = str(p)
    return Scenario(
        id=str(d["id"]),
        source=source,
        gt_rate_hz=float(d["gt_rate_hz"]),
        segment_us=int(d.get("segment_us", 1_000_000)),
        start_us=int(d.get("start_us", 0)),
        methods=tuple(d.get("methods", METHODS)),
        overrides=dict(d.get("overrides", {})),
    )


def load_manifest(path: Union[str, os.PathLike]) -> list[Scenario]:
    """JSON list of scenario records (or ``{"scenarios": [...]}``)."""
    path = Path(path)
    data = json.loads(path.read_text())
    if isinstance(data, dict):
        data = data["scenarios"]
    return [scenario_from_dict(d, path.parent) for d in data]


def scenario_to_dict(s: Scenario) -> dict:
    src = {"synth": _jsonable(asdict(s.source))} if isinstance(s.source, SynthSpec) else s.source
    return {
        "id": s.id,
        "source": src,
        "gt_rate_hz": s.gt_rate_hz,
        "segment_us": s.segment_us,
        "start_us": s.start_us,
        "methods": list(s.methods),
        "overrides": s.overrides,
    }


# ---------------------------------------------------------------------------
# synthetic suites
# ---------------------------------------------------------------------------

def range_suite(noise_fraction: float = 0.0, seed: int = 0, methods: Sequence[str] = ("eeppr",)) -> list[Scenario]:
    """Six synthetic scenes spanning 3.2 Hz to 2 kHz.

    Rotation at 3.2 and 20 Hz, vibration at 40 and 98 Hz, flicker at 240 Hz
    and 2 kHz.  ``noise_fraction`` adds uniform background events equal to
    that fraction of each scene's signal events.
    """
    specs = [
        ("rotation_3.2hz", SynthSpec("rotating_line", 3.2, width=128, height=128, radius=50.0)),
        ("rotation_20hz", SynthSpec("rotating_line", 20.0, width=128, height=128, radius=40.0)),
        ("vibration_40hz", SynthSpec("vibrating_edge", 40.0, width=128, height=96, region=(0, 0, 128, 45))),
        ("vibration_98hz", SynthSpec("vibrating_edge", 98.0, width=128, height=96, region=(0, 0, 128, 45))),
        ("flicker_240hz", SynthSpec("flash", 240.0, width=96, height=96, region=(0, 0, 60, 60))),
        ("flicker_2000hz", SynthSpec("flash", 2000.0, width=96, height=96, region=(0, 0, 30, 30))),
    ]
    return _with_noise(specs, noise_fraction, seed, methods)


def table_suite(noise_fraction: float = 0.0, seed: int = 0, methods: Sequence[str] = METHODS) -> list[Scenario]:
    """Twelve synthetic scenes, one per reference rate, for the full comparison report."""
    specs = [
        ("line_disc", SynthSpec("rotating_line", 20.0, radius=40.0)),
        ("disc_front", SynthSpec("rotating_dot", 21.1, radius=35.0, dot_radius=8.0)),
        ("disc_side", SynthSpec("rotating_dot", 26.3, radius=30.0, dot_radius=6.0)),
        ("contrast_dot", SynthSpec("rotating_dot", 19.6, radius=40.0, dot_radius=6.0)),
        ("spinner", SynthSpec("rotating_line", 4.7, radius=50.0)),
        ("whirling", SynthSpec("rotating_line", 3.2, radius=50.0)),
        ("led", SynthSpec("flash", 2000.0, width=96, height=96, region=(0, 0, 30, 30))),
        ("screen", SynthSpec("flash", 240.0, width=96, height=96, region=(0, 0, 60, 60))),
        ("speaker", SynthSpec("vibrating_edge", 98.0, height=96, region=(0, 0, 128, 45))),
        ("motor", SynthSpec("vibrating_edge", 40.0, height=96, region=(0, 0, 128, 45))),
        ("chain_side", SynthSpec("translating_pattern", 28.7, width=96, height=96)),
        ("chain_top", SynthSpec("translating_pattern", 23.0, width=96, height=96, wavelength_px=12.0)),
    ]
    return _with_noise(specs, noise_fraction, seed, methods)


def sparse_noisy_suite(noise_fraction: float = 1.0, seed: int = 1) -> list[Scenario]:
    """Small moving structures on a larger sensor with heavy background noise.

    Few signal events per window make the template size matter; used to show
    the direction of the window / template-count trade-off.
    """
    specs = [
        ("dot", SynthSpec("rotating_dot", 19.6, width=150, height=150, radius=45.0, dot_radius=5.0)),
        ("line", SynthSpec("rotating_line", 20.0, width=150, height=150, radius=60.0)),
        ("edge", SynthSpec("vibrating_edge", 40.0, width=150, height=150, region=(0, 0, 150, 60), amplitude_px=3.0)),
        ("chain", SynthSpec("translating_pattern", 23.0, width=150, height=150, region=(0, 0, 150, 40),
                            wavelength_px=20.0)),
    ]
    return _with_noise(specs, noise_fraction, seed, ("eeppr",))


def _with_noise(specs, noise_fraction: float, seed: int, methods) -> list[Scenario]:
    out = []
    for sid, spec in specs:
        spec = spec.with_(seed=seed)
        if noise_fraction > 0:
            spec = spec.with_(noise_rate=noise_rate_for_fraction(spec, noise_fraction))
        out.append(Scenario(sid, spec, spec.rate_hz, methods=tuple(methods)))
    return out


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    window: int
    template_events: int
    mean_error_pct: float
    max_error_pct: float
    failures: int
    errors: list[float]


@dataclass
class SweepTable:
    cells: list[SweepCell]

    def cell(self, window: int, template_events: int) -> SweepCell:
        for c in self.cells:
            if c.window == window and c.template_events == template_events:
                return c
        raise KeyError((window, template_events))

    def to_text(self) -> str:
        labels = [f"W={c.window},N={c.template_events}" for c in self.cells]
        width = max([14] + [len(s) for s in labels])
        lines = [
            f"{'':<20}|" + "|".join(f"{s:>{width}}" for s in labels),
            f"{'Avg relative error':<20}|" + "|".join(f"{c.mean_error_pct:>{width}.2f}" for c in self.cells),
            f"{'Max relative error':<20}|" + "|".join(f"{c.max_error_pct:>{width}.2f}" for c in self.cells),
        ]
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window", "template_events", "mean_error_pct", "max_error_pct", "failures"])
        for c in self.cells:
            w.writerow([c.window, c.template_events, round(c.mean_error_pct, 6), round(c.max_error_pct, 6), c.failures])
        return buf.getvalue()


FAILED_ERROR_PCT = 100.0


def sweep(
    windows: Iterable[int],
    template_events: Iterable[int],
    scenarios: Sequence[Scenario],
    base: Optional[dict] = None,
) -> SweepTable:
    """EEPPR mean/max relative error for every (window, template_events) cell.

    A scenario the estimator fails on counts as a 100 % error so that cells
    with many rejections are not flattered.
    """
    windows, template_events = list(windows), list(template_events)
    if not windows or not template_events:
        raise ValueError("sweep grid is empty")
    streams = {}
    for s in scenarios:
        if isinstance(s.source, str) and not Path(s.source).exists():
            continue
        streams[s.id] = load_source(s)
    cells = []
    for W in windows:
        for N in template_events:
            errs, fails = [], 0
            for s in scenarios:
                if s.id not in streams:
                    continue
                over = dict(base or {})
                over.update(s.overrides.get("eeppr", {}))
                over.update(window=W, template_events=N)
                row = run_method("eeppr", streams[s.id], s.gt_rate_hz, over, s.id)
                if row.status == "ok":
                    errs.append(row.relative_error_pct)
                else:
                    fails += 1
                    errs.append(FAILED_ERROR_PCT)
            cells.append(SweepCell(
                W, N,
                float(np.mean(errs)) if errs else math.nan,
                float(np.max(errs)) if errs else math.nan,
                fails, errs,
            ))
    return SweepTable(cells)
