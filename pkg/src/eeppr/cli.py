"""``eeppr`` command line: estimate, baseline, synth, bench.

Exit codes: 0 success, 1 bad flags or unreadable input, 2 when the input
was read but no rate could be estimated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench as _bench
from .baselines import fft_baseline, simple_baseline
from .core import CORRELATION_METHODS, EepprConfig, PeakParams, estimate
from .errors import EepprError, EmptyStream, NoEstimate, NoValidWindows
from .io import read_events, write_events
from .synth import KINDS, SynthSpec, generate, noise_rate_for_fraction

EXIT_OK, EXIT_USAGE, EXIT_NO_ESTIMATE = 0, 1, 2

SUITES = {
    "range": _bench.range_suite,
    "table": _bench.table_suite,
    "sparse": _bench.sparse_noisy_suite,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for "no estimate"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# flag parsing helpers
# ---------------------------------------------------------------------------

def _ints(text: str, n: int, what: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated integers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated integers")
    return vals


def _roi(text: str) -> tuple[int, int, int, int]:
    return _ints(text, 4, "roi")


def _region(text: str) -> tuple[int, int, int, int]:
    return _ints(text, 4, "region")


def _center(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("center must be x,y") from None
    return x, y


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def parse_sweep(tokens: Sequence[str]) -> tuple[list[int], list[int]]:
    """``["W=30,45", "N=1800"]`` -> ``([30, 45], [1800])``; missing axes use defaults."""
    axes = {"W": [45], "N": [1800]}
    for tok in tokens:
        key, sep, vals = tok.partition("=")
        key = key.strip().upper()
        if not sep or key not in axes:
            raise UsageError(f"bad sweep axis {tok!r}; expected W=... or N=...")
        try:
            axes[key] = [int(v) for v in vals.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"bad sweep values in {tok!r}") from None
        if not axes[key] or min(axes[key]) < 1:
            raise UsageError(f"sweep values in {tok!r} must be positive integers")
    return axes["W"], axes["N"]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _global_flags() -> argparse.ArgumentParser:
    g = _Parser(add_help=False)
    g.add_argument("--format", choices=("auto", "text", "binary"), default="auto", help="input file format")
    g.add_argument("--roi", type=_roi, default=None, metavar="X,Y,W,H", help="crop to this region first")
    g.add_argument("--start-us", type=_non_negative_int, default=0, help="segment start")
    g.add_argument("--duration", type=_positive_int, default=1_000_000, metavar="US",
                   help="segment (or synthetic stream) length in us")
    g.add_argument("--output", choices=("json", "csv", "text"), default="text", help="report format on stdout")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
    g.add_argument("--width", type=_positive_int, default=None, help="sensor width (text input, synth)")
    g.add_argument("--height", type=_positive_int, default=None, help="sensor height (text input, synth)")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="eeppr", description="Rate estimation for periodic phenomena in event streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="correlation-based rate estimate")
    p.add_argument("input")
    p.add_argument("--window", type=_positive_int, default=45)
    p.add_argument("--template-events", type=_positive_int, default=1800)
    p.add_argument("--t-quant", type=_positive_int, default=100, metavar="US")
    p.add_argument("--min-prominence", type=float, default=0.3)
    p.add_argument("--min-separation", type=_positive_int, default=2, metavar="BINS")
    p.add_argument("--max-template-fraction", type=float, default=0.25)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--correlation", choices=CORRELATION_METHODS, default="auto")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", parents=[common], help="per-pixel comparison methods")
    p.add_argument("method", choices=("simple", "fft"))
    p.add_argument("input")
    p.add_argument("--window", type=_positive_int, default=45, help="simple: window size")
    p.add_argument("--polarity", choices=("negative", "positive"), default="negative", help="fft: event polarity")
    p.add_argument("--bin-us", type=_positive_int, default=100, help="fft: impulse grid")
    p.add_argument("--n-fft", type=int, default=None, help="fft: transform length (>= 2)")
    p.add_argument("--dump-map", default=None, metavar="PATH", help="fft: save the filtered rate map (.npy)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic stream")
    p.add_argument("kind", choices=[k.replace("_", "-") for k in KINDS])
    p.add_argument("--rate", type=float, required=True, help="ground-truth rate in Hz")
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--region", type=_region, default=None, metavar="X,Y,W,H")
    p.add_argument("--center", type=_center, default=None, metavar="X,Y")
    p.add_argument("--radius", type=float, default=40.0)
    p.add_argument("--dot-radius", type=float, default=6.0)
    p.add_argument("--amplitude", type=float, default=5.0, help="vibration amplitude in px")
    p.add_argument("--wavelength", type=float, default=16.0, help="pattern wavelength in px")
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--jitter-us", type=float, default=0.0)
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--noise-rate", type=float, default=0.0, help="events / pixel / s")
    noise.add_argument("--noise-fraction", type=float, default=None, help="noise events relative to signal")
    p.add_argument("-o", "--out", required=True, help="output path (.csv/.txt text, otherwise binary)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", parents=[common], help="relative-error report or parameter sweep")
    p.add_argument("--manifest", default=None, help="JSON scenario list; default is a synthetic suite")
    p.add_argument("--suite", choices=sorted(SUITES), default="range")
    p.add_argument("--noise-fraction", type=float, default=0.0)
    p.add_argument("--methods", default=None, help="comma-separated subset of eeppr,simple,fft")
    p.add_argument("--sweep", nargs="+", default=None, metavar="AXIS", help="e.g. W=30,45,60,75 N=1800")
    p.add_argument("-o", "--out", default=None, help="write the report; the suffix picks the format")
    p.set_defaults(func=cmd_bench)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load(args):
    stream = read_events(args.input, args.format, width=args.width, height=args.height)
    return stream.segment(args.start_us, args.duration)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _kv_report(d: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_bench._jsonable(d), indent=2, sort_keys=True)
    flat = {k: v for k, v in d.items() if not isinstance(v, (dict, list))}
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(flat)
        w.writerow([_bench._fmt_csv(v) for v in flat.values()])
        return buf.getvalue()
    return "\n".join(f"{k}: {v}" for k, v in flat.items())


def _round(v: float) -> float:
    return round(float(v), 4) if math.isfinite(v) else v


def cmd_estimate(args) -> int:
    cfg = EepprConfig(
        window=args.window,
        template_events=args.template_events,
        t_quant_us=args.t_quant,
        peaks=PeakParams(args.min_prominence, args.min_separation),
        max_template_fraction=args.max_template_fraction,
        normalize=not args.no_normalize,
        correlation=args.correlation,
    )
    stream = _load(args)
    res = estimate(stream, cfg, roi=args.roi, workers=args.threads)
    d = res.to_dict(windows=args.output == "json")
    d["rate_hz"] = _round(d["rate_hz"])
    d["period_us"] = _round(d["period_us"])
    _emit(_kv_report(d, args.output))
    return EXIT_OK


def cmd_baseline(args) -> int:
    if args.method == "fft" and args.n_fft is not None and args.n_fft < 2:
        raise UsageError(f"--n-fft must be >= 2, got {args.n_fft}")
    stream = _load(args)
    if args.method == "simple":
        res = simple_baseline(stream, window=args.window, roi=args.roi)
        d = {
            "method": "simple",
            "rate_hz": _round(res.rate_hz),
            "windows": len(res.window_rates),
            "pixel_results": res.pixel_results,
        }
    else:
        res = fft_baseline(stream, polarity=args.polarity, bin_us=args.bin_us, n_fft=args.n_fft, roi=args.roi)
        d = {
            "method": "fft",
            "rate_hz": _round(res.rate_hz),
            "resolution_hz": _round(res.resolution_hz),
            "n_fft": res.n_fft,
            "polarity": res.polarity,
            "pixels": res.extra.get("pixels", 0),
        }
        if args.dump_map:
            np.save(args.dump_map, res.rate_map)
    _emit(_kv_report(d, args.output))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        kind=args.kind.replace("-", "_"),
        rate_hz=args.rate,
        duration_us=args.duration,
        width=args.width or 128,
        height=args.height or 128,
        region=args.region,
        center=args.center,
        radius=args.radius,
        dot_radius=args.dot_radius,
        amplitude_px=args.amplitude,
        wavelength_px=args.wavelength,
        duty=args.duty,
        phase=args.phase,
        jitter_us=args.jitter_us,
        noise_rate=args.noise_rate,
        seed=args.seed,
    )
    spec.validate()
    if args.noise_fraction is not None:
        spec = spec.with_(noise_rate=noise_rate_for_fraction(spec, args.noise_fraction))
    stream = generate(spec)
    write_events(stream, args.out, args.format)
    _emit(_kv_report({"path": args.out, "events": len(stream), "width": stream.width, "height": stream.height,
                      "duration_us": stream.duration_us, "rate_hz": spec.rate_hz}, args.output))
    return EXIT_OK


def _write_report(path: str, csv_text: str, json_text: str, plain: str) -> None:
    suffix = Path(path).suffix.lower()
    Path(path).write_text(csv_text if suffix == ".csv" else json_text if suffix == ".json" else plain + "\n")


def cmd_bench(args) -> int:
    if args.manifest:
        scenarios = _bench.load_manifest(args.manifest)
    else:
        if args.suite == "sparse":
            scenarios = _bench.sparse_noisy_suite(args.noise_fraction or 1.0, args.seed)
        else:
            scenarios = SUITES[args.suite](args.noise_fraction, args.seed)
    if args.methods:
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        bad = set(methods) - set(_bench.METHODS)
        if bad:
            raise UsageError(f"unknown methods {sorted(bad)}")
        for s in scenarios:
            s.methods = methods
    if args.sweep:
        windows, counts = parse_sweep(args.sweep)
        base = {"workers": args.threads} if args.threads > 1 else None
        table = _bench.sweep(windows, counts, scenarios, base=base)
        json_text = json.dumps(_bench._jsonable([c.__dict__ for c in table.cells]), indent=2)
        out = {"json": json_text, "csv": table.to_csv(), "text": table.to_text()}
        if args.out:
            _write_report(args.out, table.to_csv(), json_text, table.to_text())
    else:
        report = _bench.run_bench(scenarios, workers=args.threads)
        out = {"json": report.to_json(), "csv": report.to_csv(), "text": report.to_text()}
        if args.out:
            _write_report(args.out, out["csv"], out["json"], out["text"])
    _emit(out[args.output])
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors; return the code so callers can inspect it
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (NoValidWindows, EmptyStream) as exc:
        print(f"eeppr: no valid windows ({exc})", file=sys.stderr)
        return EXIT_NO_ESTIMATE
    except NoEstimate as exc:
        print(f"eeppr: no estimate ({exc})", file=sys.stderr)
        return EXIT_NO_ESTIMATE
    except UsageError as exc:
        print(f"eeppr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EepprError, ValueError, OSError) as exc:
        print(f"eeppr: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
