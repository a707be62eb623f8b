"""Command-line front end.

Exit codes: 0 success, 2 I/O failure, 3 malformed input or options,
4 data incompatible with the Gaussian model, 5 iteration did not converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings

import numpy as np

from . import __version__
from .errors import (
    BadModeCount,
    ConvergenceError,
    DegenerateVariance,
    GaussQCError,
    InputError,
    ModelError,
    ParseError,
)
from .gaussian import TwinBeamSpec
from .moments import (
    IntensityMoments,
    JointDistribution,
    JointHistogram,
    estimate_modes,
    em_deconvolve,
    factorial_moments,
    group_windows,
    histogram_from_shots,
    intensity_moments_from_histogram,
    load_histogram,
    load_shots,
    merge_beams,
    moments_from_json,
    moments_to_json,
    reduce_per_mode,
    shannon_entropy,
    write_histogram_csv,
    write_shots_csv,
)
from .quantifiers import full_report, g2, squeezing_variance
from .statespace import atlas_to_csv, parse_grid, sweep_atlas, threshold_curves
from .synth import GENERATOR, DetectorSpec, SimRun, run_metadata, simulate, simulate_shots

EXIT_IO = 2
EXIT_PARSE = 3
EXIT_MODEL = 4
EXIT_CONVERGENCE = 5


class _Parser(argparse.ArgumentParser):
    # usage errors share the exit code of malformed input
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _pair(text, name):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"--{name} expects one or two numbers, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise InputError(f"--{name} expects one or two numbers, got {text!r}")
    return tuple(parts)


def _log(args, message):
    if not getattr(args, "quiet", False):
        print(message, file=sys.stderr)


def _write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename; ``-`` or
    ``None`` writes to standard output."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj):
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _provenance(args, inputs=()):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "quiet")}
    return {
        "gaussqc_version": __version__,
        "command": args.command,
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs},
    }


def _input_format(path, fmt):
    if fmt != "auto":
        return fmt
    return "json" if path.lower().endswith(".json") else "csv"


def _load(args) -> JointHistogram:
    fmt = _input_format(args.input, args.format)
    if args.group is not None:
        if fmt == "json":
            raise InputError("--group needs a shot-stream CSV input")
        return group_windows(load_shots(args.input), args.group)
    if fmt == "shots":
        return group_windows(load_shots(args.input), 1)
    return load_histogram(args.input, format=fmt)


def _deconvolve(args, hist, init=None):
    eta = _pair(args.efficiency, "efficiency") if args.efficiency else (1.0, 1.0)
    dark = _pair(args.dark, "dark") if args.dark else (0.0, 0.0)
    return em_deconvolve(hist, eta, dark, max_iter=args.max_iter, tol=args.tol,
                         strict=True, init=init)


def _moments(args, hist):
    """Intensity moments, their bootstrap replicates and the distribution
    used for the entropy."""
    if not (args.efficiency or args.dark):
        w, reps = intensity_moments_from_histogram(hist, n_boot=args.bootstrap, seed=args.seed,
                                                   return_replicates=True)
        return w, reps, JointDistribution.from_histogram(hist)
    _log(args, "deconvolving photocounts (EM)")
    dist = _deconvolve(args, hist)
    _log(args, f"EM converged after {dist.fit.iterations} iterations")
    w = factorial_moments(dist)
    reps = None
    if args.bootstrap > 1:
        rng = np.random.default_rng(args.seed)
        tables = []
        for i in range(args.bootstrap):
            counts = rng.multinomial(hist.total_shots, hist.frequencies.ravel())
            rep = JointHistogram.from_counts(counts.reshape(hist.counts.shape))
            tables.append(factorial_moments(_deconvolve(args, rep, init=dist.p)).values)
        reps = np.array(tables)
        w = IntensityMoments(w.values, w.max_order, reps.std(axis=0, ddof=1))
    return w, reps, dist


def _modes(args, w):
    if args.modes == "auto":
        try:
            M = estimate_modes(w, "marginal")
        except DegenerateVariance as exc:
            raise ModelError(f"cannot estimate the number of modes: {exc}") from None
        _log(args, f"estimated number of modes M = {M:.4g}")
        if M < 1:
            warnings.warn(f"mode estimate {M:.4g} < 1; reporting without reduction")
            M = 1.0
        return M
    try:
        M = float(args.modes)
    except ValueError:
        raise BadModeCount(f"--modes expects a number or 'auto', got {args.modes!r}") from None
    if not M >= 1:
        raise BadModeCount(f"--modes must be >= 1, got {M!r}")
    return M


def _csv_text(row):
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return out.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args):
    hist = _load(args)
    _log(args, f"loaded {hist.total_shots} shots")
    w, reps, dist = _moments(args, hist)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        M = _modes(args, w)
        report = full_report(w, M=M, replicates=reps, entropy=shannon_entropy(dist))
    report.warnings.extend(str(c.message) for c in caught)
    out = {"report": report.to_dict(),
           "moments": moments_to_json(w),
           "provenance": _provenance(args, [args.input])}
    _write_atomic(args.output, _json_text(out))
    if args.csv:
        _write_atomic(args.csv, _csv_text(report.csv_row()))
    if args.moments_output:
        _write_atomic(args.moments_output, _json_text(moments_to_json(w)))
    _log(args, f"verdict: {report.entanglement_verdict}")
    return 0


def cmd_simulate(args):
    eta = _pair(args.efficiency, "efficiency") if args.efficiency else (1.0, 1.0)
    dark = _pair(args.dark, "dark") if args.dark else (0.0, 0.0)
    bn = _pair(args.bn, "bn")
    try:
        M = int(args.modes)
    except ValueError:
        raise BadModeCount(f"--modes must be an integer for simulation, got {args.modes!r}") from None
    spec = TwinBeamSpec(args.bp, bn[0], bn[1], M)
    detectors = tuple(DetectorSpec(e, d, args.saturation) for e, d in zip(eta, dark))
    run = SimRun(spec, detectors, args.shots, args.seed)
    _log(args, f"simulating {args.shots} shots")
    header = [f"generator: {GENERATOR}", f"seed: {args.seed}", f"gaussqc {__version__}"]
    if args.shots_output:
        shots = simulate_shots(run)
        buf = io.StringIO()
        write_shots_csv(shots, buf, header)
        _write_atomic(args.shots_output, buf.getvalue())
        hist = histogram_from_shots(shots)
    else:
        hist = simulate(run)
    buf = io.StringIO()
    write_histogram_csv(hist, buf, header)
    _write_atomic(args.output, buf.getvalue())
    meta = args.metadata or (None if args.output in (None, "-") else args.output + ".meta.json")
    if meta:
        _write_atomic(meta, _json_text(run_metadata(run)))
    return 0


def cmd_sweep(args):
    grid = parse_grid(args.grid, mu_samples=args.mu_samples, delta_samples=args.delta_samples,
                      mu_min=args.mu_min)
    step = max(1, (len(grid.r1_values) * len(grid.r2_values)) // 20)

    def progress(done, total):
        if done % step == 0 or done == total:
            _log(args, f"sweep: {done}/{total} cells")

    atlas = sweep_atlas(grid, seed=args.seed, workers=args.workers, progress=progress)
    comments = [f"gaussqc {__version__} sweep", f"grid: {args.grid}", f"seed: {args.seed}",
                f"mu_samples: {grid.mu_samples}", f"delta_samples: {grid.delta_samples}"]
    _write_atomic(args.output, atlas_to_csv(atlas, comments=comments))
    if args.contours:
        table = threshold_curves(atlas)
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=["level", "axis", "fixed", "crossing"],
                                lineterminator="\n")
        writer.writeheader()
        for row in table.to_rows():
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
        _write_atomic(args.contours, out.getvalue())
    if args.json:
        cells = [vars(c) for c in atlas]
        _write_atomic(args.json, _json_text({"cells": cells, "provenance": _provenance(args)}))
    return 0


def cmd_reduce(args):
    try:
        with open(args.input) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    w = moments_from_json(obj.get("moments", obj))
    M = _modes(args, w)
    per_mode = reduce_per_mode(w, M)
    out = moments_to_json(per_mode)
    out["M"] = M
    out["provenance"] = _provenance(args, [args.input])
    _write_atomic(args.output, _json_text(out))
    return 0


def cmd_report_merge(args):
    hist = _load(args)
    w, reps, _ = _moments(args, hist)
    M = _modes(args, w)
    if M > 1:
        w = reduce_per_mode(w, M)
        if reps is not None:
            reps = np.array([reduce_per_mode(IntensityMoments(t, w.max_order), M).values
                             for t in reps])
    merged = merge_beams(w)
    sq = squeezing_variance(merged)
    value = g2(merged)
    out = {"M": M, "g2": value, "lambda": sq.lam, "B": sq.B, "absC": sq.absC,
           "squeezed": sq.squeezed, "super_gaussian": value > 2}
    if reps is not None and len(reps) > 1:
        g2s, lams = [], []
        for table in reps:
            try:
                m = merge_beams(IntensityMoments(table, w.max_order))
                g2s.append(g2(m))
                lams.append(squeezing_variance(m).lam)
            except ModelError:
                continue
        if len(g2s) > 1:
            out["g2_se"] = float(np.std(g2s, ddof=1))
            out["lambda_se"] = float(np.std(lams, ddof=1))
    out["provenance"] = _provenance(args, [args.input])
    _write_atomic(args.output, _json_text(out))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_input(p):
    p.add_argument("--input", "-i", required=True, help="histogram CSV/JSON or shot-stream CSV")
    p.add_argument("--format", choices=["auto", "csv", "json", "shots"], default="auto",
                   help="input format (default: from the file extension)")
    p.add_argument("--group", type=int, default=None,
                   help="sum N consecutive windows of a shot stream")
    p.add_argument("--efficiency", help="detector efficiencies eta1,eta2 (enables EM)")
    p.add_argument("--dark", help="dark-count means d1,d2 per window (enables EM)")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="EM stops when the log-likelihood gain per shot falls below this")
    p.add_argument("--max-iter", type=int, default=20000, help="EM iteration limit")
    p.add_argument("--bootstrap", type=int, default=200, help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gaussqc",
        description="Quantum-correlation analysis of two-beam Gaussian fields from photocounts.",
        epilog="exit codes: 0 ok, 2 I/O, 3 malformed input or options, 4 model, 5 convergence")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quiet", "-q", action="store_true", help="no progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="quantum-correlation report from a photocount histogram")
    _add_input(p)
    p.add_argument("--modes", default="1", help="number of modes M, or 'auto'")
    p.add_argument("--output", "-o", default="-", help="report JSON (default: stdout)")
    p.add_argument("--csv", help="also write the report as a one-row CSV")
    p.add_argument("--moments-output", help="also write the moment table JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="synthetic noisy twin-beam photocounts")
    p.add_argument("--bp", type=float, required=True, help="mean pair number per mode")
    p.add_argument("--bn", default="0", help="noise mean per mode, one value or bn1,bn2")
    p.add_argument("--modes", default="1", help="number of modes M (integer)")
    p.add_argument("--efficiency", help="detector efficiencies eta1,eta2")
    p.add_argument("--dark", help="dark-count means d1,d2")
    p.add_argument("--saturation", type=int, default=None, help="clip counts at this value")
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default="-", help="histogram CSV (default: stdout)")
    p.add_argument("--shots-output", help="also write the per-shot CSV")
    p.add_argument("--metadata", help="metadata JSON (default: OUTPUT.meta.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="negativity atlas over purity ratios")
    p.add_argument("--grid", default="1:4:31", help="r1min:r1max:steps[,r2min:r2max:steps]")
    p.add_argument("--mu-samples", type=int, default=32)
    p.add_argument("--delta-samples", type=int, default=9)
    p.add_argument("--mu-min", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", "-o", default="-", help="atlas CSV (default: stdout)")
    p.add_argument("--contours", help="also write the 10%% and 1%% contour table CSV")
    p.add_argument("--json", help="also write per-cell diagnostics JSON")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reduce", help="per-mode moments from a multimode moment table")
    p.add_argument("--input", "-i", required=True, help="moment-table JSON")
    p.add_argument("--modes", required=True, help="number of modes M, or 'auto'")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("report-merge", help="g2 and squeezing of the merged beam")
    _add_input(p)
    p.add_argument("--modes", default="1", help="reduce to one mode of M before merging, or 'auto'")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_report_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConvergenceError as exc:
        print(f"gaussqc: convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InputError as exc:
        print(f"gaussqc: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelError as exc:
        print(f"gaussqc: model error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"gaussqc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GaussQCError as exc:
        print(f"gaussqc: error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
