"""Command-line front end: ``bregflow {flow,eval,viz,diag,reproduce-table3}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .bregman import convergence_report
from .evaluation import colorize_flow, evaluate
from .flowfield import FlowField
from .imageops import gaussian_smooth
from .io import FormatError, read_flo, read_image, write_flo, write_image
from .linsys import spd_check
from .pipeline import MODELS, compute_flow, level_tensor
from .solvers import PRESETS, SolverParams, solve_brox_level, solve_osb_level

__all__ = ["main", "build_parser", "resolve_params", "EXIT_CODES", "find_sequence", "TABLE3"]

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_MISSING_FILE = 2
EXIT_FORMAT = 3
EXIT_PARAMS = 4
EXIT_DIMENSIONS = 5
EXIT_NUMERICAL = 6
EXIT_NO_DATA = 7
EXIT_OUT_OF_TOLERANCE = 8
EXIT_USAGE = 64

EXIT_CODES = {
    EXIT_OK: "success",
    EXIT_INTERNAL: "unexpected internal error",
    EXIT_MISSING_FILE: "input file missing or unreadable (the message names the path)",
    EXIT_FORMAT: "malformed or unsupported file content",
    EXIT_PARAMS: "invalid or missing parameters / config file",
    EXIT_DIMENSIONS: "frame or flow dimensions do not match",
    EXIT_NUMERICAL: "numerical failure in a solver",
    EXIT_NO_DATA: "reproduce-table3: BREGFLOW_DATA unset or sequence files not found",
    EXIT_OUT_OF_TOLERANCE: "reproduce-table3: some errors fall outside the tolerance",
    EXIT_USAGE: "command-line usage error",
}

#: Published rows: (model, sequence) -> (AAE, AEE, AAE tolerance, AEE tolerance).
TABLE3 = {
    ("osb", "RubberWhale"): (4.06, 0.12, 0.75, 0.05),
    ("osb", "Grove2"): (2.79, 0.18, 0.75, 0.05),
    ("brox", "RubberWhale"): (4.67, 0.14, 1.0, 0.07),
    ("brox", "Grove2"): (2.95, 0.20, 1.0, None),
}

# flag / config name -> SolverParams field
_PARAM_NAMES = {
    "lambda": "lam", "lam": "lam", "mu": "mu", "gamma": "gamma", "sigma": "sigma",
    "bregman_iters": "N", "N": "N", "sweeps": "M", "M": "M",
    "gs_iters": "gs_sweeps", "gs_sweeps": "gs_sweeps",
    "pyramid_scale": "pyramid_scale", "min_size": "min_size",
    "median": "median", "median_radius": "median_radius",
    "occlusion": "occlusion_on", "occlusion_on": "occlusion_on",
    "occlusion_threshold": "occlusion_threshold", "ordering": "ordering",
}


class CLIError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the
    # missing-file code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _epilog():
    rows = "\n".join(f"  {code:>3}  {text}" for code, text in EXIT_CODES.items())
    return ("parameter precedence: flags > --config file > --preset row\n\n"
            "exit codes:\n" + rows)


def _add_param_flags(p):
    g = p.add_argument_group("solver parameters")
    g.add_argument("--model", choices=MODELS, default=None, help="flow model (default osb)")
    g.add_argument("--preset", choices=sorted({seq for _, seq in PRESETS}),
                   help="start from the published parameter row for this sequence")
    g.add_argument("--config", help="JSON file with parameter values")
    g.add_argument("--lambda", dest="lambda_", type=float, help="data weight")
    g.add_argument("--mu", type=float, help="Bregman coupling weight")
    g.add_argument("--gamma", type=float, help="gradient constancy weight")
    g.add_argument("--sigma", type=float, help="presmoothing standard deviation")
    g.add_argument("--bregman-iters", type=int, help="outer Bregman iterations N")
    g.add_argument("--sweeps", type=int, help="alternating sweeps M per Bregman iteration")
    g.add_argument("--gs-iters", type=int, help="Gauss-Seidel sweeps per (u, v) solve")
    g.add_argument("--pyramid-scale", type=float, help="pyramid downsampling factor (default 0.9)")
    g.add_argument("--min-size", type=int, help="smallest pyramid side (default 16)")
    g.add_argument("--ordering", choices=("raster", "red-black"), help="Gauss-Seidel pixel order")
    g.add_argument("--median", action=argparse.BooleanOptionalAction, default=None,
                   help="median filter the upsampled flow (default on)")
    g.add_argument("--occlusion", action=argparse.BooleanOptionalAction, default=None,
                   help="forward/backward occlusion masking (default off)")


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="bregflow", description="Split Bregman optical flow.",
                     epilog=_epilog(), formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="estimate the flow between two frames",
                       epilog=_epilog(), formatter_class=fmt)
    p.add_argument("frame0")
    p.add_argument("frame1")
    p.add_argument("--out", required=True, help="output .flo path")
    p.add_argument("--viz-out", help="optional colour-coded PNG/PPM")
    p.add_argument("--trace-csv", help="write the finest level's Bregman trace")
    _add_param_flags(p)

    p = sub.add_parser("eval", help="AAE / AEE of a flow against ground truth",
                       epilog=_epilog(), formatter_class=fmt)
    p.add_argument("flow")
    p.add_argument("truth")

    p = sub.add_parser("viz", help="colour-code a .flo file", epilog=_epilog(), formatter_class=fmt)
    p.add_argument("flow")
    p.add_argument("--out", required=True, help="output PNG/PPM path")
    p.add_argument("--max-magnitude", type=float, help="magnitude mapped to full saturation")

    p = sub.add_parser("diag", help="SPD check and single-level convergence trace",
                       epilog=_epilog(), formatter_class=fmt)
    p.add_argument("frame0")
    p.add_argument("frame1")
    p.add_argument("--trace-csv", help="CSV with one row per Bregman iteration")
    p.add_argument("--trials", type=int, default=1000, help="random probes for the SPD check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d0", type=float, help="reference divergence for the 1/k envelope")
    _add_param_flags(p)

    p = sub.add_parser("reproduce-table3", help="rerun the published OSB / Brox rows",
                       epilog=_epilog(), formatter_class=fmt)
    p.add_argument("--data", help="Middlebury directory (default $BREGFLOW_DATA)")
    p.add_argument("--models", nargs="+", choices=("osb", "brox"), default=["osb", "brox"])
    p.add_argument("--sequences", nargs="+", choices=("RubberWhale", "Grove2"),
                   default=["RubberWhale", "Grove2"])
    p.add_argument("--out-dir", help="keep the estimated .flo files here")
    return parser


def _load_config(path):
    if not os.path.isfile(path):
        raise CLIError(EXIT_MISSING_FILE, f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CLIError(EXIT_PARAMS, f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise CLIError(EXIT_PARAMS, f"{path}: top level must be an object")
    return cfg


def resolve_params(args):
    """Merge preset, config file and flags (later wins) into ``(model, SolverParams)``."""
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    model = args.model or cfg.get("model") or "osb"
    if model not in MODELS:
        raise CLIError(EXIT_PARAMS, f"unknown model {model!r}")
    preset = args.preset or cfg.get("preset")

    values = {}
    if preset is not None:
        key = (model, preset)
        if key not in PRESETS:
            raise CLIError(EXIT_PARAMS, f"no preset for model {model!r} and sequence {preset!r}")
        values.update(dataclasses.asdict(PRESETS[key]))
    for name, val in cfg.items():
        if name in ("model", "preset"):
            continue
        if name not in _PARAM_NAMES:
            raise CLIError(EXIT_PARAMS, f"unknown config key {name!r}")
        values[_PARAM_NAMES[name]] = val
    flags = {"lam": args.lambda_, "mu": args.mu, "gamma": args.gamma, "sigma": args.sigma,
             "N": args.bregman_iters, "M": args.sweeps, "gs_sweeps": args.gs_iters,
             "pyramid_scale": args.pyramid_scale, "min_size": args.min_size,
             "ordering": args.ordering, "median": args.median, "occlusion_on": args.occlusion}
    values.update({k: v for k, v in flags.items() if v is not None})

    missing = [flag for flag, field in (("--lambda", "lam"), ("--mu", "mu")) if field not in values]
    if missing:
        raise CLIError(EXIT_PARAMS, f"missing {' and '.join(missing)} (give flags, --config or --preset)")
    try:
        return model, SolverParams(**values)
    except (TypeError, ValueError) as exc:
        raise CLIError(EXIT_PARAMS, f"invalid parameters: {exc}") from None


def _read_frames(path0, path1):
    f0, f1 = read_image(path0), read_image(path1)
    if f0.shape != f1.shape:
        raise CLIError(EXIT_DIMENSIONS, f"frame sizes differ: {f0.shape} vs {f1.shape}")
    return f0, f1


def _write_viz(flow, path, max_magnitude=None):
    write_image(colorize_flow(flow, max_magnitude), path)


def cmd_flow(args):
    model, params = resolve_params(args)
    f0, f1 = _read_frames(args.frame0, args.frame1)
    t0 = time.perf_counter()
    flow, traces = compute_flow(f0, f1, model, params, return_traces=True)
    elapsed = time.perf_counter() - t0
    write_flo(flow, args.out)
    if args.viz_out:
        _write_viz(flow, args.viz_out)
    print(f"model {model}  size {f0.shape[1]}x{f0.shape[0]}  levels {len(traces)}")
    print(f"runtime {elapsed:.2f} s")
    last = traces[-1]
    if last is not None:
        print(f"finest level: H {last.records[0].H:.4e} -> {last.records[-1].H:.4e}, "
              f"energy {last.records[0].J:.6g} -> {last.records[-1].J:.6g}")
        nwarn = sum(len(t.warnings) for t in traces)
        print(f"trace warnings: {nwarn}")
        if args.trace_csv:
            last.to_csv(args.trace_csv, skip_initial=True)
    elif args.trace_csv:
        print("no Bregman trace for horn_schunck; --trace-csv ignored")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args):
    est, truth = read_flo(args.flow), read_flo(args.truth)
    if est.shape != truth.shape:
        raise CLIError(EXIT_DIMENSIONS, f"flow sizes differ: {est.shape} vs {truth.shape}")
    try:
        report = evaluate(est, truth)
    except ValueError as exc:
        raise CLIError(EXIT_FORMAT, f"{args.truth}: {exc}") from None
    print(report)
    return EXIT_OK


def cmd_viz(args):
    flow = read_flo(args.flow)
    if args.max_magnitude is not None and not args.max_magnitude > 0:
        raise CLIError(EXIT_PARAMS, "--max-magnitude must be positive")
    _write_viz(flow, args.out, args.max_magnitude)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_diag(args):
    """SPD check of the finest-level system at zero flow, then one traced level solve."""
    model, params = resolve_params(args)
    if args.trials < 1:
        raise CLIError(EXIT_PARAMS, "--trials must be >= 1")
    f0, f1 = _read_frames(args.frame0, args.frame1)
    g0, g1 = gaussian_smooth(f0, params.sigma), gaussian_smooth(f1, params.sigma)
    zero = FlowField.zeros(g0.shape)
    if model == "brox":
        # the Brox (u, v) system always carries unit-weighted gradient rows
        system, theta = level_tensor(g0, g1, zero, 1.0), 1.0
    elif model == "osb":
        system, theta = level_tensor(g0, g1, zero, params.gamma), params.mu / params.lam
    else:
        system, theta = level_tensor(g0, g1, zero, 0.0), params.mu / params.lam

    print(f"model {model}  theta {theta:.6g}")
    for line in spd_check(system, theta, trials=args.trials, seed=args.seed).lines():
        print(line)

    if model == "horn_schunck":
        print("horn_schunck has no Bregman loop; no trace")
        return EXIT_OK
    tensor = level_tensor(g0, g1, zero, params.gamma)
    solver = solve_osb_level if model == "osb" else solve_brox_level
    _, trace = solver(tensor, params, zero)
    if args.trace_csv:
        trace.to_csv(args.trace_csv, skip_initial=True)
        print(f"wrote {args.trace_csv} ({len(trace) - 1} rows)")
    report = convergence_report(trace, params.mu, d0=args.d0, start=1)
    for line in report.lines():
        print(line)
    for w in trace.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def find_sequence(root, name):
    """Locate ``frame10``, ``frame11`` and ``flow10.flo`` of a Middlebury sequence.

    Accepts the official ``other-data/<name>`` + ``other-gt-flow/<name>``
    layout as well as a flat ``<name>/`` directory holding all three.
    Frames may be PNG or PGM/PPM. Returns ``None`` if anything is missing.
    """
    dirs = [(os.path.join(root, "other-data", name), os.path.join(root, "other-gt-flow", name)),
            (os.path.join(root, name), os.path.join(root, name))]
    for frame_dir, gt_dir in dirs:
        gt = os.path.join(gt_dir, "flow10.flo")
        frames = []
        for idx in (10, 11):
            hits = [os.path.join(frame_dir, f"frame{idx}{ext}") for ext in (".png", ".pgm", ".ppm")]
            hits = [h for h in hits if os.path.isfile(h)]
            frames.append(hits[0] if hits else None)
        if all(frames) and os.path.isfile(gt):
            return frames[0], frames[1], gt
    return None


def cmd_reproduce(args):
    root = args.data or os.environ.get("BREGFLOW_DATA")
    if not root:
        raise CLIError(EXIT_NO_DATA, "BREGFLOW_DATA is not set and --data not given")
    located = {}
    for seq in args.sequences:
        hit = find_sequence(root, seq)
        if hit is None:
            raise CLIError(EXIT_NO_DATA, f"sequence {seq} not found under {root}")
        located[seq] = hit

    all_ok = True
    results = {}
    print(f"{'model':6} {'sequence':12} {'AAE':>6} {'pub':>6} {'AEE':>6} {'pub':>6} {'RT[s]':>7}  status")
    for model in args.models:
        for seq in args.sequences:
            p0, p1, gt = located[seq]
            f0, f1 = _read_frames(p0, p1)
            truth = read_flo(gt)
            t0 = time.perf_counter()
            flow = compute_flow(f0, f1, model, PRESETS[(model, seq)])
            rt = time.perf_counter() - t0
            rep = evaluate(flow, truth)
            results[(model, seq)] = rep
            paae, paee, taae, taee = TABLE3[(model, seq)]
            ok = abs(rep.aae - paae) <= taae and (taee is None or abs(rep.aee - paee) <= taee)
            all_ok &= ok
            print(f"{model:6} {seq:12} {rep.aae:6.2f} {paae:6.2f} {rep.aee:6.2f} {paee:6.2f} "
                  f"{rt:7.1f}  {'PASS' if ok else 'FAIL'}")
            if args.out_dir:
                os.makedirs(args.out_dir, exist_ok=True)
                write_flo(flow, os.path.join(args.out_dir, f"{model}_{seq}.flo"))
    for seq in args.sequences:
        if ("osb", seq) in results and ("brox", seq) in results:
            better = results[("osb", seq)].aae < results[("brox", seq)].aae
            all_ok &= better
            print(f"ordering {seq}: OSB AAE < Brox AAE: {'PASS' if better else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_OUT_OF_TOLERANCE


_COMMANDS = {"flow": cmd_flow, "eval": cmd_eval, "viz": cmd_viz, "diag": cmd_diag,
             "reproduce-table3": cmd_reproduce}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CLIError as exc:
        code, msg = exc.code, str(exc)
    except FileNotFoundError as exc:
        code, msg = EXIT_MISSING_FILE, f"file not found: {exc.filename}"
    except (IsADirectoryError, PermissionError) as exc:
        code, msg = EXIT_MISSING_FILE, f"cannot read {exc.filename}: {exc.strerror}"
    except FormatError as exc:
        code, msg = EXIT_FORMAT, str(exc)
    except np.linalg.LinAlgError as exc:
        code, msg = EXIT_NUMERICAL, str(exc)
    except Exception as exc:  # noqa: BLE001 - last resort, still a documented code
        code, msg = EXIT_INTERNAL, f"{type(exc).__name__}: {exc}"
    print(f"bregflow: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
