"""Command-line entry point: ``hybridst {list-codes,analyze,ber,required-ebn0,beta-sweep}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from .analysis import SearchBudgetExceeded, joint_min_det, normalized_min_det
from .coded_link import PRESETS, preset_config
from .codes import CODE_NAMES, make_code, read_descriptor, write_descriptor
from .sim import (BpskAwgnLink, ExperimentSpec, beta_sweep, curve_csv, load_experiment,
                  required_ebn0, run_ber_curve, run_manifest, sweep_csv)

log = logging.getLogger("hybridst")


def _floats(text: str) -> tuple[float, ...]:
    """'0,-6,-12' or 'start:stop:step' (inclusive stop)."""
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        n = int(round((b - a) / s)) + 1
        return tuple(round(a + i * s, 9) for i in range(n))
    return tuple(float(v) for v in text.split(","))


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_list_codes(args) -> int:
    print(f"{'name':26s} n_t  T   K  R     sat_rows")
    for name in CODE_NAMES:
        c = make_code(name)
        print(f"{name:26s} {c.n_t:3d} {c.T:2d} {c.K:3d}  {str(c.rate_R):5s} {list(c.sat_rows)}")
    return 0


def cmd_analyze(args) -> int:
    code = read_descriptor(Path(args.descriptor)) if args.descriptor else make_code(args.code)
    if args.export_descriptor:
        write_descriptor(code, args.export_descriptor)
    rep = joint_min_det(code, args.box, budget=args.budget, sample=not args.no_sample,
                        seed=args.seed, workers=args.workers)
    if args.symbol_scale != 1.0:
        rep.notes.append(f"normalized with symbol scale {args.symbol_scale}: "
                         f"{normalized_min_det(rep, code, args.symbol_scale):.6g}")
    print(rep.summary())
    if args.json:
        _write(args.json, json.dumps(rep.to_dict(), indent=2) + "\n")
    return 0


def _specs_from_args(args) -> list[ExperimentSpec]:
    if args.config:
        specs = load_experiment(args.config)
    else:
        if args.scheme == "bpsk_awgn":
            links = [BpskAwgnLink()]
        elif args.scheme:
            links = [preset_config(args.eta, args.scheme, args.miso_antennas)]
        else:
            links = [preset_config(args.eta, c.label, args.miso_antennas) for c in PRESETS[args.eta]]
        if args.frame_bits:
            links = [replace(l, frame_bits=args.frame_bits) for l in links]
        specs = [ExperimentSpec(link=l) for l in links]
    overrides = {}
    for key in ("channel_kind", "target_ber", "min_errors", "max_frames", "seed", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "ber_1e4", False):
        overrides["target_ber"] = 1e-4
    if args.ebn0_grid:
        overrides["ebn0_grid"] = _floats(args.ebn0_grid)
    if args.beta_grid:
        overrides["beta_grid"] = _floats(args.beta_grid)
    return [replace(s, **overrides) for s in specs]


def _manifest_out(args, specs, t0, extra=None):
    if args.manifest:
        m = run_manifest(specs, time.time() - t0, extra)
        Path(args.manifest).write_text(json.dumps(m, indent=2, default=str) + "\n")


def cmd_ber(args) -> int:
    t0 = time.time()
    specs = _specs_from_args(args)
    chunks, records = [], []
    for spec in specs:
        for beta in spec.beta_grid:
            curve = run_ber_curve(spec, beta)
            text = curve_csv(curve, spec)
            chunks.append(text if not chunks else text.split("\n", 2)[2])
            records.append(asdict(curve))
    _write(args.out, "".join(chunks))
    _manifest_out(args, specs, t0, {"curves": records})
    return 0


def cmd_required(args) -> int:
    t0 = time.time()
    specs = _specs_from_args(args)
    rows = []
    for spec in specs:
        for beta in spec.beta_grid:
            rows.append(required_ebn0(spec, beta_db=beta))
    _write(args.out, sweep_csv(rows, specs))
    _manifest_out(args, specs, t0, {"results": [asdict(r) for r in rows]})
    return 0 if all(r.ok for r in rows) else 1


def cmd_sweep(args) -> int:
    t0 = time.time()
    specs = _specs_from_args(args)
    rows = beta_sweep(specs)
    _write(args.out, sweep_csv(rows, specs))
    if args.json:
        Path(args.json).write_text(json.dumps([asdict(r) for r in rows], indent=2) + "\n")
    _manifest_out(args, specs, t0, {"results": [asdict(r) for r in rows]})
    return 0 if all(r.ok for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridst", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("list-codes", help="list the available space-time codes")
    s.set_defaults(func=cmd_list_codes)

    s = sub.add_parser("analyze", help="minimum determinant / NVD search")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--code", choices=CODE_NAMES)
    g.add_argument("--descriptor", help="code descriptor text file")
    s.add_argument("--box", type=int, default=1)
    s.add_argument("--budget", type=int, default=10**7)
    s.add_argument("--seed", type=int, default=0, help="sampling seed")
    s.add_argument("--no-sample", action="store_true",
                   help="fail instead of sampling when the box exceeds the budget")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--symbol-scale", type=float, default=1.0)
    s.add_argument("--json", help="write the report as JSON to this path ('-' for stdout)")
    s.add_argument("--export-descriptor", help="write the code descriptor to this path")
    s.set_defaults(func=cmd_analyze)

    def sim_args(s, sweep=False):
        s.add_argument("--config", help="experiment JSON file")
        s.add_argument("--eta", type=int, choices=(2, 4), default=2)
        s.add_argument("--scheme", help="preset row (Alamouti, MISO, L3, D-Alamouti, L2) "
                                        "or bpsk_awgn")
        s.add_argument("--miso-antennas", type=int, choices=(2, 4), default=4)
        s.add_argument("--channel", dest="channel_kind", choices=("rayleigh", "lms", "hybrid"))
        s.add_argument("--ebn0-grid", help="e.g. 0:14:2 or 0,2,4")
        s.add_argument("--beta-grid", help="e.g. 0,-6,-12")
        s.add_argument("--target-ber", type=float)
        s.add_argument("--ber-1e4", action="store_true", help="use the 1e-4 target")
        s.add_argument("--min-errors", type=int)
        s.add_argument("--max-frames", type=int)
        s.add_argument("--frame-bits", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int, help="overridden by $HYBRIDST_WORKERS")
        s.add_argument("--out", help="CSV output path (default stdout)")
        s.add_argument("--manifest", help="JSON run manifest path")

    s = sub.add_parser("ber", help="BER-vs-Eb/N0 curves")
    sim_args(s)
    s.set_defaults(func=cmd_ber)

    s = sub.add_parser("required-ebn0", help="Eb/N0 needed for the target BER")
    sim_args(s)
    s.set_defaults(func=cmd_required)

    s = sub.add_parser("beta-sweep", help="required Eb/N0 against the power imbalance")
    sim_args(s)
    s.add_argument("--json", help="results as JSON")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, SearchBudgetExceeded) as exc:
        log.error("%s", exc)
        return 2
