"""Command-line interface for weight generation, characteristics, and the
experiment suites.

Exit codes: 0 pass, 1 verifier failure, 2 input error, 3 calibration failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import fieldio
from .ellipsoid import ConvergenceError
from .experiments import (
    EnsembleConfig,
    emit_report,
    run_domination_experiment,
    run_norm_bound_experiment,
    run_sharpness_scan,
)
from .generators import WeightFamilySpec, generate_weight
from .grid import CellField, GridError, GridSpec
from .stopping import CalibrationError
from .weights import DefinitenessError, MatrixWeightField, compute_characteristics

EXIT_PASS = 0
EXIT_VERIFIER = 1
EXIT_INPUT = 2
EXIT_CALIBRATION = 3


def _parse_grid(text: str) -> GridSpec:
    try:
        d, N, n = (int(x) for x in text.split(","))
        return GridSpec(d, N, n)
    except (ValueError, GridError) as exc:
        raise GridError(f"bad --grid {text!r}: {exc}") from exc


def _add_common(sub):
    sub.add_argument("--grid", default="1,4,2", help="d,N,n (default 1,4,2)")
    sub.add_argument("--p", type=float, default=2.0)
    sub.add_argument("--lambda", dest="lam", type=float, default=16.0)
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--format", default="json", choices=("json", "csv"))
    sub.add_argument("--members", type=int, default=32)
    sub.add_argument("--strict", action="store_true",
                     help="fail on any verifier margin breach")
    sub.add_argument("--config", default=None, help="JSON config file; flags override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwsf",
        description="Matrix-weighted dyadic square function engine",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-weight", "characteristics", "dominate", "norm-bound",
                 "sharpness", "verify"):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "gen-weight":
            sub.add_argument("--kind", default="random-log-bounded")
            sub.add_argument("--alpha", type=float, default=0.5)
            sub.add_argument("--weight-out", default="weight.field")
        if name == "characteristics":
            sub.add_argument("--weight", required=True, help="matrix field file")
            sub.add_argument("--weight2", default=None,
                             help="second weight of the pair (default: same)")
        if name == "sharpness":
            sub.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5")
    return parser


def _apply_config_file(args):
    if not args.config:
        return args
    with open(args.config) as fh:
        file_conf = json.load(fh)
    parser = build_parser()
    defaults = parser.parse_args([args.command])
    for key, value in file_conf.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise GridError(f"unknown config key {key!r}")
        # a flag that still holds its default defers to the file
        if getattr(args, key) == getattr(defaults, key, None):
            setattr(args, key, value)
    return args


def _ensemble_config(args) -> EnsembleConfig:
    return EnsembleConfig(
        seed=args.seed,
        members=args.members,
        lam=args.lam,
        strict=args.strict,
        out_dir=args.out,
    )


def _cmd_gen_weight(args) -> int:
    grid = _parse_grid(args.grid)
    spec = WeightFamilySpec(grid, kind=args.kind, alpha=(args.alpha,),
                            seed=args.seed)
    result = generate_weight(spec)
    pair = result if isinstance(result, tuple) else (result,)
    paths = []
    for i, W in enumerate(pair):
        path = args.weight_out if i == 0 else args.weight_out + f".{i}"
        fieldio.write_field(path, CellField(grid, W.base))
        paths.append(path)
    print(json.dumps({"written": paths}))
    return EXIT_PASS


def _cmd_characteristics(args) -> int:
    f = fieldio.read_field(args.weight)
    U = MatrixWeightField(f.grid, f.values)
    V = U
    if args.weight2:
        f2 = fieldio.read_field(args.weight2)
        V = MatrixWeightField(f2.grid, f2.values)
    chars = compute_characteristics(U, V, args.p)
    print(json.dumps(chars.to_json_dict(), indent=2))
    return EXIT_PASS


def _cmd_dominate(args) -> int:
    report = run_domination_experiment(_ensemble_config(args))
    if args.out:
        emit_report(report, args.out, formats=(args.format, "json"))
    print(json.dumps({
        "all_pass": report.all_pass,
        "members": len(report.members),
        "seconds": report.seconds,
    }))
    return EXIT_PASS if report.all_pass else EXIT_VERIFIER


def _cmd_norm_bound(args) -> int:
    report = run_norm_bound_experiment(_ensemble_config(args))
    if args.out:
        emit_report(report, args.out, formats=(args.format, "json"))
    print(json.dumps({"all_pass": report.all_pass, "members": len(report.members)}))
    return EXIT_PASS if report.all_pass else EXIT_VERIFIER


def _cmd_sharpness(args) -> int:
    grid = _parse_grid(args.grid)
    alphas = [float(a) for a in args.alphas.split(",")]
    report = run_sharpness_scan(_ensemble_config(args), grid, args.p, alphas)
    if args.out:
        emit_report(report, args.out, formats=(args.format, "json"))
    print(json.dumps({"slope": report.slope, "stderr": report.slope_stderr}))
    return EXIT_PASS


def _cmd_verify(args) -> int:
    """Compact invariant battery: Haar identities plus a small ensemble."""
    from .haar import haar_transform, random_field, reconstruct
    from .grid import lp_norm

    failures = []
    for d in (1, 2):
        for N in (1, 3):
            grid = GridSpec(d, N, 2)
            rng = np.random.default_rng(args.seed)
            f = random_field(grid, rng)
            rec = reconstruct(haar_transform(f))
            if np.abs(rec.values - f.values).max() > 1e-10:
                failures.append(f"haar round trip d={d} N={N}")
            coeffs = haar_transform(f)
            energy = sum(
                float(np.sum(np.square(np.atleast_1d(v))))
                for _, v in coeffs.items()
            ) + float(np.sum(np.square(np.atleast_1d(coeffs.top_average))))
            if abs(energy - lp_norm(f, 2) ** 2) > 1e-8 * max(energy, 1):
                failures.append(f"parseval d={d} N={N}")
    config = _ensemble_config(args)
    config.members = min(config.members, 6)
    report = run_domination_experiment(config)
    if not report.all_pass:
        failures.append("domination ensemble")
    for item in failures:
        print(f"FAIL {item}")
    print(json.dumps({"failures": failures, "ok": not failures}))
    return EXIT_PASS if not failures else EXIT_VERIFIER


_COMMANDS = {
    "gen-weight": _cmd_gen_weight,
    "characteristics": _cmd_characteristics,
    "dominate": _cmd_dominate,
    "norm-bound": _cmd_norm_bound,
    "sharpness": _cmd_sharpness,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (GridError, DefinitenessError, ConvergenceError, OSError,
            json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
