"""Command-line harness: experiment runner and verification driver.

Subcommands cover the library surface end to end: `geometry` and `qd`
dump closed-form values and serialized differentials, `flow` runs the
gradient flow from a JSON config, `angular` audits the windowed angular
energy bound on a serialized map, `wp` integrates the path length to
the pinch, and `verify` runs the invariant registry.

All artifacts are plot-ready CSV or sorted-key JSON with a provenance
header (config hash, seed, version).  Exit codes: 0 success, 1 a
verification check or audit failed, 2 usage or config errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from collarflow import __version__
from collarflow import io as cfio
from collarflow import wp
from collarflow.angular import angular_bound_audit
from collarflow.flow import dlogell_bound_check, run
from collarflow.geometry import (
    ELL_MAX,
    CollarGrid,
    DomainError,
    conformal_factor,
    delta_thin_half_length,
    dz2_norms,
    half_length,
    injectivity_radius,
)
from collarflow.demos import DEMOS, build_initial, demo_config
from collarflow.quad_diff import (
    fourier_decompose,
    inner_product,
    lp_norm,
    principal_split,
    synthesize,
)
from collarflow.verify import report_to_dict, run_checks


def _digest(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(path, allowed: set, required: set) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(
            f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise DomainError(f"{path}: top level must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise DomainError(f"{path}: unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise DomainError(f"{path}: missing keys {sorted(missing)}")
    return doc


# ----------------------------------------------------------------- geometry

def cmd_geometry(args) -> int:
    out = _out_dir(args)
    params = {"ell": args.ell, "delta": args.delta, "samples": args.samples}
    prov = cfio.provenance_for(seed=args.seed, config_sha256=_digest(params),
                               subcommand="geometry")
    norms = dz2_norms(args.ell)
    summary = {
        "ell": args.ell,
        "ell_max": ELL_MAX,
        "half_length": half_length(args.ell),
        "dz2_l1": norms.l1,
        "dz2_l2_sq": norms.l2_sq,
        "dz2_linf": norms.linf,
        "center_injectivity": injectivity_radius(args.ell, 0.0),
    }
    if args.delta is not None:
        X_delta = delta_thin_half_length(args.ell, args.delta)
        summary["delta"] = args.delta
        summary["delta_thin_half_length"] = X_delta
        summary["thick_margin"] = summary["half_length"] - X_delta
    cfio.write_json(out / "geometry_summary.json", summary, prov)

    s = np.linspace(-0.999, 0.999, args.samples) * summary["half_length"]
    cfio.write_csv(out / "geometry_profile.csv", {
        "s": s,
        "rho": np.array([conformal_factor(args.ell, v) for v in s]),
        "injectivity": np.array([injectivity_radius(args.ell, v) for v in s]),
    }, prov)
    return 0


# ----------------------------------------------------------------------- qd

_QD_KEYS = {"ell", "n_s", "n_theta", "s_max", "stretch", "modes"}


def _qd_from_config(doc: dict):
    block = doc["qd"]
    unknown = set(block) - _QD_KEYS
    if unknown:
        raise DomainError(f"unknown qd keys {sorted(unknown)}")
    missing = {"ell", "n_s", "n_theta", "modes"} - set(block)
    if missing:
        raise DomainError(f"qd config missing keys {sorted(missing)}")
    grid = CollarGrid(block["ell"], block["n_s"], block["n_theta"],
                      s_max=block.get("s_max"),
                      stretch=block.get("stretch", "uniform"))
    modes = {}
    for key, pair in block["modes"].items():
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise DomainError(f"mode {key!r} must be a [re, im] pair")
        modes[int(key)] = complex(pair[0], pair[1])
    return synthesize(modes, grid=grid)


def cmd_qd(args) -> int:
    out = _out_dir(args)
    if (args.config is None) == (args.field is None):
        raise DomainError("qd needs exactly one of --config or --field")
    if args.config is not None:
        doc = _load_config(args.config, {"qd", "seed", "output_dir"}, {"qd"})
        field = _qd_from_config(doc)
        params = doc["qd"]
    else:
        header = args.header or str(Path(args.field).with_suffix(".json"))
        field = cfio.qd_field_from_csv(args.field, header)
        params = {"field": str(args.field)}
    prov = cfio.provenance_for(seed=args.seed, config_sha256=_digest(params),
                               subcommand="qd")
    cfio.qd_field_to_csv(field, out / "qd_field.csv", out / "qd_field.json",
                         {"seed": args.seed, "subcommand": "qd"})
    split = principal_split(field)
    n_max = args.n_max
    if n_max is None:
        n_max = min(8, field.grid.n_theta // 2 - 1)
    dec = fourier_decompose(field, n_max=n_max)
    summary = {
        "ell": field.grid.ell,
        "n_s": field.grid.n_s,
        "n_theta": field.grid.n_theta,
        "s_max": field.grid.s_max,
        "b0": [split.b0.real, split.b0.imag],
        "l1": lp_norm(field, 1),
        "l2": math.sqrt(inner_product(field, field).real),
        "linf": lp_norm(field, math.inf),
        "remainder_l2": math.sqrt(
            inner_product(split.remainder, split.remainder).real),
        "modes": {str(n): [dec.coefficient(n).real, dec.coefficient(n).imag]
                  for n in range(-n_max, n_max + 1)},
    }
    cfio.write_json(out / "qd_summary.json", summary, prov)
    return 0


# --------------------------------------------------------------------- flow

def cmd_flow(args) -> int:
    out = _out_dir(args)
    if (args.config is None) == (args.demo is None):
        raise DomainError("flow needs exactly one of --config or --demo")
    if args.demo is not None:
        config, init_spec = demo_config(args.demo)
    else:
        doc = _load_config(args.config, {"flow", "initial", "seed", "output_dir"},
                           {"flow", "initial"})
        config = cfio.config_from_dict(doc["flow"])
        init_spec = doc["initial"]
    values = build_initial(config, init_spec)
    trace = run(config, values)
    prov = {"seed": args.seed, "subcommand": "flow"}
    cfio.trace_to_csv(trace, out / "trace.csv", prov)
    summary = cfio.trace_summary(trace)
    if trace.n_rows >= 3:
        fit = dlogell_bound_check(trace)
        summary["C_ell"] = fit.C_ell
        summary["C_smooth"] = fit.C_smooth
    else:
        summary["C_ell"] = None
        summary["C_smooth"] = None
    full_prov = cfio.provenance_for(config, **prov)
    full_prov["status"] = trace.status
    cfio.write_json(out / "summary.json", summary, full_prov)
    return 0


# ------------------------------------------------------------------ angular

def cmd_angular(args) -> int:
    out = _out_dir(args)
    header = args.header or str(Path(args.field).with_suffix(".json"))
    u = cfio.map_from_csv(args.field, header)
    audit = angular_bound_audit(u, profile_step=args.profile_step, c1=args.c1)
    params = {"field": str(args.field), "profile_step": args.profile_step,
              "c1": args.c1}
    prov = cfio.provenance_for(seed=args.seed, config_sha256=_digest(params),
                               subcommand="angular")
    prov.update({
        "c1": audit.c1,
        "fitted_c1": audit.fitted_c1,
        "satisfied": audit.satisfied,
        "vacuous": audit.vacuous,
    })
    cfio.write_csv(out / "angular_audit.csv", {
        "s0": audit.s0,
        "lhs": audit.theta,
        "rhs": audit.bound.values if not audit.vacuous else np.zeros(0),
        "slack": (audit.bound.values - audit.theta) if not audit.vacuous
        else np.zeros(0),
    }, prov)
    return 0 if audit.satisfied or audit.vacuous else 1


# ----------------------------------------------------------------------- wp

def cmd_wp(args) -> int:
    out = _out_dir(args)
    params = {"ell0": args.ell0, "tol": args.tol, "sweep": args.sweep}
    prov = cfio.provenance_for(seed=args.seed, config_sha256=_digest(params),
                               subcommand="wp")
    path = wp.integrate_to_pinch(args.ell0, tol=args.tol)
    cfio.write_csv(out / "wp_path.csv", {
        "s": path.total - path.distance,  # arclength from the start point
        "ell": path.ell,
    }, prov)
    summary = {
        "ell0": args.ell0,
        "tol": args.tol,
        "distance": path.total,
        "leading_order": math.sqrt(2.0 * math.pi * args.ell0),
        "deficit": math.sqrt(2.0 * math.pi * args.ell0) - path.total,
    }
    if args.sweep:
        ells = [float(v) for v in args.sweep.split(",")]
        fit = wp.correction_coefficient(ells, tol=args.tol)
        summary["sweep"] = ells
        summary["fit"] = {
            "c3": fit.c3,
            "c5": fit.c5,
            "c3_times_84pi": fit.c3 * 84.0 * math.pi,
            "max_rel_residual": fit.max_rel_residual,
        }
    cfio.write_json(out / "wp_summary.json", summary, prov)
    return 0


# ------------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    out = _out_dir(args)
    report = run_checks(seed=args.seed,
                        names=set(args.check) if args.check else None,
                        suites=set(args.suite) if args.suite else None)
    doc = report_to_dict(report, with_timing=args.with_timing)
    prov = cfio.provenance_for(seed=args.seed,
                               config_sha256=_digest({"seed": args.seed}),
                               subcommand="verify")
    cfio.write_json(out / "verify_report.json", doc, prov)
    for r in report.results:
        mark = "pass" if r.passed else "FAIL"
        print(f"{mark}  {r.suite:10s} {r.name:28s} {r.detail}")
    print(f"{report.n_passed}/{len(report.results)} checks passed")
    return 0 if report.passed else 1


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collarflow",
        description="hyperbolic collar flow experiments and verification")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="artifact directory")
        p.add_argument("--seed", type=int, default=0, help="global seed")

    p = subs.add_parser("geometry", help="closed-form collar quantities")
    common(p)
    p.add_argument("--ell", type=float, required=True, help="core length")
    p.add_argument("--delta", type=float, default=None,
                   help="also report the delta-thin subcollar extent")
    p.add_argument("--samples", type=int, default=200,
                   help="rows in geometry_profile.csv")
    p.set_defaults(handler=cmd_geometry)

    p = subs.add_parser("qd", help="synthesize or analyze a quadratic differential")
    common(p)
    p.add_argument("--config", default=None, help="JSON config with a 'qd' block")
    p.add_argument("--field", default=None, help="existing field CSV to analyze")
    p.add_argument("--header", default=None,
                   help="grid header JSON (default: field path with .json)")
    p.add_argument("--n-max", type=int, default=None, dest="n_max",
                   help="angular modes kept in the summary")
    p.set_defaults(handler=cmd_qd)

    p = subs.add_parser("flow", help="run the gradient flow")
    common(p)
    p.add_argument("--config", default=None,
                   help="JSON config with 'flow' and 'initial' blocks")
    p.add_argument("--demo", default=None, choices=sorted(DEMOS),
                   help="run a built-in demo configuration")
    p.set_defaults(handler=cmd_flow)

    p = subs.add_parser("angular", help="audit the windowed angular energy bound")
    common(p)
    p.add_argument("--field", required=True, help="serialized map CSV")
    p.add_argument("--header", default=None,
                   help="grid header JSON (default: field path with .json)")
    p.add_argument("--c1", type=float, default=None,
                   help="forcing constant (default: fitted)")
    p.add_argument("--profile-step", type=float, default=0.05,
                   dest="profile_step", help="station spacing")
    p.set_defaults(handler=cmd_angular)

    p = subs.add_parser("wp", help="integrate the path length to the pinch")
    common(p)
    p.add_argument("--ell0", type=float, default=0.1, help="starting length")
    p.add_argument("--tol", type=float, default=1e-10, help="integrator tolerance")
    p.add_argument("--sweep", default=None,
                   help="comma list of start lengths for the correction fit")
    p.set_defaults(handler=cmd_wp)

    p = subs.add_parser("verify", help="run the invariant registry")
    common(p)
    p.add_argument("--suite", action="append", default=None,
                   help="restrict to a module suite (repeatable)")
    p.add_argument("--check", action="append", default=None,
                   help="restrict to a named check (repeatable)")
    p.add_argument("--with-timing", action="store_true", dest="with_timing",
                   help="include wall time in the report")
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
