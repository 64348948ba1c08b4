"""Command-line experiment runner.

Every run writes CSV/JSON artifacts and a ``manifest_<command>.json`` into the output
directory (``--out``, else ``$TORUSFLOW_OUTPUT_DIR``, else ``./torusflow-out``).
Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 certification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CertificationError, NumericalError, SpecError, TorusFlowError

log = logging.getLogger("torusflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CERT = 0, 2, 3, 4
HORIZON_CAP = 1e6
MAX_TRUNCATION = 10_000


# -- argument handling ---------------------------------------------------------------


def _add_field_args(p):
    g = p.add_argument_group("field")
    g.add_argument("--spec", help="field-spec JSON document")
    g.add_argument("--preset", help="preset name (see 'preset list')")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="preset parameter; VALUE is parsed as JSON when possible")


def _add_run_args(p, horizon=100.0, grid=None):
    p.add_argument("--horizon", type=float, default=horizon)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--grid", default=grid, help="points per axis, e.g. 5x5 (cell-centred)")
    p.add_argument("--x", action="append", default=[], help="initial point, comma separated (repeatable)")
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    ap = argparse.ArgumentParser(prog="torusflow", description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--config", help="JSON file whose keys override command-line flags")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-plot", action="store_true", help="skip SVG figures")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate orbits and write trajectories")
    _add_field_args(p)
    _add_run_args(p, horizon=10.0)
    p.add_argument("--dt", type=float, default=0.01)

    p = sub.add_parser("rotation", help="rotation-vector estimates over a grid")
    _add_field_args(p)
    _add_run_args(p, horizon=1e3, grid="5x5")

    p = sub.add_parser("deviation", help="sup |X(t,x) - x - t zeta| over a grid")
    _add_field_args(p)
    _add_run_args(p, horizon=100.0, grid="5x5")
    p.add_argument("--zeta", help="comma separated zeta; default: preset value, else estimated")

    p = sub.add_parser("herman", help="sampled Herman rotation set (inner approximation)")
    _add_field_args(p)
    _add_run_args(p, horizon=1e3, grid="5x5")

    p = sub.add_parser("theta", help="small-divisor corrector for a Stepanoff field")
    _add_field_args(p)
    p.add_argument("-N", "--truncation", type=int, default=8)

    p = sub.add_parser("liouville", help="Liouville counterexample construction")
    p.add_argument("--terms", type=int, default=3)
    p.add_argument("--report", choices=("construction", "theta-growth"), default="construction")

    p = sub.add_parser("classify", help="continued fraction and irrationality-exponent estimate")
    p.add_argument("--value", required=True, help="golden, sqrt2, liouville or a decimal literal")
    p.add_argument("--depth", type=int, default=20)

    p = sub.add_parser("reduce", help="equipotential corrector or Kozlov reduction of a preset")
    _add_field_args(p)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--tol", type=float, default=1e-11)

    p = sub.add_parser("verify", help="flow invariants and closed-form agreement")
    _add_field_args(p)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--tmax", type=float, default=5.0)

    p = sub.add_parser("preset", help="list or show presets")
    psub = p.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list")
    s = psub.add_parser("show")
    s.add_argument("name")
    s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("plot", help="render an SVG from a run CSV")
    p.add_argument("csv")
    p.add_argument("--kind", required=True, choices=("orbit", "deviation-vs-t", "divisor-spectrum", "zeta-scatter"))
    p.add_argument("--bound", type=float)
    p.add_argument("--output", help="SVG path (default: CSV path with .svg)")
    return ap


def _apply_config(args):
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise SpecError("config file must hold a JSON object")
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config"):
            continue
        if not hasattr(args, dest):
            raise SpecError(f"config key {key!r} is not an option of '{args.command}'")
        setattr(args, dest, value)
    return args


def _validate(args):
    tol = getattr(args, "tol", None)
    if tol is not None and not (1e-12 <= float(tol) <= 1e-2):
        raise SpecError(f"tol must lie in [1e-12, 1e-2], got {tol}")
    h = getattr(args, "horizon", None)
    if h is not None and not (0 < float(h) <= HORIZON_CAP):
        raise SpecError(f"horizon must lie in (0, {HORIZON_CAP:g}], got {h}")
    n = getattr(args, "truncation", None)
    if n is not None and not (0 <= int(n) <= MAX_TRUNCATION):
        raise SpecError(f"truncation N must lie in [0, {MAX_TRUNCATION}], got {n}")
    w = getattr(args, "workers", None)
    if w is not None and int(w) < 1:
        raise SpecError("workers must be >= 1")
    if getattr(args, "depth", None) is not None and not (5 <= int(args.depth) <= 500):
        raise SpecError("depth must lie in [5, 500]")
    if getattr(args, "terms", None) is not None and not (0 <= int(args.terms) <= 5):
        raise SpecError("terms must lie in [0, 5]")


def _params(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise SpecError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _field(args):
    """(FieldSpec, Preset or None) from --spec / --preset."""
    from .core import parse_spec
    from .presets import preset

    if bool(args.spec) == bool(args.preset):
        raise SpecError("give exactly one of --spec or --preset")
    if args.preset:
        p = preset(args.preset, **_params(args.param))
        return p.field, p
    try:
        doc = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read field spec {args.spec}: {exc}") from None
    spec = parse_spec(doc)
    p = None
    if spec.kind == "preset":
        p = preset(spec.variant.name, **dict(spec.variant.params))
    return spec, p


def _points(args, d):
    from .rotation import unit_grid

    pts = []
    for s in args.x:
        try:
            v = np.array([float(c) for c in s.split(",")])
        except ValueError:
            raise SpecError(f"bad point {s!r}") from None
        if v.shape != (d,):
            raise SpecError(f"point {s!r} must have {d} coordinates")
        pts.append(v)
    if args.grid:
        try:
            shape = tuple(int(c) for c in str(args.grid).lower().split("x"))
        except ValueError:
            raise SpecError(f"bad grid {args.grid!r}, expected e.g. 5x5") from None
        if len(shape) == 1:
            shape = shape * d
        if any(n < 1 for n in shape) or math.prod(shape) > 10_000:
            raise SpecError("grid must have between 1 and 10000 points")
        pts.extend(unit_grid(d, shape))
    if not pts:
        raise SpecError("no initial points: use --x or --grid")
    return pts


def _outdir(args):
    out = Path(args.out or os.environ.get("TORUSFLOW_OUTPUT_DIR") or "torusflow-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "verbose", "config")}


def _vec(s, d):
    v = np.array([float(c) for c in s.split(",")])
    if v.shape != (d,):
        raise SpecError(f"vector {s!r} must have {d} entries")
    return v


# -- commands ------------------------------------------------------------------------------


class Context:
    def __init__(self, args, out, manifest):
        self.args, self.out, self.manifest = args, out, manifest

    def csv(self, name, header, rows):
        from .report.io import write_csv

        path = self.out / name
        write_csv(path, header, rows, manifest=self.manifest.ref)
        self.manifest.add(path)
        return path

    def json(self, name, obj):
        from .report.io import write_json

        path = self.out / name
        write_json(path, {"manifest": self.manifest.ref, **obj})
        self.manifest.add(path)
        return path

    def plot(self, csv_path, kind, **options):
        if self.args.no_plot:
            return None
        from .report.plots import emit_plot

        path = emit_plot(csv_path, kind, manifest=self.manifest.ref, **options)
        self.manifest.add(path)
        return path


def cmd_simulate(ctx):
    from .integrator import integrate

    a = ctx.args
    spec, _ = _field(a)
    for i, x in enumerate(_points(a, spec.dimension)):
        traj = integrate(spec, x, a.horizon, a.tol, dt=a.dt)
        path = ctx.out / f"orbit_{i:03d}.csv"
        traj.to_csv(path, manifest=ctx.manifest.ref)
        ctx.manifest.add(path)
        ctx.manifest.add(path.with_suffix(".meta.json"))
        ctx.plot(path, "orbit", title=f"orbit from {np.array2string(x, precision=3)}")
    print(f"wrote {i + 1} trajectories to {ctx.out}")
    return EXIT_OK


def _rotation_rows(spec, pts, a):
    from .rotation import herman_sample

    sample = herman_sample(spec, pts, a.horizon, a.tol, workers=a.workers)
    return sample


def cmd_rotation(ctx):
    from .rotation import rotation_header, rotation_row

    a = ctx.args
    spec, _ = _field(a)
    d = spec.dimension
    sample = _rotation_rows(spec, _points(a, d), a)
    rows = [rotation_row(x, est, None, d) for x, est in sample.points]
    rows += [rotation_row(x, None, None, d) for x, _ in sample.failures]
    path = ctx.csv("rotation.csv", rotation_header(d), rows)
    ctx.plot(path, "zeta-scatter", title="sampled rotation vectors")
    bad = sum(not est.converged for _, est in sample.points)
    print(f"{len(sample.points)} estimates, {len(sample.failures)} failures, {bad} flagged non-converged")
    return EXIT_OK if not sample.failures else EXIT_NUMERIC


def _known_bound(spec, p):
    if p is not None and p.known_deviation_bound is not None:
        return p.known_deviation_bound
    if spec.analytic.kind == "stepanoff" and spec.analytic.variant.rho is not None:
        from .cohomology import alpha_series, deviation_bound, solve_theta

        rho = spec.analytic.variant.rho
        try:
            sol = solve_theta(alpha_series(rho)[1], spec.analytic.variant.direction, rho.max_mode)
        except TorusFlowError:
            return None
        return deviation_bound(sol) + sol.truncation_slack
    return None


def cmd_deviation(ctx):
    from .rotation import deviation_sup, estimate_rotation, rotation_header, rotation_row

    a = ctx.args
    spec, p = _field(a)
    d = spec.dimension
    fixed = _vec(a.zeta, d) if a.zeta else None
    bound = _known_bound(spec, p)
    rows = []
    first = None
    for x in _points(a, d):
        z, est = fixed, None
        if z is None and p is not None and p.known_zeta is not None:
            z = p.zeta_at(x)
        if z is None:
            est = estimate_rotation(spec, x, max(a.horizon, 10.0), a.tol)
            z = est.zeta
        dev = deviation_sup(spec, x, z, a.horizon, a.tol, keep_series=first is None)
        if first is None:
            first = dev
        rows.append(rotation_row(x, est, dev, d))
    path = ctx.csv("deviation.csv", rotation_header(d), rows)
    series = ctx.csv("deviation_series.csv", ["t", "deviation", "running_sup"],
                     np.column_stack([first.times, first.deviations, first.running_sup()]))
    ctx.plot(series, "deviation-vs-t", bound=bound, title="deviation along the first orbit")
    worst = max(r[-2] for r in rows)
    msg = f"max sup_deviation {worst!r} over {len(rows)} points"
    if bound is not None:
        msg += f"; bound {bound!r}: {'ok' if worst <= bound else 'EXCEEDED'}"
    print(msg)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_herman(ctx):
    from .rotation import rotation_header, rotation_row

    a = ctx.args
    spec, _ = _field(a)
    d = spec.dimension
    sample = _rotation_rows(spec, _points(a, d), a)
    path = ctx.csv("herman_points.csv", rotation_header(d),
                   [rotation_row(x, est, None, d) for x, est in sample.points])
    ctx.csv("herman_hull.csv", [f"zeta{i + 1}" for i in range(d)], sample.hull)
    ctx.json("herman.json", {"affine_rank": sample.affine_rank, "hull_tolerance": sample.hull_tolerance,
                             "max_hull_distance": sample.max_hull_distance(),
                             "failures": [[list(x), e] for x, e in sample.failures],
                             "label": "inner approximation"})
    ctx.plot(path, "zeta-scatter", title="sampled Herman set (inner approximation)")
    print(f"hull vertices ({'segment' if sample.direction is not None else 'hull'}):")
    for v in sample.hull:
        print("  " + " ".join(repr(float(c)) for c in v))
    return EXIT_OK


def cmd_theta(ctx):
    from .cohomology import (alpha_series, deviation_bound, divisor_header, divisor_spectrum, small_divisor_sum,
                             solve_theta, verify_gradient_identity)

    a = ctx.args
    spec, _ = _field(a)
    v = spec.analytic.variant
    if spec.analytic.kind != "stepanoff" or v.rho is None:
        raise SpecError("theta needs a non-vanishing Stepanoff field given by rho")
    ua, alpha = alpha_series(v.rho)
    sol = solve_theta(alpha, v.direction, a.truncation)
    rng = np.random.default_rng(a.seed)
    rep = verify_gradient_identity(sol, v.rho, rng.uniform(0, 1, (64, spec.dimension)))
    path = ctx.csv("divisors.csv", divisor_header(spec.dimension), divisor_spectrum(sol))
    summary = {"underline_a": ua, "truncation": sol.truncation, "divisor_floor": sol.divisor_floor,
               "small_divisor_sum": small_divisor_sum(sol), "deviation_bound": deviation_bound(sol),
               "truncation_slack": sol.truncation_slack, "gradient_identity_residual": rep.residual,
               "reconstruction_residual": sol.reconstruction_residual()}
    ctx.json("theta.json", summary)
    if sol.theta_coeffs:
        ctx.plot(path, "divisor-spectrum", title="small-divisor spectrum")
    for k, val in summary.items():
        print(f"{k}: {val!r}")
    return EXIT_OK


def cmd_liouville(ctx):
    from .arithmetic import build_liouville_construction, iv_str, liouville_report, theta_at_tau_growth

    a = ctx.args
    constr = build_liouville_construction(count=a.terms)
    growth = theta_at_tau_growth(constr) if constr.stored else []
    report = liouville_report(constr, growth)
    ctx.json("liouville.json", {"terms": report, "certified": constr.certified(),
                                "positivity_margin": str(constr.positivity_margin),
                                "second_condition": str(constr.second_condition)})
    if a.report == "theta-growth":
        rows = [[g.m, iv_str(g.lower_bound), iv_str(g.partial_value), int(g.certified)] for g in growth]
        ctx.csv("theta_growth.csv", ["m", "lower_bound", "partial_value", "certified"], rows)
        print("m,lower_bound,partial_value,certified")
        for r in rows:
            print(",".join(str(c) for c in r))
        ok = all(g.certified for g in growth) and all(
            growth[i + 1].partial_value.a > growth[i].partial_value.b for i in range(len(growth) - 1))
    else:
        for r in report:
            print(json.dumps(r, default=str))
        ok = constr.certified()
    if not ok:
        raise CertificationError("Liouville construction inequalities not certified")
    return EXIT_OK


def cmd_classify(ctx):
    from fractions import Fraction

    from .arithmetic import continued_fraction, irrationality_exponent_estimate, named_enclosure

    a = ctx.args
    digits = max(60, 4 * a.depth)
    if a.value in ("golden", "sqrt2", "liouville"):
        value = named_enclosure(a.value, digits)
    else:
        try:
            value = Fraction(a.value)
        except ValueError:
            raise SpecError(f"--value must be golden, sqrt2, liouville or a decimal, got {a.value!r}") from None
    cf = continued_fraction(value, a.depth)
    est = irrationality_exponent_estimate(cf) if len(cf.convergents) >= 5 else float("nan")
    rows = [[k, q, p_, q_] for k, (q, (p_, q_)) in enumerate(zip(cf.quotients, cf.convergents))]
    ctx.csv("continued_fraction.csv", ["k", "a_k", "p_k", "q_k"], rows)
    ctx.json("classify.json", {"value": a.value, "depth": a.depth, "quotients": cf.quotients,
                               "truncated": cf.truncated, "exact": cf.exact, "exponent_estimate": est})
    print(f"quotients: {cf.quotients[:20]}{' ...' if len(cf.quotients) > 20 else ''}")
    print(f"exponent estimate: {est!r}" + (" (precision exhausted, truncated)" if cf.truncated else ""))
    return EXIT_OK


def cmd_reduce(ctx):
    from .construct import KozlovInput, kozlov_reduction, phi_from_equipotential, verify_coboundary

    a = ctx.args
    spec, p = _field(a)
    if p is None or not p.potentials:
        raise SpecError("reduce needs a preset carrying potentials (gradient_arctan, example_5_1)")
    d = spec.dimension
    pts = _points(argparse.Namespace(x=[], grid=a.grid), d)
    if len(p.potentials) == 1:
        u = p.potentials[0]
        zeta = p.zeta_at(pts[0])
        rows = []
        for x in pts:
            r = phi_from_equipotential(spec, u, zeta, x, a.tol)
            rows.append(list(x) + [r.tau] + list(r.phi) + [r.tau_shift_residual])
        path = ctx.csv("phi.csv", [f"x{i + 1}" for i in range(d)] + ["tau"] + [f"phi{i + 1}" for i in range(d)]
                       + ["tau_shift_residual"], rows)
        sup = max(float(np.linalg.norm(r[d + 1:2 * d + 1])) for r in rows)
        print(f"sampled sup|Phi| = {sup!r}; wrote {path}")
        return EXIT_OK
    res = kozlov_reduction(KozlovInput(p.potentials, spec), tol=a.tol)
    rng = np.random.default_rng(a.seed)
    rep = verify_coboundary(spec, res.phi, [(float(rng.uniform(0, 10)), x) for x in pts[:4]])
    summary = {"M": res.M, "xi": res.xi, "zeta": res.zeta, "unit_speed": res.unit_speed,
               "phi_bound": res.phi.bound, "expansion_bound": res.phi.expansion_bound(),
               "conjugacy_residual": res.conjugacy_residual,
               "coboundary_trajectory_residual": rep.trajectory_residual,
               "coboundary_grid_residual": rep.grid_residual}
    ctx.json("reduce.json", summary)
    from .report.io import _default

    for k, v in summary.items():
        print(f"{k}: {json.dumps(v, default=_default)}")
    return EXIT_OK


def cmd_verify(ctx):
    from .integrator import flow_map, verify_flow_invariants

    a = ctx.args
    spec, p = _field(a)
    d = spec.dimension
    rng = np.random.default_rng(a.seed)
    samples = [(rng.uniform(0, 1, d), float(rng.uniform(0, a.tmax)), float(rng.uniform(0, a.tmax)),
                rng.integers(-3, 4, d)) for _ in range(a.samples)]
    rep = verify_flow_invariants(spec, samples, a.tol)
    out = {"semigroup": rep.semigroup, "equivariance": rep.equivariance, "tolerance": a.tol,
           "passed": rep.passed()}
    if p is not None and p.exact_flow is not None:
        err = max(float(np.abs(p.exact_flow(t, x) - flow_map(spec, x, t, a.tol)).max()) for x, t, _, _ in samples)
        out["closed_form_error"] = err
        out["closed_form_passed"] = err <= 10 * a.tol
    ctx.json("verify.json", out)
    for k, v in out.items():
        print(f"{k}: {v!r}")
    if not out["passed"] or not out.get("closed_form_passed", True):
        raise CertificationError("flow invariant residual above 5 tol or closed form above 10 tol")
    return EXIT_OK


def cmd_preset(ctx):
    from .core import to_document
    from .presets import preset, summary_rows

    a = ctx.args
    if a.preset_command == "list":
        rows = summary_rows()
        ctx.csv("presets.csv", ["name", "dimension", "known_zeta", "known_bound", "notes"], rows)
        for r in rows:
            print(f"{r[0]:<20} d={r[1]}  zeta={r[2]:<40} bound={r[3]}")
        return EXIT_OK
    p = preset(a.name, **_params(a.param))
    doc = {"name": p.name, "dimension": p.field.dimension,
           "known_zeta": None if p.known_zeta is None else np.asarray(p.known_zeta),
           "known_deviation_bound": p.known_deviation_bound, "closed_form_flow": p.exact_flow is not None,
           "notes": p.notes, "field_spec": to_document(p.field.analytic)}
    ctx.json(f"preset_{p.name}.json", doc)
    from .report.io import _default

    print(json.dumps(doc, indent=2, default=_default))
    return EXIT_OK


def cmd_plot(ctx):
    from .report.plots import emit_plot

    a = ctx.args
    path = emit_plot(a.csv, a.kind, a.output, bound=a.bound) if a.kind == "deviation-vs-t" else \
        emit_plot(a.csv, a.kind, a.output)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "rotation": cmd_rotation, "deviation": cmd_deviation,
            "herman": cmd_herman, "theta": cmd_theta, "liouville": cmd_liouville, "classify": cmd_classify,
            "reduce": cmd_reduce, "verify": cmd_verify, "preset": cmd_preset, "plot": cmd_plot}


def run(args) -> int:
    """Dispatch a parsed namespace; returns the exit status."""
    from .report.manifest import Manifest

    try:
        args = _apply_config(args)
        _validate(args)
        if args.command == "plot":
            return cmd_plot(Context(args, None, None))
        out = _outdir(args)
        manifest = Manifest(args.command, _config_echo(args), seed=args.seed)
        status = EXIT_OK
        try:
            status = COMMANDS[args.command](Context(args, out, manifest))
            return status
        except CertificationError:
            status = EXIT_CERT
            raise
        except NumericalError:
            status = EXIT_NUMERIC
            raise
        except TorusFlowError:
            status = EXIT_CONFIG
            raise
        finally:
            manifest.finish(out, status)
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpecError, TorusFlowError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
