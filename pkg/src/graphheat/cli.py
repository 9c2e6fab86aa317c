"""Batch front end: graph and operator specs in, CSV and JSON artifacts out.

Every subcommand writes ``<name>.csv`` plus a ``<name>.json`` sidecar holding
the resolved configuration.  Numbers in CSV use 17 significant digits so a
fixed recipe and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import acceptance, control_op, filtering, moment, simulate, spectral, steer
from .control_op import ControlOperator
from .errors import GraphHeatError, GraphSpecError, ValidationError
from .metric_graph import load_graph

EXIT_OK, EXIT_FAILED, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_sidecar(path: Path, payload):
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def load_operator(path):
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise GraphSpecError(f"{path}: cannot parse: {exc}") from None
    return ControlOperator.from_spec(data)


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return cfg


def _random_unit(n, seed):
    z = np.random.default_rng(seed).standard_normal(n)
    return z / np.linalg.norm(z)


def cmd_spectrum(args, out: Path):
    g = load_graph(args.graph)
    spec = spectral.compute_spectrum(g, args.count)
    rows = [(k, lam, w, m) for k, (lam, w, m) in enumerate(zip(spec.lambdas, spec.omegas, spec.multiplicity), 1)]
    write_csv(out / "spectrum.csv", ["k", "lambda", "sqrt_lambda", "multiplicity"], rows)
    result = {"kind": g.kind.value, "count": len(spec)}
    if args.oracle_mesh:
        orc = spectral.discretize_oracle(g, args.oracle_mesh, args.count)
        err = np.abs(orc.lambdas - spec.lambdas) / np.maximum(spec.lambdas, 1.0)
        write_csv(out / "spectrum_oracle.csv", ["k", "lambda", "oracle", "rel_err"],
                  [(k, a, b, e) for k, (a, b, e) in enumerate(zip(spec.lambdas, orc.lambdas, err), 1)])
        result["oracle_max_rel_err"] = float(err.max())
    return "spectrum", result


def cmd_gaps(args, out: Path):
    g = load_graph(args.graph)
    lam = spectral.compute_spectrum(g, args.count).lambdas
    rep = spectral.gap_report(lam, args.block)
    a = spectral.running_gap(lam)
    s = np.sqrt(np.maximum(lam, 0))
    rows = [(k, lam[k - 1], (s[k] - s[k - 1]) if k < lam.size else math.nan,
             a[k - 1] if k < lam.size else math.nan, lam[k - 1] / k**2) for k in range(1, lam.size + 1)]
    write_csv(out / "gaps.csv", ["k", "lambda", "root_gap", "running_gap", "weyl_ratio"], rows)
    result = {
        "block_size": rep.block_size,
        "block_gap": rep.block_gap,
        "weak_gap_C": rep.weak_gap_C,
        "weak_gap_p": rep.weak_gap_p,
        "weak_gap_ls_p": rep.weak_gap_ls_p,
        "zero_gap_indices": rep.zero_gap_indices,
        "weyl": [rep.weyl_C1, rep.weyl_C2],
        "counting_max": max((c[2] for c in rep.counting), default=0),
    }
    return "gaps", result


def cmd_spreading(args, out: Path):
    g = load_graph(args.graph)
    B = load_operator(args.operator)
    spec = spectral.compute_spectrum(g, args.modes)
    rep = control_op.verify_spreading(B, spec, args.j, args.modes)
    rows = [(k, lam, c, lam**rep.q * abs(c) if lam > 0 else math.nan)
            for k, (lam, c) in enumerate(zip(spec.lambdas[: args.modes], rep.couplings), 1)]
    write_csv(out / "spreading.csv", ["k", "lambda", "coupling", "scaled"], rows)
    return "spreading", {"verdict": rep.verdict, "q": rep.q, "b": rep.b,
                         "first_coupling": rep.first_coupling, "failures": rep.failures}


def cmd_synthesize(args, out: Path):
    g = load_graph(args.graph)
    B = load_operator(args.operator)
    spec = spectral.compute_spectrum(g, args.modes)
    lam = spec.lambdas[: args.modes]
    b = control_op.couplings(B, spec, args.j, args.modes)
    z0 = _random_unit(args.modes, args.seed)
    shifted = lam - lam[args.j - 1]
    d = moment.null_control_targets(z0, b)
    u = moment.solve_moment(moment.MomentProblem(shifted, args.horizon, tuple(d), provenance="null-control"),
                            args.precision)
    zT = simulate.evolve_linearized(z0, u, shifted, b, args.horizon)
    t, vals = u.samples(args.samples)
    write_csv(out / "control.csv", ["t", "u"], zip(t, vals))
    return "synthesize", {"z0": z0, "norm": u.norm, "moment_residual": u.moment_residual,
                          "precision": u.precision, "final_norm": float(np.linalg.norm(zT))}


def cmd_simulate(args, out: Path):
    g = load_graph(args.graph)
    B = load_operator(args.operator)
    spec = spectral.compute_spectrum(g, args.modes)
    M = control_op.coupling_matrix(B, spec, args.modes)
    c0 = np.zeros(args.modes)
    c0[args.j - 1] = 1.0
    if args.deviation:
        c0[args.j % args.modes] += args.deviation
    amp, freq = args.amplitude, args.frequency
    u = (lambda t: amp * np.cos(freq * t)) if amp else None
    tr = simulate.evolve_bilinear(c0, u, spec.lambdas, M, T=args.horizon, dt=args.dt,
                                  store_every=args.store_every, design_modes=args.design)
    header = ["t", "norm", "spillover"] + [f"c{k}" for k in range(1, args.modes + 1)]
    spill = tr.spillover()
    write_csv(out / "trajectory.csv", header,
              ([t, n, s, *c] for t, n, s, c in zip(tr.times, tr.norms, spill, tr.coeffs)))
    return "simulate", {"dt": tr.dt, "steps": tr.meta["steps"], "final_norm": float(tr.norms[-1])}


def cmd_steer(args, out: Path):
    g = load_graph(args.graph)
    B = load_operator(args.operator)
    setup = steer.SteeringSetup.from_graph(g, B, args.design, precision=args.precision)
    y0 = setup.basis(args.j) + args.deviation * setup.basis(args.j + 1)
    if args.semiglobal:
        run = steer.semiglobal_steer(y0, args.horizon, setup, max_iter=args.max_iter, tol=args.tol,
                                     method=args.method)
    else:
        run = steer.steer_to_eigensolution(y0, args.j, args.horizon, setup, max_iter=args.max_iter,
                                           tol=args.tol, method=args.method)
    write_csv(out / "steer.csv", ["iteration", "residual", "correction_norm"], run.log_rows())
    if run.control is not None and not run.control.is_zero:
        t, vals = run.control.samples(args.samples)
        write_csv(out / "steer_control.csv", ["t", "u"], zip(t, vals))
    return "steer", {"converged": run.converged, "iterations": run.iterations, "residual": run.residual,
                     "wait_time": run.wait_time, "spillover": run.spillover, "mode": run.mode}


def cmd_filter(args, out: Path):
    H = filtering.build_invariant_subspace(args.tail, args.modes)
    B = load_operator(args.operator) if args.operator else filtering.arm_square_operator()
    rep = filtering.check_B_invariance(B, H, seed=args.seed)
    result = {"invariance": rep.verdict, "worst_residual": rep.worst_residual}
    if rep.passed:
        red = filtering.reduce_to_interval(H, B)
        rspec = spectral.compute_spectrum(red.graph, args.modes)
        b = control_op.couplings(red.operator, rspec, 1, args.modes)
        write_csv(out / "filter.csv", ["k", "lambda", "coupling"],
                  [(k, lam, c) for k, (lam, c) in enumerate(zip(rspec.lambdas, b), 1)])
        result["reduced"] = red.to_spec()
    else:
        write_csv(out / "filter.csv", ["k", "lambda", "coupling"], [])
    return "filter", result


def cmd_acceptance(args, out: Path):
    wanted = {s.upper() for s in args.only} if args.only else None
    results = []
    setup = None
    for fn in acceptance.ALL:
        name = fn.__name__.split("_")[0].upper()
        if wanted and name not in wanted:
            continue
        if fn in (acceptance.a6_local_steering, acceptance.a8_semiglobal):
            setup = setup or acceptance.star_setup()
            crit = fn(setup)
        else:
            crit = fn()
        print(crit.line(), flush=True)
        results.append(crit)
    write_csv(out / "acceptance.csv", ["criterion", "passed"], [(c.name, c.passed) for c in results])
    n_pass = sum(c.passed for c in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    payload = {c.name: {"passed": c.passed, "detail": c.detail, "seconds": c.seconds, "metrics": c.metrics}
               for c in results}
    return "acceptance", {"criteria": payload, "all_passed": n_pass == len(results)}


def build_parser():
    p = argparse.ArgumentParser(prog="graphheat", description=__doc__.splitlines()[0])
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("auto", "standard", "extended"), default="auto")
    sub = p.add_subparsers(dest="command", required=True)

    def graph_args(sp, operator=False):
        sp.add_argument("--graph", required=True, help="YAML/JSON graph spec")
        if operator:
            sp.add_argument("--operator", required=True, help="YAML/JSON operator spec")

    sp = sub.add_parser("spectrum", help="eigenvalues of a graph")
    graph_args(sp)
    sp.add_argument("--count", type=int, default=20)
    sp.add_argument("--oracle-mesh", type=float, default=None, help="also compare with finite differences")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("gaps", help="gap and Weyl diagnostics")
    graph_args(sp)
    sp.add_argument("--count", type=int, default=60)
    sp.add_argument("--block", type=int, default=1)
    sp.set_defaults(func=cmd_gaps)

    sp = sub.add_parser("spreading", help="coupling decay check")
    graph_args(sp, True)
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--modes", type=int, default=30)
    sp.set_defaults(func=cmd_spreading)

    sp = sub.add_parser("synthesize", help="null control for a random unit deviation")
    graph_args(sp, True)
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--modes", type=int, default=10)
    sp.add_argument("--horizon", type=float, default=0.5)
    sp.add_argument("--samples", type=int, default=1000)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="Galerkin evolution under u(t) = A cos(w t)")
    graph_args(sp, True)
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--modes", type=int, default=20)
    sp.add_argument("--design", type=int, default=None)
    sp.add_argument("--deviation", type=float, default=0.0)
    sp.add_argument("--horizon", type=float, default=1.0)
    sp.add_argument("--amplitude", type=float, default=0.0)
    sp.add_argument("--frequency", type=float, default=0.0)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--store-every", type=int, default=100)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("steer", help="steer to an eigensolution")
    graph_args(sp, True)
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--design", type=int, default=10)
    sp.add_argument("--deviation", type=float, default=0.01)
    sp.add_argument("--horizon", type=float, default=1.0)
    sp.add_argument("--max-iter", type=int, default=8)
    sp.add_argument("--tol", type=float, default=steer.DEFAULT_TOL)
    sp.add_argument("--method", choices=("newton", "exact"), default="newton")
    sp.add_argument("--semiglobal", action="store_true", help="wait freely before steering")
    sp.add_argument("--samples", type=int, default=1000)
    sp.set_defaults(func=cmd_steer)

    sp = sub.add_parser("filter", help="invariant subspace of the four-edge star")
    sp.add_argument("--tail", type=float, default=math.sqrt(2.0))
    sp.add_argument("--modes", type=int, default=8)
    sp.add_argument("--operator", default=None, help="defaults to x^2 on the first two edges")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("acceptance", help="run acceptance criteria A1-A10")
    sp.add_argument("--only", nargs="*", default=None, help="subset such as A1 A5")
    sp.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        for attr in ("graph", "operator"):
            path = getattr(args, attr, None)
            if path is not None and not Path(path).is_file():
                raise ValidationError(f"{attr} file not found: {path}")
        name, result = args.func(args, out)
    except GraphHeatError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    write_sidecar(out / f"{name}.json", {"command": args.command, "config": _config(args), "result": result})
    if name == "acceptance" and not result["all_passed"]:
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
