"""Acceptance scenarios A1-A10, shared by the CLI and the test-suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import control_op, filtering, moment, simulate, spectral, steer
from .control_op import ControlOperator
from .metric_graph import interval_graph, star_graph, tadpole_graph

ROOT2, ROOT3 = math.sqrt(2.0), math.sqrt(3.0)


@dataclass
class Criterion:
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"{self.name} {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f}s) {self.detail}"


def _timed(name):
    def deco(fn):
        def wrapper(*args, **kw):
            t0 = time.perf_counter()
            crit = fn(*args, **kw)
            crit.seconds = time.perf_counter() - t0
            crit.name = name
            return crit

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper

    return deco


def uneven_star():
    return star_graph([1.0, ROOT2, ROOT3])


def a2_tadpole():
    return tadpole_graph(2.0, ROOT3)


def star_operator():
    return ControlOperator.on_edge("e1", "cosine")


def tadpole_operator():
    return ControlOperator.on_edge("e1", "monomial", power=1)


def merged_family(count):
    """``{j^2 pi^2 / 4}``: odd j twice, even j once (equal-arm Neumann star with three edges)."""
    out, j = [], 0
    while len(out) < count:
        mult = 1 if j % 2 == 0 else 2
        out += [(j * math.pi / 2) ** 2] * mult
        j += 1
    flags = []
    j = 0
    while len(flags) < count:
        mult = 1 if j % 2 == 0 else 2
        flags += [mult] * mult
        j += 1
    return np.array(out[:count]), tuple(flags[:count])


@_timed("A1")
def a1_equal_star():
    spec = spectral.compute_spectrum(star_graph([1.0, 1.0, 1.0]), 20)
    expected, flags = merged_family(20)
    err = np.abs(spec.lambdas - expected) / np.maximum(expected, 1.0)
    ok = err.max() < 1e-10 and tuple(spec.multiplicity) == flags
    return Criterion("A1", bool(ok), f"max rel err {err.max():.2e}, flags match {tuple(spec.multiplicity) == flags}",
                     {"max_rel_err": float(err.max())})


@_timed("A2")
def a2_oracle():
    out = {}
    ok = True
    for label, g in (("star", uneven_star()), ("tadpole", a2_tadpole())):
        lam = spectral.compute_spectrum(g, 10).lambdas
        errs = []
        for h in (1e-3, 5e-4):
            orc = spectral.discretize_oracle(g, h, 10).lambdas
            errs.append(float(np.max(np.abs(orc - lam) / np.maximum(lam, 1.0))))
        ratio = errs[0] / errs[1]
        out[label] = {"err_h": errs[0], "err_h2": errs[1], "ratio": ratio}
        ok &= errs[0] < 1e-3 and 3.0 <= ratio <= 5.0
    detail = ", ".join(f"{k}: {v['err_h']:.2e} -> {v['err_h2']:.2e} (x{v['ratio']:.2f})" for k, v in out.items())
    return Criterion("A2", bool(ok), detail, out)


@_timed("A3")
def a3_gaps():
    out = {}
    ok = True
    for label, g in (("star", uneven_star()), ("tadpole", a2_tadpole())):
        spec = spectral.compute_spectrum(g, 60)
        lam = spec.lambdas
        gammas = {M: spectral.block_gap(lam[:41], M) for M in range(1, 5)}
        rep = spectral.gap_report(lam[:41], 1)
        ratios = lam[1:40] / np.arange(2, 41) ** 2
        a = spectral.running_gap(lam)
        s1 = math.sqrt(lam[0])
        counts = []
        for k in range(1, 31):
            rho = 0.999 * a[k - 1] * (a[k - 1] + 2 * s1)
            counts.append(spectral.counting_function(lam, k, rho))
        gamma_ok = any(v > 0 for v in gammas.values())
        ok &= gamma_ok and ratios.min() > 0 and rep.weak_gap_p <= 1.5 and not any(counts)
        out[label] = {
            "gamma": gammas,
            "weyl": (float(ratios.min()), float(ratios.max())),
            "weak_p": rep.weak_gap_p,
            "weak_C": rep.weak_gap_C,
            "counting_max": int(max(counts)),
        }
    detail = "; ".join(
        f"{k}: gamma1={v['gamma'][1]:.3f} weyl=[{v['weyl'][0]:.3f},{v['weyl'][1]:.3f}] p={v['weak_p']:.2f} N_k=0:{v['counting_max'] == 0}"
        for k, v in out.items()
    )
    return Criterion("A3", bool(ok), detail, out)


@_timed("A4")
def a4_spreading():
    out = {}
    g = uneven_star()
    spec = spectral.compute_spectrum(g, 30)
    rep = control_op.verify_spreading(star_operator(), spec, 1, 30)
    closed = 2 * 1.0 / (math.pi * g.total_length)
    first_err = abs(rep.first_coupling - closed)
    out["star"] = {"q": rep.q, "b": rep.b, "first_err": first_err, "verdict": rep.verdict}
    ok = rep.passed and rep.q <= 2.5 and first_err < 1e-8
    tspec = spectral.compute_spectrum(a2_tadpole(), 30)
    trep = control_op.verify_spreading(tadpole_operator(), tspec, 1, 30)
    out["tadpole"] = {"q": trep.q, "b": trep.b, "verdict": trep.verdict}
    ok &= trep.passed and trep.q <= 2.0
    detail = (f"star {rep.verdict} q={rep.q:.2f} first-coupling err {first_err:.1e}; "
              f"tadpole {trep.verdict} q={trep.q:.2f}")
    return Criterion("A4", bool(ok), detail, out)


def null_control_run(lambdas, b, T, seeds, precision="auto"):
    """Linearized null control for random unit ``z0``; returns per-seed metrics."""
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        z0 = rng.standard_normal(lambdas.size)
        z0 /= np.linalg.norm(z0)
        d = moment.null_control_targets(z0, b)
        u = moment.solve_moment(moment.MomentProblem(lambdas, T, tuple(d), provenance="null-control"), precision)
        zT = simulate.evolve_linearized(z0, u, lambdas, b, T)
        rows.append({"seed": seed, "zT": float(np.linalg.norm(zT)), "moment_residual": u.moment_residual,
                     "norm": u.norm, "precision": u.precision})
    fam = moment.finite_biorthogonal(lambdas, T, precision)
    return rows, fam


@_timed("A5")
def a5_null_control():
    spec = spectral.compute_spectrum(uneven_star(), 10)
    lam = spec.lambdas[:10]
    b = control_op.couplings(star_operator(), spec, 1, 10)
    rows, fam = null_control_run(lam - lam[0], b, 0.5, range(5))
    worst_z = max(r["zT"] for r in rows)
    worst_m = max(r["moment_residual"] for r in rows)
    ok = worst_z < 1e-6 and worst_m < 1e-8 and fam.residual < 1e-8
    return Criterion("A5", bool(ok),
                     f"max |z(T)| {worst_z:.1e}, moment residual {worst_m:.1e}, biorthogonality {fam.residual:.1e} ({fam.precision})",
                     {"runs": rows, "biorthogonality": fam.residual})


def star_setup(n_design=10):
    return steer.SteeringSetup.from_graph(uneven_star(), star_operator(), n_design)


@_timed("A6")
def a6_local_steering(setup=None):
    setup = setup or star_setup()
    out = {}
    ok = True
    for eps in (0.01, 0.02):
        psi0 = setup.basis(1) + eps * setup.basis(2)
        try:
            run = steer.steer_to_eigensolution(psi0, 1, 1.0, setup, max_iter=8)
            out[eps] = {"converged": run.converged, "iterations": run.iterations, "residuals": run.residuals}
            ok &= run.converged
        except Exception as exc:  # noqa: BLE001 - reported as a failed scenario
            out[eps] = {"converged": False, "error": f"{type(exc).__name__}: {exc}"}
            ok = False
    detail = "; ".join(
        f"eps={k}: " + (f"{len(v['residuals']) - 1} it, residual {v['residuals'][-1]:.2e}" if "residuals" in v else v["error"])
        for k, v in out.items()
    )
    return Criterion("A6", bool(ok), detail, out)


@_timed("A7")
def a7_cost():
    spec = spectral.compute_spectrum(uneven_star(), 8)
    b = control_op.couplings(star_operator(), spec, 1, 8)
    horizons = [0.1, 0.2, 0.4, 0.7, 1.0]
    costs = [moment.control_cost(spec.lambdas, b, 1, T, 8) for T in horizons]
    nu, c, r2 = moment.fit_cost_blowup(horizons, costs)
    ok = r2 > 0.9 and nu > 0
    return Criterion("A7", bool(ok), f"nu={nu:.3f} const={c:.2f} R2={r2:.4f}",
                     {"horizons": horizons, "costs": costs, "nu": nu, "const": c, "r2": r2})


@_timed("A8")
def a8_semiglobal(setup=None):
    setup = setup or star_setup()
    y0 = setup.basis(1) + 1.0 * setup.basis(2)
    predicted = math.log(1.0 / steer.DEFAULT_BASIN) / (setup.lambdas[1] - setup.lambdas[0])
    t_wait = steer.wait_time(y0, setup.lambdas)
    wait_ok = abs(t_wait - predicted) <= 0.2 * predicted
    try:
        run = steer.semiglobal_steer(y0, 1.0, setup)
        steered, detail = run.converged, f"{run.iterations} it, residual {run.residual:.2e}"
    except Exception as exc:  # noqa: BLE001
        steered, detail = False, f"{type(exc).__name__}: {exc}"
    ok = wait_ok and steered
    return Criterion("A8", bool(ok), f"wait {t_wait:.4f} vs {predicted:.4f}; local stage: {detail}",
                     {"wait": t_wait, "predicted": predicted, "steered": steered})


@_timed("A9")
def a9_filtering():
    H = filtering.build_invariant_subspace(ROOT2, 8)
    B = filtering.arm_square_operator()
    inv = filtering.check_B_invariance(B, H)
    model = filtering.full_star_model(H, B, 30)
    c0 = model.embed([1.0, 0.3, -0.2, 0.1])
    traj = simulate.evolve_bilinear(c0, lambda t: 20 * np.cos(7 * t), model.lambdas, model.coupling_matrix,
                                    T=0.5, store_every=25)
    leak = float(model.outside_energy(traj.coeffs).max())
    red = filtering.reduce_to_interval(H, B)
    rspec = spectral.compute_spectrum(red.graph, 8)
    lam = rspec.lambdas[:8]
    b = control_op.couplings(red.operator, rspec, 1, 8)
    rows, fam = null_control_run(lam - lam[0], b, 0.5, range(5))
    worst_z = max(r["zT"] for r in rows)
    worst_m = max(r["moment_residual"] for r in rows)
    ok = inv.passed and leak < 1e-8 and worst_z < 1e-6 and worst_m < 1e-8 and fam.residual < 1e-8
    return Criterion("A9", bool(ok),
                     f"invariance {inv.verdict}, leak {leak:.1e}, reduced |z(T)| {worst_z:.1e}, residual {worst_m:.1e}",
                     {"invariance": inv.worst_residual, "leak": leak, "reduced_zT": worst_z})


@_timed("A10")
def a10_norm_shape():
    lam = (np.arange(1, 11) * math.pi) ** 2
    fam = moment.finite_biorthogonal(lam, 1.0)
    gaps = spectral.running_gap(np.append(lam, (11 * math.pi) ** 2))
    shape = moment.norm_shape(fam, 1, spectral.block_gap(lam, 1), gaps)
    curvature = float(np.polyfit(np.sqrt(lam), shape.excess, 2)[0])
    ok = shape.bounded and curvature <= 0.0
    return Criterion("A10", bool(ok),
                     f"envelope {shape.offset:.2f} + {shape.slope:.3f} sqrt(lambda), curvature {curvature:.3f}",
                     {"c0": shape.offset, "c1": shape.slope, "curvature": curvature})


ALL = (a1_equal_star, a2_oracle, a3_gaps, a4_spreading, a5_null_control, a6_local_steering,
       a7_cost, a8_semiglobal, a9_filtering, a10_norm_shape)


def run_all(echo=print):
    results = []
    setup = None
    for fn in ALL:
        if fn in (a6_local_steering, a8_semiglobal):
            setup = setup or star_setup()
            crit = fn(setup)
        else:
            crit = fn()
        results.append(crit)
        if echo:
            echo(crit.line())
    return results
