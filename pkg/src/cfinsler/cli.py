"""Command-line entry point.

Usage::

    cfinsler --config run.json [--output report.json] [--csv DIR] [--seed N] [--threads N]

Exit status: 0 when every check passes, 1 on a failed check, 2 on a
configuration error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, load_config
from .curvature import conformal_curvature_check, contraction_residual, curvature_at
from .dirichlet import ConvergenceError
from .expressions import ExpressionError, as_expression
from .fiber import (ProjectivityError, TestForm, build_fiber_rule, divergence_residual, fiber_moments,
                    fubini_study_volume, grid_for, set_workers)
from .functionals import (ConstraintError, PreconditionError, _grid_values, base_fields, first_variation,
                          make_direction, second_variation, stability, total_curvatures, variation_grid)
from .geometry import PseudoconvexityError, geometry_at
from .grid import TorusGrid
from .jets import JetOrderError, SingularityError
from .kahler import conformal_kahler_test, kahler_check
from .metrics import MetricError, metric_periods, sample_points
from .report import FieldDump, Report, check_le, check_true, provenance
from .validation import validate_metric
from .wirtinger import DomainError as JetDomainError
from .yamabe import (DomainError, GeometryError, StepFailure, assemble_base_geometry, bubble_test,
                     conformal_invariants, constant_rho_verify, sobolev_constant, sobolev_constant_closed)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

NUMERIC_ERRORS = (PseudoconvexityError, ConvergenceError, StepFailure, GeometryError, DomainError,
                  JetDomainError, ProjectivityError, SingularityError, JetOrderError, FloatingPointError,
                  np.linalg.LinAlgError)
VERDICT_ERRORS = (PreconditionError, ConstraintError)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1.0)


def _option(cfg, name, default=None, kind=None):
    value = cfg.options.get(name, default)
    if kind is not None and value is not None and not isinstance(value, kind):
        raise ConfigError(f"must be of type {kind.__name__ if isinstance(kind, type) else kind}",
                          f"/options/{name}")
    return value


def _rule(cfg, metric):
    return build_fiber_rule(metric.n, cfg.radial_order, cfg.angular_order, cfg.normalization)


def _expression(cfg, name, n, required=False, default=None):
    src = cfg.options.get(name, default)
    if src is None:
        if required:
            raise ConfigError("required option is missing", f"/options/{name}")
        return None
    try:
        expr = as_expression(src, n)
    except ExpressionError as exc:
        raise ConfigError(str(exc), f"/options/{name}") from None
    if getattr(expr, "depends_on_fiber", lambda: False)():
        raise ConfigError("must depend on the base point only", f"/options/{name}")
    return expr


def _samples(cfg, metric, default=16):
    count = _option(cfg, "samples", default, int)
    if count < 1:
        raise ConfigError("must be >= 1", "/options/samples")
    return sample_points(metric.n, count, cfg.seed, metric_periods(metric))


def _which(cfg):
    which = _option(cfg, "which", ["K", "R"])
    which = [which] if isinstance(which, str) else which
    if not which or any(w not in ("K", "R") for w in which):
        raise ConfigError("entries must be 'K' or 'R'", "/options/which")
    return which


def _complex_rows(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "re": a.real.ravel(), "im": a.imag.ravel()}


# ----------------------------------------------------------------------------
# commands


def cmd_validate(cfg, metric, rep):
    count = _option(cfg, "samples", 256, int)
    if count < 1:
        raise ConfigError("must be >= 1", "/options/samples")
    res = validate_metric(metric, count, cfg.seed, cfg.tol("homogeneity"))
    rep.payload.update(res.as_dict())
    rep.checks += [check_true("levi_positive_definite", res.pseudoconvex),
                   check_true("G_positive", res.min_G > 0),
                   check_le("homogeneity_residual", res.max_homogeneity_residual, cfg.tol("homogeneity")),
                   check_le("euler_residual", res.max_euler_residual, cfg.tol("homogeneity"))]


def cmd_geometry(cfg, metric, rep):
    z, v = _samples(cfg, metric, 8)
    g = geometry_at(metric, z, v, cfg.jet_order)
    n = metric.n
    eye = np.eye(n)
    tol = cfg.tol("geometry")
    rep.payload["samples"] = {"z": _complex_rows(z), "v": _complex_rows(v)}
    rep.payload["G"] = g.G
    rep.payload["levi"] = _complex_rows(g.levi)
    rep.payload["levi_det"] = g.levi_det
    rep.checks.append(check_le("levi_inverse", float(np.max(np.abs(g.levi @ g.levi_inv - eye))), tol))
    euler = np.einsum("pij,pi,pj->p", g.levi, v, np.conj(v)).real
    rep.checks.append(check_le("euler_identity", float(np.max(np.abs(euler - g.G) / g.G)), tol))
    if g.N is not None:
        for name in ("N", "gamma", "C", "theta", "vartheta"):
            rep.payload[name] = _complex_rows(getattr(g, name))
        rep.checks.append(check_le("torsion_antisymmetry",
                                   float(np.max(np.abs(g.theta + np.swapaxes(g.theta, -1, -2)))), tol))
        trace = np.einsum("pmkm->pk", g.theta)
        rep.checks.append(check_le("vartheta_trace", float(np.max(np.abs(trace - g.vartheta))), tol))
        vg = np.einsum("pijk,pj->pik", g.gamma, v)
        rep.checks.append(check_le("v_gamma_equals_N", float(np.max(np.abs(vg - g.N))), tol))
    if g.vartheta_zbar is not None:
        rep.payload["vartheta_zbar"] = _complex_rows(g.vartheta_zbar)


def cmd_curvature(cfg, metric, rep):
    z, v = _samples(cfg, metric, 8)
    with_hh = cfg.jet_order >= 4
    c = curvature_at(metric, z, v, with_hh)
    rep.payload["holomorphic_curvature"] = c.K_hol
    rep.payload["ricci"] = c.ric
    rep.payload["kobayashi"] = _complex_rows(c.K_matrix)
    tol = cfg.tol("geometry")
    herm = float(np.max(np.abs(c.K_matrix - np.conj(np.swapaxes(c.K_matrix, -1, -2)))))
    rep.checks.append(check_le("kobayashi_hermitian", herm, tol))
    if with_hh:
        rep.checks.append(check_le("hh_contraction", contraction_residual(metric, z, v), tol))
    f = _expression(cfg, "f", metric.n)
    if f is not None:
        res = conformal_curvature_check(metric, f, z, v)
        rep.payload["conformal_residuals"] = res
        for name, val in res.items():
            if name == "torsion_tracefree":
                rep.checks.append(check_le(f"conformal_{name}", val, cfg.tol("geometry")))
            else:
                rep.checks.append(check_le(f"conformal_{name}", val, cfg.tol("conformal")))


def cmd_fiber(cfg, metric, rep):
    rule = _rule(cfg, metric)
    z, _ = _samples(cfg, metric, 16)
    m = fiber_moments(metric, z, rule, with_torsion=False)
    vol = np.asarray(m.vol)
    spread = float((vol.max() - vol.min()) / vol.mean())
    exact = fubini_study_volume(metric.n)
    rep.payload.update({"fiber_volumes": vol, "relative_spread": spread, "fubini_study_volume": exact,
                        "nodes": rule.size})
    rep.checks.append(check_le("fiber_volume_spread", spread, cfg.tol("fiber_spread")))
    rep.checks.append(check_le("fiber_volume_closed_form", _rel(float(vol.mean()), exact), cfg.tol("fiber_spread")))
    alpha_spec = _option(cfg, "alpha", None, dict)
    extra = []
    alpha = None
    if alpha_spec is not None:
        try:
            alpha = TestForm(metric.n, alpha_spec.get("coefficients"), alpha_spec.get("potential"),
                             alpha_spec.get("nu_vartheta"))
        except ExpressionError as exc:
            raise ConfigError(str(exc), "/options/alpha") from None
        extra = alpha.expressions()
    grid = grid_for(metric, cfg.resolution, extra)
    if _option(cfg, "fields", True, bool):
        bf = base_fields(metric, grid, rule, with_torsion=False)
        rep.fields += [FieldDump("mu_M", bf.mu, grid.periods), FieldDump("kappa", bf.moments.kappa, grid.periods),
                       FieldDump("rho", bf.moments.rho, grid.periods)]
        rep.payload["volume_M"] = bf.volume
    if alpha is not None:
        r1, r2, scale = divergence_residual(metric, grid, rule, alpha)
        rep.payload["divergence"] = {"residual_trace": r1, "residual_radial": r2, **scale}
        rep.checks.append(check_le("divergence_trace", r1, cfg.tol("stokes")))
        rep.checks.append(check_le("divergence_radial", r2, cfg.tol("stokes")))


def _expect(cfg, rep, actual, choices):
    expect = _option(cfg, "expect", None, str)
    if expect is not None:
        if expect not in choices:
            raise ConfigError(f"must be one of {', '.join(choices)}", "/options/expect")
        rep.checks.append(check_true(f"expected_{expect}", actual == expect))


def cmd_kahler(cfg, metric, rep):
    z, v = _samples(cfg, metric, 64)
    verdict = kahler_check(metric, z, v, cfg.tol("kahler"))
    rep.payload.update(verdict.as_dict())
    status = "kahler" if verdict.kahler else ("weakly_kahler" if verdict.weakly_kahler else "not_kahler")
    rep.payload["status"] = status
    _expect(cfg, rep, status, ("kahler", "weakly_kahler", "not_kahler"))


def cmd_conformal_test(cfg, metric, rep):
    expected = _expression(cfg, "expected_f", metric.n)
    grid = grid_for(metric, cfg.resolution, [expected] if expected is not None else [])
    count = _option(cfg, "samples", 64, int)
    res = conformal_kahler_test(metric, grid, cfg.tol("kahler"), cfg.tol("closedness"), count, cfg.seed)
    rep.payload.update(res.as_dict())
    if res.factor is not None:
        rep.fields.append(FieldDump("f", res.factor.f, grid.periods))
    _expect(cfg, rep, res.status, ("kahler", "globally_conformal_kahler", "locally_conformal_kahler",
                                   "not_conformal_kahler"))
    if expected is not None:
        if res.factor is None or not res.conformally_kahler:
            rep.checks.append(check_true("factor_recovered", False))
        else:
            vals, _ = _grid_values(expected, grid, metric.n)
            vals = vals - np.mean(vals)
            err = float(np.max(np.abs(res.factor.f - vals)))
            rep.payload["round_trip_error"] = err
            rep.checks.append(check_le("round_trip_error", err, cfg.tol("round_trip")))


def cmd_functionals(cfg, metric, rep):
    grid = grid_for(metric, cfg.resolution)
    r = total_curvatures(metric, grid, _rule(cfg, metric), _option(cfg, "lambda", True, bool), 16, cfg.seed)
    rep.payload.update(r.as_dict())
    rep.fields += [FieldDump(k, v, grid.periods) for k, v in r.fields().items()]
    rep.checks.append(check_le("K_equals_K_theta", _rel(r.total_K_theta, r.total_K), cfg.tol("stokes")))
    rep.checks.append(check_le("R_equals_R_theta", _rel(r.total_R_theta, r.total_R), cfg.tol("stokes")))


def cmd_variation_check(cfg, metric, rep):
    nu = _expression(cfg, "nu", metric.n, required=True)
    psi = _expression(cfg, "psi", metric.n)
    orders = _option(cfg, "orders", [1], list)
    if not orders or any(o not in (1, 2) for o in orders):
        raise ConfigError("entries must be 1 or 2", "/options/orders")
    grid = variation_grid(metric, cfg.resolution, *[e for e in (nu, psi) if e is not None])
    fields = base_fields(metric, grid, _rule(cfg, metric), True)
    d = make_direction(fields, nu.source, None if psi is None else psi.source)
    rep.fields += [FieldDump("nu", d.nu, grid.periods), FieldDump("psi", d.psi, grid.periods)]
    results = []
    for which in _which(cfg):
        for order in orders:
            if order == 1:
                res = first_variation(fields, d, which)
                tol = cfg.tol("first_variation")
            else:
                res = second_variation(fields, d, which)
                tol = cfg.tol("second_variation")
            results.append(res.as_dict())
            rep.checks.append(check_le(f"variation_{which}_{order}", res.relative_error, tol))
    rep.payload["variations"] = results


def _random_directions(n, periods, count, seed, terms=3, kmax=2):
    """Real trigonometric polynomials in x1 and y1 with PCG64-drawn integer frequencies."""
    rng = np.random.Generator(np.random.PCG64(seed))
    Lx, Ly = periods[0], periods[n]
    out = []
    for _ in range(count):
        parts = []
        for _ in range(terms):
            kx, ky = rng.integers(-kmax, kmax + 1, size=2)
            if kx == 0 and ky == 0:
                kx = 1
            a, b = (float(c) for c in rng.standard_normal(2))
            arg = f"2*pi*(({int(kx)})*x1/{Lx!r} + ({int(ky)})*y1/{Ly!r})"
            parts.append(f"({a!r})*cos({arg}) + ({b!r})*sin({arg})")
        out.append(" + ".join(parts))
    return out


def cmd_stability(cfg, metric, rep):
    rule = _rule(cfg, metric)
    base = base_fields(metric, grid_for(metric, cfg.resolution), rule, True)
    count = _option(cfg, "random_directions", 20, int)
    nus = _random_directions(metric.n, metric_periods(metric), count, cfg.seed)
    grid = variation_grid(metric, cfg.resolution, *nus)
    fields = base.resampled(grid) if grid.shape != base.grid.shape else base
    out = {}
    for which in _which(cfg):
        st = stability(base, which)
        seconds = []
        for src in nus:
            d = make_direction(fields, src)
            seconds.append(second_variation(fields, d, which, finite_difference=False, check=False).closed_form)
        st = {k: v for k, v in st.items() if k != "mode"}
        st["second_variations"] = seconds
        out[which] = st
        if st["stable"]:
            low = min(seconds) if seconds else 0.0
            scale = max([abs(s) for s in seconds] + [1.0])
            rep.checks.append(check_le(f"second_variation_nonnegative_{which}", -low / scale, cfg.tol("yamabe")))
        rep.checks.append(check_true(f"critical_{which}", st["critical"]))
    rep.payload["stability"] = out
    rep.payload["directions"] = nus


def _monotone(trace):
    worst = 0.0
    for a, b in zip(trace, trace[1:]):
        if a["t"] == b["t"]:
            worst = max(worst, (b["energy"] - a["energy"]) / max(abs(a["energy"]), 1.0))
    return worst


def _yamabe_checks(cfg, rep, r, label=""):
    n_eps = 1e-12
    p = f"{label}_" if label else ""
    rep.checks.append(check_le(f"{p}holder_floor", r.holder_floor - r.Y_estimate, n_eps * max(1.0, abs(r.Y_estimate))))
    rep.checks.append(check_le(f"{p}monotone_descent", _monotone(r.trace), n_eps))
    rep.checks.append(check_le(f"{p}bound_Y_times_C", -r.bound_margin, cfg.tol("bound")))


def _schedule(cfg, n):
    steps = _option(cfg, "schedule_steps", 5, int)
    if steps < 1:
        raise ConfigError("must be >= 1", "/options/schedule_steps")
    p = 2.0 * n / (n - 1)
    return [p] if steps == 1 else [float(t) for t in np.linspace(2.0, p, steps)]


def _curvature_choice(cfg):
    which = _option(cfg, "curvature", "rho", str)
    if which not in ("rho", "kappa"):
        raise ConfigError("must be 'rho' or 'kappa'", "/options/curvature")
    return which


def cmd_yamabe(cfg, metric, rep):
    rule = _rule(cfg, metric)
    grid = grid_for(metric, cfg.resolution)
    which = _curvature_choice(cfg)
    fields = assemble_base_geometry(metric, grid, rule, which)
    r = conformal_invariants(metric, grid, rule, _schedule(cfg, metric.n), False, cfg.tol("yamabe"), fields)
    rep.payload.update(r.as_dict())
    rep.tables["trace"] = r.trace
    rep.fields += [FieldDump("phi", r.minimizer, grid.periods), FieldDump("curvature", fields.curvature, grid.periods)]
    _yamabe_checks(cfg, rep, r)
    if _option(cfg, "verify", True, bool):
        dev, mean, curv = constant_rho_verify(metric, r.minimizer, grid, rule, which)
        rep.payload["rho_hat_deviation"] = dev
        rep.payload["rho_hat_mean"] = mean
        rep.fields.append(FieldDump("curvature_hat", curv, grid.periods))
        rep.checks.append(check_le("constant_curvature_deviation", dev, cfg.tol("rho_hat")))
    plots = _option(cfg, "plot_dir", None, str)
    if plots:
        from .plotting import plot_trace
        rep.payload["plots"] = [plot_trace(r.trace, f"{plots}/yamabe_trace.png")]


def cmd_invariants(cfg, metric, rep):
    f = _expression(cfg, "f", metric.n, default="0.3*cos(2*pi*x1)")
    rule = _rule(cfg, metric)
    grid = grid_for(metric, cfg.resolution, [f])
    which = _curvature_choice(cfg)
    sched = _schedule(cfg, metric.n)
    tol = cfg.tol("yamabe")
    r0 = conformal_invariants(metric, grid, rule, sched, False, tol, assemble_base_geometry(metric, grid, rule, which))
    other = metric.conformal(f)
    r1 = conformal_invariants(other, grid, rule, sched, False, tol, assemble_base_geometry(other, grid, rule, which))
    m = 2 * metric.n
    s_quad, s_closed = sobolev_constant(m), sobolev_constant_closed(m)
    rep.payload.update({"base": r0.as_dict(), "representative": r1.as_dict(), "sigma_quadrature": s_quad,
                        "sigma_closed_form": s_closed})
    rep.checks.append(check_le("Y_invariance", _rel(r1.Y_estimate, r0.Y_estimate), cfg.tol("invariant_Y")))
    rep.checks.append(check_le("C_invariance", _rel(r1.C_value, r0.C_value), cfg.tol("invariant_C")))
    rep.checks.append(check_le("sigma_closed_form", _rel(s_quad, s_closed), cfg.tol("sigma")))
    _yamabe_checks(cfg, rep, r0, "base")
    _yamabe_checks(cfg, rep, r1, "representative")


def cmd_bubble_test(cfg, metric, rep):
    rule = _rule(cfg, metric)
    grid = grid_for(metric, cfg.resolution)
    fields = assemble_base_geometry(metric, grid, rule, _curvature_choice(cfg))
    eps = _option(cfg, "eps_fractions", [0.5, 0.35, 0.25, 0.18], list)
    res = _option(cfg, "bubble_resolution", max(32, cfg.resolution), int)
    if res < 2:
        raise ConfigError("must be >= 2", "/options/bubble_resolution")
    out = bubble_test(fields, tuple(float(e) for e in eps), resolution=res)
    r = conformal_invariants(metric, grid, rule, _schedule(cfg, metric.n), False, cfg.tol("yamabe"), fields)
    out["Y_times_C"] = r.Y_estimate * r.C_value
    rep.payload.update(out)
    rep.tables["bubble"] = out["rows"]
    qc = [row["quotient_times_C"] for row in out["rows"]]
    order = np.argsort([-row["eps"] for row in out["rows"]])
    ordered = [qc[i] for i in order]
    rises = max([b - a for a, b in zip(ordered, ordered[1:])] + [0.0])
    rep.checks.append(check_le("bubble_quotient_decreasing", rises, cfg.tol("bound")))
    rep.checks.append(check_le("Y_times_C_below_bubbles", out["Y_times_C"] - min(qc), cfg.tol("bound")))
    plots = _option(cfg, "plot_dir", None, str)
    if plots:
        from .plotting import plot_bubble
        rep.payload["plots"] = [plot_bubble(out, f"{plots}/bubble.png")]


DISPATCH = {
    "validate": cmd_validate, "geometry": cmd_geometry, "curvature": cmd_curvature, "fiber": cmd_fiber,
    "kahler": cmd_kahler, "conformal-test": cmd_conformal_test, "functionals": cmd_functionals,
    "variation-check": cmd_variation_check, "stability": cmd_stability, "yamabe": cmd_yamabe,
    "invariants": cmd_invariants, "bubble-test": cmd_bubble_test,
}
assert set(DISPATCH) == set(COMMANDS)


def _error(exc, kind):
    out = {"type": type(exc).__name__, "message": str(exc), "kind": kind}
    if isinstance(exc, ConfigError):
        out["location"] = exc.location
    witness = getattr(exc, "witness", None)
    if witness is not None:
        out["detail"] = {"witness": witness}
    return out


def run(cfg, threads=1):
    """Execute one configured command; returns ``(report, exit_code)``."""
    start = time.perf_counter()
    rep = Report(cfg.command, cfg.echo())
    set_workers(threads)
    try:
        metric = cfg.build_metric()
        with np.errstate(invalid="ignore"):
            DISPATCH[cfg.command](cfg, metric, rep)
        code = EXIT_PASS if rep.passed else EXIT_FAIL
        rep.finalize()
    except (ConfigError, MetricError, ExpressionError) as exc:
        err = exc if isinstance(exc, ConfigError) else ConfigError(str(exc), "/options")
        rep.error = _error(err, "config")
        rep.finalize("config_error")
        code = EXIT_CONFIG
    except VERDICT_ERRORS as exc:
        rep.error = _error(exc, "precondition")
        rep.finalize("fail")
        code = EXIT_FAIL
    except NUMERIC_ERRORS as exc:
        rep.error = _error(exc, "numeric")
        rep.finalize("numeric_error")
        code = EXIT_NUMERIC
    finally:
        set_workers(1)
    rep.provenance = provenance(__version__, cfg.seed, time.perf_counter() - start, threads)
    return rep, code


def _config_failure(exc, start, seed):
    rep = Report(None, None, error=_error(exc, "config"))
    rep.finalize("config_error")
    rep.provenance = provenance(__version__, seed, time.perf_counter() - start)
    return rep


def build_parser():
    p = argparse.ArgumentParser(prog="cfinsler", description="Complex Finsler geometry pipelines on complex tori.")
    p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    p.add_argument("--output", metavar="PATH", help="report path (overrides output.path; stdout if unset)")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for fiber integration")
    p.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    p.add_argument("--csv", metavar="DIR", help="write grid fields and tables as CSV files to DIR")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", "--threads")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0", "--seed")
        cfg = load_config(args.config)
    except ConfigError as exc:
        rep, code = _config_failure(exc, start, args.seed), EXIT_CONFIG
        cfg = None
    else:
        if args.seed is not None:
            cfg.seed = args.seed
        rep, code = run(cfg, args.threads)
    out = args.output or (cfg.output_path if cfg is not None else None)
    if out:
        rep.write_json(out)
    else:
        rep.validate()
        sys.stdout.write(json.dumps(rep.as_dict(), indent=2, allow_nan=False) + "\n")
    if args.csv and code in (EXIT_PASS, EXIT_FAIL):
        rep.write_csv(args.csv)
    failed = [c.name for c in rep.checks if not c.passed]
    msg = rep.status if not failed else f"{rep.status}: {', '.join(failed)}"
    if rep.error is not None:
        msg = f"{rep.status}: {rep.error['message']}"
    print(f"[{rep.command}] {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
