"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every test records one PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""

from functools import lru_cache
import itertools

import numpy as np

from cfinsler import (conformal_curvature_check, conformal_invariants, conformal_kahler_test,
                      constant_rho_verify, curvature_at, expand_jet, first_variation, geometry_at,
                      metric_from_config, rayleigh_lambda1, second_variation)
from cfinsler.expressions import as_expression
from cfinsler.fiber import TestForm, build_fiber_rule, divergence_residual, fiber_moments, fubini_study_volume, grid_for
from cfinsler.functionals import base_fields, make_direction, stability, variation_grid
from cfinsler.grid import TorusGrid
from cfinsler.jets import monomials
from cfinsler.metrics import sample_points
from cfinsler.yamabe import assemble_base_geometry, sobolev_constant, sobolev_constant_closed

from oracles import FAMILIES, HERMITIAN, KAHLER, FiniteDifferencePartials, HermitianOracle, rel_err

RULE = build_fiber_rule(2, 16, 32)
F_CONFORMAL = "0.3*sin(2*pi*x1)*cos(2*pi*y2) + 0.2*cos(2*pi*x2) - 0.1*sin(2*pi*y1)"
F0 = "0.2*sin(2*pi*x1)*cos(2*pi*y2)"


def metric(name):
    return metric_from_config(FAMILIES[name])


def _yamabe(m, resolution, extra=()):
    grid = grid_for(m, resolution, [as_expression(e, m.n) for e in extra])
    fields = assemble_base_geometry(m, grid, RULE)
    return grid, conformal_invariants(m, grid, RULE, None, False, 1e-10, fields)


@lru_cache(maxsize=None)
def yamabe_case(name):
    if name == "flat":
        return _yamabe(metric("flat"), 8)
    if name == "flat_conformal":
        return _yamabe(metric("flat").conformal(F0), 16)
    if name == "z_twisted":
        return _yamabe(metric("z_twisted"), 16, ["0.3*cos(2*pi*x1)"])
    if name == "z_twisted_conformal":
        return _yamabe(metric("z_twisted").conformal("0.3*cos(2*pi*x1)"), 16, ["0.3*cos(2*pi*x1)"])
    if name == "quartic":
        return _yamabe(metric("quartic"), 8)
    if name == "hermitian_conformal":
        return _yamabe(metric("hermitian_conformal"), 16)
    raise KeyError(name)


def test_criterion_01_hermitian_reduction(criterion):
    with criterion(1, "Hermitian metrics reproduce the classical Chern connection and curvature") as c:
        for name in HERMITIAN:
            m = metric(name)
            z, v = sample_points(2, 100, 11, None)
            ref = HermitianOracle(FAMILIES.get(name).get("h", [["1", "0"], ["0", "1"]])).at(z, v)
            g = geometry_at(m, z, v, 4)
            cs = curvature_at(m, z, v, with_hh=True)
            c.check(f"{name}.gamma", rel_err(g.gamma, ref["gamma"]), 1e-7)
            c.check(f"{name}.cartan", float(np.max(np.abs(g.C))), 1e-7)
            c.check(f"{name}.kobayashi", rel_err(cs.K_matrix, ref["K_matrix"]), 1e-7)
            c.check(f"{name}.holomorphic", rel_err(cs.K_hol, ref["K"]), 1e-7)
            c.check(f"{name}.ricci", rel_err(cs.ric, ref["Ric"]), 1e-7)
            c.check(f"{name}.hh", rel_err(cs.R_hh, ref["R_hh"]), 1e-7)


def test_criterion_02_jets_match_finite_differences(criterion):
    with criterion(2, "every Wirtinger partial up to order 3 matches finite differences") as c:
        indices = [tuple(int(e) for e in row) for row in monomials(8, 3) if 0 < sum(row)]
        for name in ("flat", "hermitian_general", "quartic", "z_twisted_general"):
            m = metric(name)
            z, v = sample_points(2, 100, 21, None)
            jet = expand_jet(m, z, v, order=3)
            fd = FiniteDifferencePartials(m.value, z, v)
            worst = max(rel_err(jet.partial(i), fd.wirtinger(i)) for i in indices)
            c.check(f"{name}.max_partial_error", worst, 1e-5)


def test_criterion_03_fiber_volume_is_constant(criterion):
    with criterion(3, "fiber Fubini-Study volume is independent of the base point") as c:
        exact = fubini_study_volume(2)
        for name in FAMILIES:
            z, _ = sample_points(2, 16, 31, None)
            vol = np.asarray(fiber_moments(metric(name), z, RULE, with_torsion=False).vol)
            c.check(f"{name}.spread", float((vol.max() - vol.min()) / vol.mean()), 1e-6)
            c.check(f"{name}.closed_form", abs(vol.mean() - exact) / exact, 1e-6)


def test_criterion_04_conformal_transformation_laws(criterion):
    with criterion(4, "geometry of exp(f)G follows the conformal transformation laws") as c:
        f = as_expression(F_CONFORMAL, 2)
        for name in FAMILIES:
            z, v = sample_points(2, 32, 41, None)
            res = conformal_curvature_check(metric(name), f, z, v)
            for law, val in res.items():
                c.check(f"{name}.{law}", val, 1e-9 if law == "torsion_tracefree" else 1e-8)


DIVERGENCE_CASES = {
    "z_twisted_general": dict(potential="cos(2*pi*x1)*sin(2*pi*y2)", nu_vartheta="exp(0.3*sin(2*pi*x1))"),
    "hermitian_conformal": dict(coefficients=["exp(0.5*cos(2*pi*x1))", "0.2*sin(2*pi*x1)*cos(2*pi*y2)"],
                                nu_vartheta="exp(0.3*cos(2*pi*y2))"),
}
ROUNDOFF = 1e-12


def test_criterion_05_divergence_identities(criterion):
    with criterion(5, "fiber-integrated divergence identities hold and converge under refinement") as c:
        for name, spec in DIVERGENCE_CASES.items():
            m = metric(name)
            alpha = TestForm(2, **spec)
            res = {}
            for r in (8, 16):
                grid = grid_for(m, r, alpha.expressions())
                r1, r2, _ = divergence_residual(m, grid, RULE, alpha)
                res[r] = (r1, r2)
                c.check(f"{name}.trace@{r}", r1, 1e-5)
                c.check(f"{name}.radial@{r}", r2, 1e-5)
            for k in (0, 1):
                coarse, fine = res[8][k], res[16][k]
                decayed = fine <= coarse / 4 or fine <= ROUNDOFF
                c.require(f"{name}.decay{k + 1}", decayed)


def test_criterion_06_conformal_kahler_round_trip(criterion):
    with criterion(6, "conformal Kähler test recovers the factor and rejects non-conformal metrics") as c:
        for name in KAHLER:
            m = metric(name).conformal(f"-({F0})")
            grid = grid_for(m, 16)
            res = conformal_kahler_test(m, grid, 1e-8, 1e-5, 64, 0)
            c.require(f"{name}.globally_conformal", res.status == "globally_conformal_kahler")
            expected = as_expression(F0, 2).value(grid.z_points()).real.reshape(grid.shape)
            expected = expected - expected.mean()
            c.check(f"{name}.factor_error", float(np.max(np.abs(res.factor.f - expected))), 1e-6)
            c.check(f"{name}.revalidated_torsion", res.revalidation.torsion_max, 1e-8)
        res = conformal_kahler_test(metric("z_twisted"), grid_for(metric("z_twisted"), 16), 1e-8, 1e-5, 64, 0)
        c.require("z_twisted.rejected", res.status == "not_conformal_kahler")


def test_criterion_07_variations(criterion):
    with criterion(7, "closed-form variations agree with finite differences of the functionals") as c:
        m = metric("z_twisted_general")
        nu = "cos(2*pi*x1) + 0.3*sin(4*pi*x1)"
        grid = variation_grid(m, 16, nu)
        fields = base_fields(m, grid, RULE, True)
        d = make_direction(fields, nu)
        for which in ("K", "R"):
            c.check(f"first_{which}", first_variation(fields, d, which).relative_error, 1e-4)
        for name, nu, res in (("flat", "cos(2*pi*x1) + 0.5*sin(2*pi*y2)", 8),
                              ("z_twisted_kahler", "0.5*cos(2*pi*x1) + 0.3*sin(2*pi*y2)", 16)):
            m = metric(name)
            grid = variation_grid(m, res, nu)
            fields = base_fields(m, grid, RULE, True)
            d = make_direction(fields, nu)
            for which in ("K", "R"):
                c.check(f"{name}.second_{which}", second_variation(fields, d, which).relative_error, 1e-3)


def _random_direction(rng, terms=3, kmax=2):
    parts = []
    for _ in range(terms):
        k = rng.integers(-kmax, kmax + 1, size=4)
        if not k.any():
            k[0] = 1
        a, b = (float(x) for x in rng.standard_normal(2))
        arg = f"2*pi*(({k[0]})*x1 + ({k[1]})*x2 + ({k[2]})*y1 + ({k[3]})*y2)"
        parts.append(f"({a!r})*cos({arg}) + ({b!r})*sin({arg})")
    return " + ".join(parts)


def constant_coefficient_lambda1(coeff, kmax=3):
    """pi^2 min_k c^{i jbar} w_i conj(w_j) with w_i = k_{x_i} - i k_{y_i} over non-zero integer k."""
    best = np.inf
    for k in itertools.product(range(-kmax, kmax + 1), repeat=4):
        if any(k):
            w = np.array([k[0] - 1j * k[2], k[1] - 1j * k[3]])
            best = min(best, float(np.pi ** 2 * np.real(w @ coeff @ np.conj(w))))
    return best


def test_criterion_08_flat_stability(criterion):
    with criterion(8, "flat metric is stable with first eigenvalues pi^2 and 2 pi^2") as c:
        m = metric("flat")
        base = base_fields(m, grid_for(m, 16), RULE, True)
        st_K, st_R = stability(base, "K"), stability(base, "R")
        c.check("lambda1_h", abs(st_K["lambda1"] - np.pi ** 2) / np.pi ** 2, 1e-6)
        c.check("lambda1_g", abs(st_R["lambda1"] - 2 * np.pi ** 2) / (2 * np.pi ** 2), 1e-6)
        c.require("stable_K", st_K["stable"] is True)
        c.require("stable_R", st_R["stable"] is True)
        full = TorusGrid(2, (16,) * 4, (1.0,) * 4)
        fields = base.resampled(full)
        rng = np.random.Generator(np.random.PCG64(8))
        lowest = np.inf
        for _ in range(20):
            d = make_direction(fields, _random_direction(rng))
            for which in ("K", "R"):
                lowest = min(lowest, second_variation(fields, d, which, finite_difference=False).closed_form)
        c.check("min_second_variation", lowest, 0.0, kind=">=")
        skew = metric_from_config({"family": "hermitian", "n": 2, "h": [["2", "0.5*I"], ["0", "1"]]})
        sb = base_fields(skew, grid_for(skew, 4), RULE, True)
        coeff = sb.moments.h_inv.reshape(-1, 2, 2)[0]
        lam, _ = rayleigh_lambda1(sb.grid, sb.moments.h_inv, sb.mu)
        exact = constant_coefficient_lambda1(coeff)
        c.check("constant_hermitian_lambda1", abs(lam - exact) / exact, 1e-6)


def test_criterion_09_yamabe_minimizer(criterion):
    with criterion(9, "Yamabe minimizer gives constant mean Ricci curvature") as c:
        grid, r = yamabe_case("flat")
        c.check("flat.Y", abs(r.Y_estimate), 1e-8)
        c.check("flat.minimizer_constant", float(np.ptp(r.minimizer) / np.mean(r.minimizer)), 1e-8)
        grid, r = yamabe_case("flat_conformal")
        f0 = as_expression(F0, 2).value(grid.z_points()).real.reshape(grid.shape)
        expected = np.exp(-f0 / 2)
        got = r.minimizer / np.mean(r.minimizer)
        c.check("flat_conformal.round_trip", float(np.max(np.abs(got - expected / np.mean(expected)))), 1e-4)
        m = metric("z_twisted")
        devs = []
        for res in (8, 16):
            g, rr = _yamabe(m, res)
            dev, _, _ = constant_rho_verify(m, rr.minimizer, g, RULE)
            devs.append(dev)
            c.check(f"z_twisted.rho_hat_deviation@{res}", dev, 1e-3)
        c.require("z_twisted.deviation_decays", devs[1] < devs[0] or devs[1] <= ROUNDOFF)
        for name in ("flat", "flat_conformal", "z_twisted"):
            _, r = yamabe_case(name)
            above = r.Y_estimate - r.holder_floor
            c.check(f"{name}.holder_floor", -above, 1e-12 * max(1.0, abs(r.Y_estimate)))
            rises = [b["energy"] - a["energy"] for a, b in zip(r.trace, r.trace[1:]) if a["t"] == b["t"]]
            c.check(f"{name}.monotone_descent", max(rises + [0.0]), 1e-12 * max(1.0, abs(r.Y_estimate)))


def test_criterion_10_conformal_invariants(criterion):
    with criterion(10, "Y and C are conformal invariants and Y C stays below sigma/2") as c:
        _, r0 = yamabe_case("z_twisted")
        _, r1 = yamabe_case("z_twisted_conformal")
        c.check("Y_invariance", abs(r1.Y_estimate - r0.Y_estimate) / max(abs(r0.Y_estimate), 1.0), 1e-4)
        c.check("C_invariance", abs(r1.C_value - r0.C_value) / max(abs(r0.C_value), 1.0), 1e-6)
        s_quad, s_closed = sobolev_constant(4), sobolev_constant_closed(4)
        c.check("sigma4_quadrature", abs(s_quad - s_closed) / s_closed, 1e-10)
        bound = s_closed / 2
        for name in ("flat", "flat_conformal", "z_twisted", "z_twisted_conformal", "quartic",
                     "hermitian_conformal"):
            _, r = yamabe_case(name)
            c.check(f"{name}.Y_times_C_minus_bound", r.Y_estimate * r.C_value - bound, 1e-3)
