"""Solver and structure-function tests.

Exact discrete solutions (harmonic quadratics, linears on irregular
domains, a radial exact solution for the degenerate exponent) pin solver
accuracy; energies are cross-checked against an independent quadrature;
obstacle runs are validated with an energy-probe complementarity oracle.
"""

import dataclasses
import math

import numpy as np
import pytest

import _oracles
from conftest import random_field
from fmdlab import (
    OperatorSpec,
    ProblemSpec,
    ScalarField,
    VectorField,
    bmo_seminorm,
    field_from_function,
    make_domain,
    max_principle_violation,
    monotonicity_constant,
    psi_varsigma,
    solve,
    structure_margins,
    vector_field_from_function,
)


def ones_coeff(g):
    return ScalarField(g, np.ones((g.nx, g.ny)))


def zero_force(g):
    return vector_field_from_function(g, lambda x, y: 0.0 * x, lambda x, y: 0.0 * y)


def dirichlet(g, op, gfield, F=None, region=None):
    return ProblemSpec(g, op, "dirichlet", F or zero_force(g), gfield, region=region)


# -- the structure function Psi ---------------------------------------------------


def test_psi_hand_value_and_symmetry():
    got = psi_varsigma((1.0, 0.0), (0.0, 1.0), 0.5, 3.0)
    assert got == pytest.approx(math.sqrt(2.25) * 2.0, rel=1e-15)
    assert psi_varsigma((0.0, 1.0), (1.0, 0.0), 0.5, 3.0) == pytest.approx(got, rel=1e-15)


def test_psi_reduces_to_squared_distance_at_p2():
    rng = np.random.default_rng(3)
    x1, y1, x2, y2 = rng.normal(size=(4, 50))
    got = psi_varsigma((x1, y1), (x2, y2), 0.7, 2.0)
    assert np.allclose(got, (x1 - x2) ** 2 + (y1 - y2) ** 2, rtol=1e-14)


def test_psi_homogeneity():
    rng = np.random.default_rng(4)
    x1, y1, x2, y2 = rng.normal(size=(4, 40))
    for p in (1.5, 2.0, 2.7):
        base = psi_varsigma((x1, y1), (x2, y2), 0.3, p)
        for t in (0.25, 3.0):
            scaled = psi_varsigma((t * x1, t * y1), (t * x2, t * y2), t * 0.3, p)
            assert np.allclose(scaled, t**p * base, rtol=1e-12)


def test_psi_degenerate_cases():
    assert psi_varsigma((0.0, 0.0), (0.0, 0.0), 0.0, 1.5) == 0.0
    assert psi_varsigma((1.0, 2.0), (1.0, 2.0), 0.0, 1.5) == 0.0


def test_monotonicity_constant_is_exact_at_p2():
    # at p = 2 the flux is the identity, so the ratio is identically 1
    assert monotonicity_constant(2.0, 0.0) == pytest.approx(0.8, rel=1e-12)
    assert monotonicity_constant(2.0, 0.5) == pytest.approx(0.8, rel=1e-12)
    for p in (1.5, 2.5, 3.0):
        c = monotonicity_constant(p, 0.0)
        assert 0.0 < c <= 0.8 + 1e-12


# -- operator specs ----------------------------------------------------------------


def test_operator_spec_validation():
    g = make_domain("square", 6, 6, 0.25)
    one = ones_coeff(g)
    with pytest.raises(ValueError):
        OperatorSpec(1.0, 0.0, 2.0, one)
    with pytest.raises(ValueError):
        OperatorSpec(3.5, 0.0, 2.0, one)
    with pytest.raises(ValueError):
        OperatorSpec(2.5, 0.0, 2.0, one, strict_range=True)  # strict cap is p <= 2
    OperatorSpec(2.0, 0.0, 2.0, one, strict_range=True)
    with pytest.raises(ValueError):
        OperatorSpec(2.0, 1.5, 2.0, one)
    with pytest.raises(ValueError):
        OperatorSpec(2.0, 0.0, 0.9, one)
    with pytest.raises(ValueError):
        OperatorSpec(2.0, 0.0, 2.0, one, bform="weird")
    with pytest.raises(ValueError):
        OperatorSpec(2.0, 0.0, 2.0, ScalarField(g, np.full((6, 6), 3.0)))  # exits [1/2, 2]


def test_operator_create_certifies_structure():
    g = make_domain("square", 8, 8, 0.125)
    rng = np.random.default_rng(5)
    coeff = ScalarField(g, rng.uniform(0.5, 2.0, (8, 8)))
    for p, vs in ((2.0, 0.0), (1.5, 0.3), (3.0, 0.0)):
        op = OperatorSpec.create(p, vs, coeff)
        assert op.lam >= coeff.values.max()
        m = structure_margins(op)
        assert m["growth"] >= 0.0
        assert m["monotonicity"] >= 0.0
        assert m["b_growth"] >= 0.0


def test_bmap_matches_reference_forms():
    g = make_domain("square", 4, 4, 0.25)
    rng = np.random.default_rng(6)
    fx, fy = rng.normal(size=(2, 30))
    for p, vs, bform in ((2.0, 0.0, "p1"), (3.0, 0.0, "p1"), (1.8, 0.4, "dop")):
        op = OperatorSpec(p, vs, 2.0, ones_coeff(g), bform=bform)
        gx, gy = op.bmap(fx, fy)
        rx, ry = _oracles.bmap_reference(p, vs, bform, fx, fy)
        assert np.allclose(gx, rx, rtol=1e-14)
        assert np.allclose(gy, ry, rtol=1e-14)
    # p = 2 with the power form is the identity map, and origins stay put
    op = OperatorSpec(2.0, 0.0, 2.0, ones_coeff(g))
    gx, gy = op.bmap(fx, fy)
    assert np.allclose(gx, fx, rtol=1e-15) and np.allclose(gy, fy, rtol=1e-15)
    zx, zy = op.bmap(np.array(0.0), np.array(0.0))
    assert zx == 0.0 and zy == 0.0


# -- Dirichlet solves ---------------------------------------------------------------


def test_p2_harmonic_quadratic_is_discrete_exact():
    g = make_domain("square", 20, 20, 1.0 / 20)
    exact = field_from_function(g, lambda x, y: x * x - y * y + 0.3 * x * y)
    prob = dirichlet(g, OperatorSpec.create(2.0, 0.0, ones_coeff(g)), exact)
    rep = solve(prob)
    assert rep.converged
    assert np.abs(rep.u.values - exact.values)[g.mask].max() <= 1e-9
    assert max_principle_violation(rep, prob) == 0.0


def test_p2_linear_exact_on_rectangles():
    g = make_domain("square", 15, 11, 1.0 / 15)
    exact = field_from_function(g, lambda x, y: 1.0 + 2.0 * x - 3.0 * y)
    prob = dirichlet(g, OperatorSpec.create(2.0, 0.0, ones_coeff(g)), exact)
    rep = solve(prob)
    assert rep.converged
    assert np.abs(rep.u.values - exact.values)[g.mask].max() <= 1e-10


def test_p2_linear_converges_on_irregular_domains():
    # the boundary quadrature is only first-order off rectangles: the error
    # must shrink under refinement and the maximum principle must stay exact
    for shape in ("disk", "lshape"):
        errs = []
        for n in (17, 34):
            g = make_domain(shape, n, n, 1.0 / n)
            exact = field_from_function(g, lambda x, y: 1.0 + 2.0 * x - 3.0 * y)
            prob = dirichlet(g, OperatorSpec.create(2.0, 0.0, ones_coeff(g)), exact)
            rep = solve(prob)
            assert rep.converged
            act = prob.active_cells()
            errs.append(np.abs(rep.u.values - exact.values)[act].max())
            assert max_principle_violation(rep, prob) == 0.0
        assert errs[1] <= 0.7 * errs[0]
        assert errs[0] <= 0.05


def test_energy_matches_independent_quadrature():
    g = make_domain("square", 12, 12, 1.0 / 12)
    rng = np.random.default_rng(8)
    coeff = ScalarField(g, rng.uniform(0.8, 1.6, (12, 12)))
    F = vector_field_from_function(
        g, lambda x, y: np.sin(2 * x + y), lambda x, y: np.cos(x - y)
    )
    gfield = field_from_function(g, lambda x, y: 0.2 * x * y)
    for p, vs, bform in ((2.0, 0.0, "p1"), (2.6, 0.35, "dop")):
        op = OperatorSpec.create(p, vs, coeff, bform=bform)
        prob = ProblemSpec(g, op, "dirichlet", F, gfield)
        rep = solve(prob)
        want = _oracles.energy_reference(prob, rep.u.values)
        assert rep.energy == pytest.approx(want, rel=1e-10)


def test_p3_radial_exact_solution_on_annulus():
    n = 33
    g = make_domain("annulus", n, n, 1.0 / n)
    exact = field_from_function(g, lambda x, y: np.sqrt(np.hypot(x, y)))
    prob = dirichlet(g, OperatorSpec.create(3.0, 0.0, ones_coeff(g)), exact)
    rep = solve(prob)
    assert rep.converged
    act = prob.active_cells()
    err = np.abs(rep.u.values - exact.values)[act].max()
    assert err / np.abs(exact.values[act]).max() <= 0.015


def test_energy_trace_monotone_within_stages():
    n = 24
    g = make_domain("square", n, n, 1.0 / n)
    F = vector_field_from_function(
        g, lambda x, y: np.sin(3 * x) * y, lambda x, y: np.cos(2 * y) - x
    )
    gfield = field_from_function(g, lambda x, y: 0.0 * x)
    prob = ProblemSpec(g, OperatorSpec.create(2.5, 0.0, ones_coeff(g)), "dirichlet", F, gfield)
    rep = solve(prob)
    assert rep.converged
    pos = 0
    for _, iters in rep.stages:
        seg = rep.energy_trace[pos : pos + iters]
        diffs = np.diff(seg)
        if diffs.size:
            assert diffs.max() <= 1e-12 * max(1.0, abs(seg[0]))
        pos += iters
    assert sum(it for _, it in rep.stages) == rep.iterations


def test_region_restricts_the_active_set():
    g = make_domain("square", 16, 16, 1.0 / 16)
    region = np.zeros((16, 16), dtype=bool)
    region[4:12, 4:12] = True
    exact = field_from_function(g, lambda x, y: x + y)
    prob = dirichlet(g, OperatorSpec.create(2.0, 0.0, ones_coeff(g)), exact, region=region)
    rep = solve(prob)
    assert rep.converged
    # the report covers only the active set; everything else reads zero
    assert np.all(rep.u.values[g.mask & ~region] == 0.0)
    assert np.abs(rep.u.values - exact.values)[region].max() <= 1e-10


# -- obstacle problems ---------------------------------------------------------------


def _bump_obstacle(g, height=0.5):
    return field_from_function(
        g, lambda x, y: height - 4.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)
    )


def test_obstacle_spec_validation():
    g = make_domain("square", 8, 8, 0.125)
    op = OperatorSpec.create(2.0, 0.0, ones_coeff(g))
    zero = field_from_function(g, lambda x, y: 0.0 * x)
    lo = field_from_function(g, lambda x, y: 0.0 * x - 1.0)
    hi = field_from_function(g, lambda x, y: 0.0 * x + 1.0)
    with pytest.raises(ValueError):
        ProblemSpec(g, op, "double_obstacle", zero_force(g), zero, f1=lo)
    with pytest.raises(ValueError):
        ProblemSpec(g, op, "double_obstacle", zero_force(g), zero, f1=hi, f2=lo)
    with pytest.raises(ValueError):
        off = field_from_function(g, lambda x, y: 0.0 * x + 2.0)
        ProblemSpec(g, op, "double_obstacle", zero_force(g), off, f1=lo, f2=hi)
    with pytest.raises(ValueError):
        ProblemSpec(g, op, "dirichlet", zero_force(g), zero, f1=lo, f2=hi)
    with pytest.raises(ValueError):
        ProblemSpec(g, op, "poisson", zero_force(g), zero)


def test_inactive_obstacles_match_unconstrained():
    n = 20
    g = make_domain("square", n, n, 1.0 / n)
    F = vector_field_from_function(
        g, lambda x, y: np.sin(2 * x) + y, lambda x, y: x - np.cos(3 * y)
    )
    gfield = field_from_function(g, lambda x, y: 0.1 * (x - y))
    op = OperatorSpec.create(2.5, 0.0, ones_coeff(g))
    free_rep = solve(ProblemSpec(g, op, "dirichlet", F, gfield), tol=1e-10)
    lo = field_from_function(g, lambda x, y: 0.0 * x - 100.0)
    hi = field_from_function(g, lambda x, y: 0.0 * x + 100.0)
    obs_rep = solve(
        ProblemSpec(g, op, "double_obstacle", F, gfield, f1=lo, f2=hi), tol=1e-10
    )
    assert obs_rep.converged
    diff = np.abs(free_rep.u.values - obs_rep.u.values)[g.mask].max()
    assert diff <= 1e-10


def test_active_obstacle_bounds_and_complementarity():
    n = 24
    g = make_domain("square", n, n, 1.0 / n)
    op = OperatorSpec.create(2.0, 0.0, ones_coeff(g))
    zero = field_from_function(g, lambda x, y: 0.0 * x)
    lo = _bump_obstacle(g)
    hi = field_from_function(g, lambda x, y: 0.0 * x + 10.0)
    prob = ProblemSpec(g, op, "double_obstacle", zero_force(g), zero, f1=lo, f2=hi)
    rep = solve(prob)
    assert rep.converged
    act = prob.active_cells()
    uv, lov, hiv = rep.u.values[act], lo.values[act], hi.values[act]
    assert np.all(uv >= lov) and np.all(uv <= hiv)  # bounds hold exactly
    contact = uv <= lov + 1e-12
    assert contact.any() and not contact.all()  # the bump really is active
    assert rep.u.values[n // 2, n // 2] == pytest.approx(
        lo.values[n // 2, n // 2], abs=1e-12
    )
    res = _oracles.complementarity_residual(prob, rep.u)
    assert res <= 1e-6


def test_max_principle_violation_detects_doctored_fields():
    g = make_domain("square", 14, 14, 1.0 / 14)
    exact = field_from_function(g, lambda x, y: x - 0.5 * y)
    prob = dirichlet(g, OperatorSpec.create(2.0, 0.0, ones_coeff(g)), exact)
    rep = solve(prob)
    assert max_principle_violation(rep, prob) == 0.0
    doctored = rep.u.values.copy()
    doctored[7, 7] = exact.values[g.mask].max() + 0.25
    bad = dataclasses.replace(rep, u=ScalarField(g, doctored))
    assert max_principle_violation(bad, prob) == pytest.approx(0.25, abs=1e-12)


# -- coefficient oscillation ----------------------------------------------------------


def test_bmo_seminorm_of_constant_coefficient_is_zero():
    g = make_domain("square", 16, 16, 1.0 / 16)
    op = OperatorSpec.create(2.0, 0.0, ScalarField(g, np.full((16, 16), 1.7)))
    assert bmo_seminorm(op).value <= 1e-14


def test_bmo_seminorm_of_checkerboard_matches_amplitude():
    n, delta = 24, 0.2
    g = make_domain("square", n, n, 1.0 / n)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    coeff = ScalarField(g, 1.0 + delta * np.where((ii + jj) % 2 == 0, 1.0, -1.0))
    op = OperatorSpec.create(2.0, 0.0, coeff)
    rep = bmo_seminorm(op)
    assert rep.value == pytest.approx(delta, rel=0.3)
    assert rep.worst_radius > 0.0
