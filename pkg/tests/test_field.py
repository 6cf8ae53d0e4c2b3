from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import oracle
from tumorbif.field import (FieldGrid, FieldSolver, FieldSolverError, PhiTrace, assemble_phi,
                            measured_multiplier, multiplier_check)
from tumorbif.geometry import ShapeCoeffs, ShapeError, eval_shape, random_shape
from tumorbif.spectrum import bif_value

A1 = oracle.canonical_A(1)


def odd_shape(eps=0.05):
    return ShapeCoeffs(1, [0.0, 0.3 * eps, 0.0, eps])


SHAPES = {
    "l2": lambda: random_shape(np.random.default_rng(1), 2, 6, sup=0.2),
    "l3": lambda: random_shape(np.random.default_rng(2), 3, 5, sup=0.15),
    "odd": odd_shape,
    "l1": lambda: random_shape(np.random.default_rng(4), 1, 8, sup=0.1),
}


@pytest.fixture(scope="module")
def solutions(solver):
    return {name: solver.solve(make()) for name, make in SHAPES.items()}


def circle_average(grid, U, rho, R_A, delta):
    """Average of U over the physical circle |x| = delta."""
    p = eval_shape(rho, grid.theta)[0]
    q = eval_shape(rho, grid.theta + np.pi)[0]
    e, o = (p + q) / 2, (p - q) / 2
    # root of R σ (1 + e + σ o) = delta
    sig = 2 * delta / R_A / ((1 + e) + np.sqrt((1 + e) ** 2 + 4 * o * delta / R_A))
    return np.mean([grid.along_diameter(U, j, sig[j]) for j in range(grid.n_theta)])


# nutrient


def test_disk_nutrient_is_radial(solver, eq1):
    psi, res, hist = solver.solve_nutrient(ShapeCoeffs.zero())
    assert np.max(np.abs(psi - eq1(solver.grid.sigma)[:, None])) <= 1e-8
    assert res <= 1e-10


def test_disk_nutrient_matches_bessel(solver):
    psi, _, _ = solver.solve_nutrient(ShapeCoeffs.zero())
    ref = np.array([oracle.v0(s) for s in solver.grid.sigma])
    assert np.max(np.abs(psi - ref[:, None])) <= 1e-8


def test_disk_center_value(solver):
    sol = solver.solve(ShapeCoeffs.zero())
    assert sol.center_value() == pytest.approx(0.78984, abs=1e-5)
    assert sol.center_value() == pytest.approx(oracle.center_value(), abs=1e-9)


def test_dilated_disk(solver):
    # ρ ≡ 0.1 is the disk of radius 1.1: ψ = I0(r)/I0(1.1), p constant
    rho = ShapeCoeffs(1, [0.1])
    sol = solver.solve(rho)
    i0 = oracle.bessel_i(0, 1.1)
    ref = np.array([float(oracle.bessel_i(0, 1.1 * s) / i0) for s in solver.grid.sigma])
    assert np.max(np.abs(sol.psi - ref[:, None])) <= 1e-9
    assert np.ptp(sol.pressure(50.0)) <= 1e-10
    slope = float(oracle.bessel_i(1, 1.1) / i0)
    for G in (0.0, 5.0, 50.0):
        phi = solver.assemble_phi(G, rho).values
        assert np.max(np.abs(phi - G * (slope - A1 * 1.1 / 2))) <= 1e-9


@pytest.mark.parametrize("name", list(SHAPES))
def test_boundary_and_maximum_principle(solutions, name):
    sol = solutions[name]
    assert np.all(sol.psi[0] == 1.0)
    assert sol.psi.max() <= 1.0 + 1e-12
    assert sol.psi[1:].max() < 1.0
    assert sol.psi.min() > 0.0
    assert sol.nutrient_residual <= 1e-10


@pytest.mark.parametrize("name", ["l2", "l3", "l1"])
def test_newton_iterations(solutions, name):
    # sup|ρ| ≤ 0.2 with the radial initial guess
    assert len(solutions[name].newton_history) - 1 <= 6


def test_newton_failure_reports_history(eq1):
    s = FieldSolver(eq1, max_newton=1)
    with pytest.raises(FieldSolverError) as info:
        s.solve_nutrient(SHAPES["l2"]())
    assert len(info.value.history) == 1


def test_nonlinear_nutrient_is_bounded():
    from tumorbif.model import NutrientFn
    from tumorbif.radial import find_RA
    eq = find_RA(0.6, NutrientFn.michaelis_menten(2.0))
    s = FieldSolver(eq, grid=FieldGrid(32, 64))
    psi, res, hist = s.solve_nutrient(random_shape(np.random.default_rng(7), 2, 4, sup=0.2))
    assert res <= 1e-10
    assert psi.max() <= 1.0 + 1e-12
    assert len(hist) - 1 <= 6


# grid and shape validation


@pytest.mark.parametrize("n_r, n_theta", [(16, 128), (48, 32), (48, 127)])
def test_grid_minimums(n_r, n_theta):
    with pytest.raises(ValueError):
        FieldGrid(n_r, n_theta)


def test_shape_outside_neighbourhood(solver):
    with pytest.raises(ShapeError):
        solver.solve(ShapeCoeffs.single(2, 1, 0.3))


def test_shape_unresolved(solver):
    with pytest.raises(ShapeError):
        solver.solve(ShapeCoeffs.single(8, 8, 1e-3))


# pressure


@pytest.mark.parametrize("G", [0.0, 5.0, 175.0])
def test_disk_pressure_constant(solver, eq1, G):
    p = solver.solve_pressure(ShapeCoeffs.zero(), G)
    assert np.max(np.abs(p - (1 / eq1.R_A - A1 * G * eq1.R_A**2 / 4))) <= 1e-12


def test_pressure_continuity(solver, eq1):
    G = 50.0
    const = 1 / eq1.R_A - A1 * G * eq1.R_A**2 / 4
    p = solver.solve_pressure(ShapeCoeffs.single(2, 1, 1e-4), G)
    # first-order response to ε cos(2s) is O(ε) with a moderate constant
    assert np.max(np.abs(p - const)) <= 1e-4 * (3 + A1 * G)
    # the center value moves only at second order
    assert abs(p[-1].mean() - const) <= 1e-8 * (3 + A1 * G)


def test_pressure_boundary_data(solver, solutions):
    sol = solutions["l2"]
    kappa, grow = solver.pressure_data(sol.rho)
    assert np.max(np.abs(sol.pressure(7.0)[0] - (kappa + 7.0 * grow))) <= 1e-12


@pytest.mark.parametrize("name", list(SHAPES))
@pytest.mark.parametrize("G", [0.0, 50.0])
def test_mean_value_property(solver, solutions, name, G):
    sol = solutions[name]
    p = sol.pressure(G)
    avg = circle_average(solver.grid, p, sol.rho, solver.R_A, 0.3)
    assert abs(avg - sol.center_value(p)) <= 1e-6


def test_solve_pressure_matches_parts(solver, solutions):
    sol = solutions["odd"]
    assert np.max(np.abs(solver.solve_pressure(sol.rho, 12.0) - sol.pressure(12.0))) <= 1e-11


# boundary operator


@pytest.mark.parametrize("G", [0.0, 5.0, 50.0, 174.8, 1000.0])
def test_trivial_branch(solver, G):
    assert solver.assemble_phi(G, ShapeCoeffs.zero()).sup <= 1e-7


def test_zero_growth_is_pressure_flux(solver, solutions):
    sol = solutions["l3"]
    shape = solver.shape_data(sol.rho)
    phi = solver.assemble_phi(0.0, sol.rho).values
    flux = solver.normal_flux(solver.solve_pressure(sol.rho, 0.0), shape)
    assert np.max(np.abs(phi + flux)) <= 1e-9


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31), l=st.integers(1, 6), G=st.floats(0, 500))
def test_even_shapes_give_even_phi(solver, seed, l, G):
    rho = random_shape(np.random.default_rng(seed), l, 3, sup=0.15)
    trace = solver.assemble_phi(G, rho)
    assert np.max(np.abs(trace.sin_coeffs)) <= 1e-8


@pytest.mark.parametrize("l", [2, 3, 4, 5])
def test_subspace_closure(eq1, l):
    grid = FieldGrid().symmetric(l)
    rho = random_shape(np.random.default_rng(10 + l), l, 4, sup=0.2)
    trace = FieldSolver(eq1, grid=grid).assemble_phi(120.0, rho)
    assert trace.leakage(l) <= 1e-7 * np.max(np.abs(trace.cos_coeffs))


@pytest.mark.parametrize("l, n_theta", [(1, 128), (3, 132), (5, 130), (6, 132), (8, 128)])
def test_symmetric_grid(l, n_theta):
    g = FieldGrid().symmetric(l)
    assert g.n_theta == n_theta and g.n_r == FieldGrid().n_r


def test_phi_trace_coefficients():
    th = 2 * np.pi * np.arange(64) / 64
    t = PhiTrace(G=0.0, theta=th, values=1.5 + 2 * np.cos(3 * th) - 0.5 * np.sin(4 * th) + np.cos(6 * th))
    c = t.cos_coeffs
    assert c[0] == pytest.approx(1.5) and c[3] == pytest.approx(2) and c[6] == pytest.approx(1)
    assert t.sin_coeffs[4] == pytest.approx(-0.5)
    np.testing.assert_allclose(t.family(3, 2), [1.5, 2.0, 1.0], atol=1e-14)
    assert t.leakage(3) == pytest.approx(0.5)


def test_grid_convergence(eq1):
    rho = random_shape(np.random.default_rng(3), 3, 6, sup=0.2)
    ref = FieldSolver(eq1, grid=FieldGrid(96, 256)).assemble_phi(50.0, rho).cos_coeffs[:40]
    errs = []
    for g in ((32, 64), (64, 128)):
        c = FieldSolver(eq1, grid=FieldGrid(*g)).assemble_phi(50.0, rho).cos_coeffs[:32]
        errs.append(np.max(np.abs(c - ref[:32])))
    assert np.log2(errs[0] / errs[1]) >= 2


def test_concurrent_solves_match(solver):
    shapes = [SHAPES[n]() for n in ("l2", "l3", "odd")]
    serial = [solver.assemble_phi(30.0, r).values for r in shapes]
    with ThreadPoolExecutor(3) as ex:
        threaded = list(ex.map(lambda r: solver.assemble_phi(30.0, r).values, shapes))
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a, b)


def test_module_level_assemble(solver, eq1):
    rho = SHAPES["l2"]()
    a = assemble_phi(20.0, rho, eq1).values
    np.testing.assert_allclose(a, solver.assemble_phi(20.0, rho).values, atol=1e-12)


# linearization at ρ = 0


@pytest.fixture(scope="module")
def parts(solver):
    return {k: measured_multiplier(solver, k) for k in range(7)}


@pytest.mark.parametrize("G", [0.0, 10.0, 300.0])
def test_translation_mode(solver, table64, parts, G):
    chk = multiplier_check(G, 1, solver, table64, parts=parts[1])
    assert abs(chk.measured) <= 1e-4 * (1 + G)


def test_mode_two_vanishes_at_G2(solver, table64, parts):
    G2 = bif_value(2, table64)
    chk = multiplier_check(G2, 2, solver, table64, parts=parts[2])
    assert abs(chk.measured) <= 1e-4 * (1 + G2)


def test_mode_three_against_bessel(solver, table64, parts):
    ref = -27 + 3 - 10 * oracle.denominator(3)
    chk = multiplier_check(10.0, 3, solver, table64, parts=parts[3])
    assert chk.measured == pytest.approx(ref, rel=1e-3)


@pytest.mark.parametrize("k", [0, 2, 3, 4, 5, 6])
@pytest.mark.parametrize("G", [0.0, 5.0, 50.0])
def test_multiplier_agreement(solver, table64, parts, k, G):
    chk = multiplier_check(G, k, solver, table64, parts=parts[k])
    assert chk.rel_error <= 1e-3
    assert chk.passed


def test_multiplier_rejects_eps(solver):
    with pytest.raises(ValueError):
        measured_multiplier(solver, 2, eps=0.1)
