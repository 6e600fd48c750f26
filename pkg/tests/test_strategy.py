import numpy as np
import pytest

from degmem.coeffs import prototype_coefficient
from degmem.control import synthesize_control
from degmem.errors import GeometryError
from degmem.memory import admissible_decay_M, decaying_kernel, zero_kernel
from degmem.pde import (BoundaryCondition, Trajectory, assemble_operator, default_bc,
                        fill_boundary, inner_product, make_grid)
from degmem.strategy import (commutator, cutoff, glue_double_degenerate, glue_fields,
                             nested_points, select_tstar, smoothstep, two_phase_control)

from conftest import OMEGA

ONE = prototype_coefficient(0.0, 0.0, "none")
DIR = BoundaryCondition()


def test_tstar_constant_in_time():
    g = make_grid(ONE, 10, 20, 0.5)
    Y = np.tile(fill_boundary(np.sin(np.pi * g.x_inner), DIR), (21, 1))
    t, n = select_tstar(Trajectory(Y, g, DIR), T=1.0)
    assert t == pytest.approx(0.25) and n == 10


def test_tstar_decaying_mode():
    g = make_grid(ONE, 10, 20, 0.5)
    Y = np.exp(-np.pi ** 2 * g.t)[:, None] * np.sin(np.pi * g.x)[None, :]
    t, n = select_tstar(Trajectory(Y, g, DIR), T=1.0)
    assert n == 19 and 0.25 <= t < 0.5


def test_two_phase_zero_kernel(wd_setup, rng):
    a, w, cfg = wd_setup
    y0 = rng.normal(size=40)
    plan = two_phase_control(y0, zero_kernel(), a, w, cfg, omega=OMEGA, N=40, M=80)
    n = plan.n_star
    assert 0.25 <= plan.t_star < 0.5
    assert not np.any(plan.u[: n + 1])
    assert np.array_equal(plan.phase1.values[n], plan.phase2.control.y.values[0])
    assert np.array_equal(plan.y.values[n], plan.phase1.values[n])
    direct = synthesize_control(plan.phase1.values[n], None, a, plan.weights2, plan.cfg2, OMEGA,
                                grid=plan.phase2.control.y.grid)
    assert np.array_equal(direct.u, plan.phase2.control.u)
    assert direct.terminal_norm == plan.terminal_norm


def test_two_phase_admissible_kernel(wd_setup):
    a, w, cfg = wd_setup
    b = decaying_kernel(1.0, 2 * admissible_decay_M(w, cfg.s), 1.0)
    g = make_grid(a, 40, 80, 1.0)
    y0 = np.where(g.x_inner < 0.5, 1.0, -0.5)
    plan = two_phase_control(y0, b, a, w, cfg, omega=OMEGA, N=40, M=80)
    assert plan.terminal_norm <= 1e-2 * np.sqrt(inner_product(y0, y0, g))
    assert not np.any(plan.u[: plan.n_star + 1])


def test_cutoff_properties():
    x = np.linspace(0, 1, 1001)
    chi = cutoff(x, 0.35, 0.55)
    assert np.all(chi[x <= 0.35] == 1.0) and np.all(chi[x >= 0.55] == 0.0)
    assert np.all((chi >= 0) & (chi <= 1)) and np.all(np.diff(chi) <= 0)
    assert smoothstep(np.array([0.0, 0.5, 1.0])).tolist() == [0.0, 0.5, 1.0]


def test_nested_points_geometry():
    x = np.linspace(0, 1, 102)
    j_lp, j_lpp, j_bpp, j_bp = nested_points(x, OMEGA)
    assert x[j_lp] < OMEGA[0] < x[j_lpp] < x[j_bpp] < OMEGA[1] < x[j_bp]
    with pytest.raises(GeometryError):
        nested_points(np.linspace(0, 1, 32), (0.3, 0.31))
    with pytest.raises(GeometryError):
        nested_points(x, (0.005, 0.5))


def test_identical_subsolutions_cancel(rng):
    a = prototype_coefficient(0.5, 0.5, "both")
    g = make_grid(a, 30, 10, 1.0)
    bc = default_bc(a)
    A = assemble_operator(a, g, bc)
    chi = cutoff(g.x, 0.38, 0.52)
    W = fill_boundary(rng.normal(size=(11, 30)), bc)
    U1 = rng.normal(size=(11, 30))
    Y, U, cw, cz = glue_fields(W, W, U1, U1, chi, A, bc)
    assert np.array_equal(Y, W)
    assert np.max(np.abs(U - U1)) <= 1e-12 * max(1.0, np.max(np.abs(U1)))
    assert np.max(np.abs(cw - cz)) == 0.0


def test_glue_identity_and_commutator_support(rng):
    a = prototype_coefficient(0.5, 0.5, "both")
    g = make_grid(a, 30, 4, 1.0)
    bc = default_bc(a)
    A = assemble_operator(a, g, bc)
    chi = cutoff(g.x, 0.38, 0.52)
    W = fill_boundary(rng.normal(size=(5, 30)), bc)
    Z = fill_boundary(rng.normal(size=(5, 30)), bc)
    Y, _, cw, _ = glue_fields(W, Z, np.zeros((5, 30)), np.zeros((5, 30)), chi, A, bc)
    assert np.array_equal(Y[:, chi == 1.0], W[:, chi == 1.0])
    assert np.array_equal(Y[:, chi == 0.0], Z[:, chi == 0.0])
    c = commutator(A, chi[1:-1], W[:, 1:-1])
    xi = g.x_inner
    outside = (xi < 0.38 - 2 * g.h) | (xi > 0.52 + 2 * g.h)
    assert np.max(np.abs(c[:, outside])) == 0.0
    y0 = fill_boundary(rng.normal(size=(1, 30)), bc)
    Y0, _, _, _ = glue_fields(y0, y0, np.zeros((1, 30)), np.zeros((1, 30)), chi, A, bc)
    assert np.array_equal(Y0, y0)


@pytest.mark.parametrize("alphas", [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)])
def test_glue_classes(alphas):
    a = prototype_coefficient(alphas[0], alphas[1], "both")
    x = np.linspace(0, 1, 62)[1:-1]
    U, y, plan = glue_double_degenerate(np.sin(np.pi * x), a, OMEGA, N=60, M=80)
    d = plan.diagnostics
    assert d["class"] == a.double_class
    assert d["composite_residual"] <= 10 * d["single_residual"]
    assert max(d["boundary_defects"]) <= 1e-12
    assert d["control_outside_omega"] == 0.0
    assert d["terminal_norm"] < 1e-2 * np.sqrt(np.mean(np.sin(np.pi * x) ** 2))


def test_glue_needs_both_sides():
    a = prototype_coefficient(0.5, 0.0, "left")
    from degmem.errors import ConfigurationError
    with pytest.raises(ConfigurationError):
        glue_double_degenerate(np.zeros(20), a, OMEGA, N=20, M=10)
