import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degmem.coeffs import prototype_coefficient
from degmem.errors import ConfigurationError
from degmem.kernel import constant_kernel, zero_kernel, KernelSpec
from degmem.pde import (DIRICHLET, FLUX, BoundaryCondition, SourceSpec, Trajectory,
                        assemble_operator, default_bc, energy_ratio, fill_boundary,
                        inner_product, make_grid, memory_source, solve_adjoint, solve_forward,
                        solve_forward_with_memory, weighted_norms, write_trajectory)

from conftest import make_weights

ONE = prototype_coefficient(0.0, 0.0, "none")
DIR = BoundaryCondition(DIRICHLET, DIRICHLET)


def manufactured_error(N, M, scheme="implicit_euler"):
    g = make_grid(ONE, N, M, 1.0)
    f = lambda t, x: (np.pi ** 2 - 1) * np.exp(-t) * np.sin(np.pi * x)
    y = solve_forward(np.sin(np.pi * g.x), SourceSpec(f=f), g, DIR, a=ONE, scheme=scheme)
    exact = np.exp(-1.0) * np.sin(np.pi * g.x)
    return np.max(np.abs(y.terminal - exact))


def orders(errs):
    return [np.log2(e1 / e2) for e1, e2 in zip(errs, errs[1:])]


def test_smallest_eigenvalue():
    g = make_grid(ONE, 200, 1, 1.0)
    A = assemble_operator(ONE, g, DIR).toarray()
    lam = np.max(np.linalg.eigvalsh(A))
    assert abs(lam + np.pi ** 2) <= 0.01 * np.pi ** 2


def test_symmetry_exact():
    for a in (prototype_coefficient(0.5, 0, "left"), prototype_coefficient(1.5, 1.5, "both")):
        g = make_grid(a, 40, 1, 1.0)
        A = assemble_operator(a, g, default_bc(a)).toarray()
        assert np.max(np.abs(A - A.T)) == 0.0
        assert np.max(np.linalg.eigvalsh(A)) <= 1e-10


def test_sd_first_row_has_no_boundary_flux():
    a = prototype_coefficient(1.5, 0, "left")
    g = make_grid(a, 20, 1, 1.0)
    A = assemble_operator(a, g, default_bc(a)).toarray()
    assert A[0, 0] == pytest.approx(-g.a_half[1] / g.h ** 2)
    assert A[0, 0] + A[0, 1] == 0.0


def test_bc_mismatch_rejected():
    sd = prototype_coefficient(1.5, 0, "left")
    wd = prototype_coefficient(0.5, 0, "left")
    g = make_grid(sd, 10, 1, 1.0)
    with pytest.raises(ConfigurationError):
        assemble_operator(sd, g, DIR)
    with pytest.raises(ConfigurationError):
        assemble_operator(wd, g, BoundaryCondition(FLUX, DIRICHLET))


def test_zero_data_zero_solution():
    a = prototype_coefficient(0.5, 0, "left")
    g = make_grid(a, 20, 10, 1.0)
    bc = default_bc(a)
    assert not np.any(solve_forward(np.zeros(20), SourceSpec(), g, bc, a=a).values)
    assert not np.any(solve_adjoint(np.zeros(20), None, g, bc, a=a).values)


def test_temporal_order():
    errs = [manufactured_error(400, M) for M in (10, 20, 40, 80)]
    assert min(orders(errs)) >= 0.9


def test_spatial_order():
    errs = [manufactured_error(N, 400, "crank_nicolson") for N in (9, 19, 39, 79)]
    assert min(orders(errs)) >= 1.9


def test_positivity(rng):
    a = prototype_coefficient(0.5, 0, "left")
    g = make_grid(a, 50, 40, 1.0)
    for _ in range(10):
        y = solve_forward(rng.uniform(size=50), SourceSpec(), g, default_bc(a), a=a)
        assert np.all(y.values >= 0)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_duality(alpha, rng):
    a = prototype_coefficient(alpha, 0, "left")
    g = make_grid(a, 30, 30, 1.0)
    bc = default_bc(a)
    y0, vT = rng.normal(size=30), rng.normal(size=30)
    F = rng.normal(size=(31, 30))
    G = rng.normal(size=(31, 30))
    y = solve_forward(y0, F, g, bc, a=a).inner
    v = solve_adjoint(vT, G, g, bc, a=a).inner
    lhs = inner_product(vT, y[-1], g) + g.dt * np.sum(inner_product(G[1:], y[1:], g))
    rhs = inner_product(v[0], y0, g) + g.dt * np.sum(inner_product(v[:-1], F[1:], g))
    assert abs(lhs - rhs) <= 1e-10 * (abs(lhs) + abs(rhs))


def test_adjoint_constant_source_series():
    N, M, T = 200, 2000, 0.5
    g = make_grid(ONE, N, M, T)
    v = solve_adjoint(np.zeros(N), np.ones((M + 1, N)), g, DIR, a=ONE)
    x = g.x
    exact = np.zeros_like(x)
    for k in range(1, 400, 2):
        lam = (k * np.pi) ** 2
        exact += 4 / (k * np.pi) / lam * (1 - np.exp(-lam * T)) * np.sin(k * np.pi * x)
    assert np.max(np.abs(v.values[0] - exact)) <= 1e-3


def test_sd_flux_zero_every_step(rng):
    a = prototype_coefficient(1.5, 0, "left")
    g = make_grid(a, 40, 20, 1.0)
    y = solve_forward(rng.normal(size=40), rng.normal(size=(21, 40)), g, default_bc(a), a=a)
    flux = g.a_half[0] * (y.values[:, 1] - y.values[:, 0]) / g.h
    assert np.max(np.abs(flux)) <= 1e-12


def test_stability_bound(rng):
    a = prototype_coefficient(0.5, 0, "left")
    g = make_grid(a, 30, 15, 1.0)
    F = rng.normal(size=(16, 30))
    y = solve_forward(rng.normal(size=30), F, g, default_bc(a), a=a).inner
    nrm = lambda v: np.sqrt(inner_product(v, v, g))
    for n in range(15):
        assert nrm(y[n + 1]) <= nrm(y[n]) + g.dt * nrm(F[n + 1]) + 1e-12


def _traj(values, grid):
    return Trajectory(fill_boundary(values, DIR), grid, DIR)


def test_memory_source_trapezoid():
    g = make_grid(ONE, 5, 10, 1.0)
    W = _traj(np.ones((11, 5)), g)
    one = constant_kernel(1.0)
    lin = KernelSpec(evaluator=lambda t, s, x: s + 0 * x, label="s")
    assert not np.any(memory_source(zero_kernel(), W, 7))
    assert np.allclose(memory_source(one, W, 7), g.t[7], rtol=0, atol=1e-14)
    assert np.allclose(memory_source(lin, W, 7), g.t[7] ** 2 / 2, rtol=0, atol=1e-14)


def test_memory_causality(rng):
    g = make_grid(ONE, 6, 10, 1.0)
    V = rng.normal(size=(11, 6))
    V2 = V.copy()
    V2[5:] = rng.normal(size=(6, 6))
    b = KernelSpec(evaluator=lambda t, s, x: np.exp(-(t - s)) * (1 + x), label="exp")
    assert np.array_equal(memory_source(b, _traj(V, g), 4), memory_source(b, _traj(V2, g), 4))


def test_memory_free_bitwise(rng):
    a = prototype_coefficient(0.5, 0, "left")
    g = make_grid(a, 20, 10, 1.0)
    bc = default_bc(a)
    y0 = rng.normal(size=20)
    U = rng.normal(size=(11, 20))
    y1 = solve_forward(y0, SourceSpec(u=U, omega=(0.3, 0.6)), g, bc, a=a)
    y2 = solve_forward_with_memory(y0, zero_kernel(), U, g, bc, a=a, omega=(0.3, 0.6))
    assert np.array_equal(y1.values, y2.values)


def test_control_without_omega_rejected():
    g = make_grid(ONE, 5, 2, 1.0)
    with pytest.raises(ConfigurationError):
        SourceSpec(u=np.ones((3, 5))).field(g)


def test_gronwall_envelope():
    a = prototype_coefficient(0.5, 0, "left")
    g = make_grid(a, 40, 40, 1.0)
    c = 0.5
    y0 = np.sin(np.pi * g.x_inner)
    y = solve_forward_with_memory(y0, constant_kernel(c), None, g, default_bc(a), a=a)
    norms = np.sqrt(inner_product(y.inner, y.inner, g))
    assert np.max(norms) <= norms[0] * np.exp(c * g.T * g.T)


def test_energy_ratio_stable(rng):
    a = prototype_coefficient(0.5, 0, "left")
    ratios = []
    for N, M in ((40, 40), (80, 80)):
        g = make_grid(a, N, M, 1.0)
        x = g.x_inner
        y0 = np.sin(np.pi * x) + 0.5 * np.sin(2 * np.pi * x)
        F = np.outer(np.cos(g.t), np.sin(3 * np.pi * x))
        y = solve_forward_with_memory(y0, constant_kernel(0.3), None, g, default_bc(a), a=a,
                                      f=F)
        ratios.append(energy_ratio(y, y0, F))
    assert abs(ratios[1] - ratios[0]) <= 0.1 * ratios[0]


def test_weighted_norms_basic(rng):
    a, w = make_weights(0.5)
    g = make_grid(a, 20, 20, 1.0)
    zero = weighted_norms(_traj(np.zeros((21, 20)), g), w, 1e-3, 0)
    assert zero.esk == 0 and zero.l2_Q == 0 and zero.terminal == 0
    Y = rng.normal(size=(21, 20))
    r1 = weighted_norms(_traj(Y, g), w, 1e-3, 0)
    r3 = weighted_norms(_traj(3 * Y, g), w, 1e-3, 0)
    assert r3.esk == pytest.approx(9 * r1.esk, rel=1e-12)


def test_weighted_norm_divergence_flag():
    a, w = make_weights(0.5)
    for M in (20, 200, 2000):
        g = make_grid(a, 10, M, 1.0)
        Y = np.ones((M + 1, 10))
        assert weighted_norms(_traj(Y, g), w, 1e-3, 0).divergent
        Y[-1] = 0.0
        assert not weighted_norms(_traj(Y, g), w, 1e-3, 0).divergent


def test_write_trajectory(tmp_path):
    g = make_grid(ONE, 4, 3, 1.0)
    path = tmp_path / "y.csv"
    write_trajectory(path, _traj(np.ones((4, 4)), g), {"run": "x"})
    assert np.loadtxt(path, delimiter=",").shape == (4 * 6, 3)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), alpha=st.sampled_from([0.5, 1.0, 1.5]))
def test_operator_adjoint_identity(seed, alpha):
    r = np.random.default_rng(seed)
    a = prototype_coefficient(alpha, 0, "left")
    g = make_grid(a, 25, 1, 1.0)
    A = assemble_operator(a, g, default_bc(a))
    y, v = r.normal(size=25), r.normal(size=25)
    assert np.dot(A @ y, v) == pytest.approx(np.dot(y, A @ v), rel=1e-12, abs=1e-9)
