from dataclasses import replace

import numpy as np
import pytest

from degmem.control import (ControlProblem, PenaltyConfig, carleman_ratio_monitor, default_s,
                            epsilon_sweep, synthesize_control, control_estimate_ratio,
                            write_history, write_sweep)
from degmem.errors import ConfigurationError, ConvergenceError
from degmem.pde import inner_product, make_grid

from conftest import OMEGA, make_weights


def test_penalty_validation():
    with pytest.raises(ConfigurationError):
        PenaltyConfig(s=1.0, epsilon=0.0)
    with pytest.raises(ConfigurationError):
        PenaltyConfig(s=1.0, k=-1.0)
    with pytest.raises(ConfigurationError):
        PenaltyConfig(s=1.0, s_min=2.0)


def test_zero_data(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 20, 20, 1.0)
    r = synthesize_control(np.zeros(20), None, a, w, cfg, OMEGA, grid=g)
    assert not np.any(r.u) and not np.any(r.y.values) and r.weighted_cost == 0.0
    assert control_estimate_ratio(r, np.zeros(20), None, w, cfg) == 0.0


@pytest.mark.parametrize("eps", [1e-2, 1e-8])
def test_gradient_matches_central_differences(wd_setup, rng, eps):
    a, w, cfg = wd_setup
    cfg = replace(cfg, epsilon=eps)
    g = make_grid(a, 30, 30, 1.0)
    pr = ControlProblem(a, g, w, cfg, OMEGA)
    y0 = rng.normal(size=30)
    f = rng.normal(size=(31, 30))
    J = lambda v: pr.cost(v, pr.forward(v, y0, f))
    for _ in range(5):
        u = rng.normal(size=(30, pr.idx.size))
        du = rng.normal(size=u.shape)
        G, _ = pr.gradient(u, y0, f)
        t = 1e-4 * np.linalg.norm(u) / np.linalg.norm(du)
        fd = (J(u + t * du) - J(u - t * du)) / (2 * t)
        ad = pr.dot(G, du)
        assert abs(fd - ad) <= 1e-5 * abs(ad)


def test_optimality_system(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 30, 40, 1.0)
    y0 = g.x_inner * (1 - g.x_inner)
    pr = ControlProblem(a, g, w, replace(cfg, epsilon=1e-4), OMEGA)
    r = synthesize_control(y0, None, a, w, pr.cfg, OMEGA, problem=pr)
    uc = r.u[1:, pr.idx]
    v = pr.reduce(pr.adjoint_of(r.y))
    assert np.max(np.abs(uc + v / pr.Wu)) <= 1e-6 * np.max(np.abs(uc))


def test_control_vanishes_outside_omega(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 30, 30, 1.0)
    r = synthesize_control(np.sin(np.pi * g.x_inner), None, a, w, cfg, OMEGA, grid=g)
    assert not np.any(r.u[:, ~g.mask(OMEGA)])
    assert np.any(r.u[:, g.mask(OMEGA)])


def test_epsilon_sweep_monotone(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 40, 80, 1.0)
    y0 = g.x_inner * (1 - g.x_inner)
    rows = epsilon_sweep(y0, None, a, w, cfg, OMEGA, [1e-2, 1e-4, 1e-6], grid=g)
    norms = [r.terminal_norm for _, r, _ in rows]
    assert all(st == "ok" for _, _, st in rows)
    assert all(n2 <= n1 for n1, n2 in zip(norms, norms[1:]))
    y0n = np.sqrt(inner_product(y0, y0, g))
    assert norms[-1] <= 1e-2 * y0n


def test_cg_history_residuals_recorded(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 20, 20, 1.0)
    r = synthesize_control(np.ones(20), None, a, w, cfg, OMEGA, grid=g)
    assert r.history[0][0] == 0 and r.history[-1][1] < cfg.cg_tol
    assert r.cg_iterations == len(r.history) - 1


def test_cg_failure_raises(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 20, 20, 1.0)
    with pytest.raises(ConvergenceError) as exc:
        synthesize_control(np.ones(20), None, a, w, replace(cfg, cg_max_iters=1), OMEGA, grid=g)
    assert len(exc.value.history) == 2


def test_without_state_term(wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 20, 40, 1.0)
    c = replace(cfg, include_state_term=False, epsilon=1e-6)
    r = synthesize_control(np.ones(20), None, a, w, c, OMEGA, grid=g)
    assert r.terminal_norm < 1e-2 * np.sqrt(inner_product(np.ones(20), np.ones(20), g))


def test_estimate_ratio_refinement_and_s(wd_setup):
    a, w, cfg = wd_setup
    cfg = replace(cfg, epsilon=1e-6)
    ratios = []
    for N, M in ((60, 120), (120, 240)):
        g = make_grid(a, N, M, 1.0)
        y0 = g.x_inner * (1 - g.x_inner)
        r = synthesize_control(y0, None, a, w, cfg, OMEGA, grid=g)
        ratios.append(control_estimate_ratio(r, y0, None, w, cfg))
    assert abs(ratios[1] - ratios[0]) <= 0.25 * ratios[0]
    by_s = []
    for fct in (1, 2, 4):
        c = replace(cfg, s=fct * cfg.s)
        r = synthesize_control(y0, None, a, w, c, OMEGA, grid=g)
        by_s.append(control_estimate_ratio(r, y0, None, w, c))
    assert by_s[2] <= by_s[1] <= by_s[0]


@pytest.mark.parametrize("p", [2, 4])
def test_monitor_finite_and_decreasing(p):
    a, w = make_weights(0.5, p=p)
    s = default_s(w)
    r1 = carleman_ratio_monitor(w, a, OMEGA, s, n_samples=10)
    r2 = carleman_ratio_monitor(w, a, OMEGA, 2 * s, n_samples=10)
    assert r1.finite() and r2.finite()
    assert set(r1.ratios) == {"classical_k0", "classical_k1", "modified_k0", "modified_k1"}
    assert all(r2.ratios[k] <= r1.ratios[k] for k in r1.ratios)


def test_writers(tmp_path, wd_setup):
    a, w, cfg = wd_setup
    g = make_grid(a, 20, 20, 1.0)
    rows = epsilon_sweep(np.ones(20), None, a, w, cfg, OMEGA, [1e-2, 1e-4], grid=g)
    write_history(tmp_path / "h.csv", rows[0][1])
    write_sweep(tmp_path / "s.csv", rows, {"s": cfg.s})
    assert np.loadtxt(tmp_path / "h.csv", delimiter=",").shape[1] == 4
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[1] == "epsilon,terminal_norm,J,cg_iters,status" and len(lines) == 4
