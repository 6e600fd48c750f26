"""Penalized weighted null control without memory.

Drives y0 = x(1-x) towards zero with a control supported in (0.3, 0.6)
and shows how the terminal state shrinks as the penalty epsilon decreases.
"""

import numpy as np

from degmem import PenaltyConfig, build_weights, d_star, default_s, epsilon_sweep, make_grid
from degmem import prototype_coefficient
from degmem.control import control_estimate_ratio
from degmem.weights import choose_gamma_d

omega = (0.3, 0.6)
a = prototype_coefficient(0.5, 0.0, "left")
gamma, d = choose_gamma_d(d_star(a), 1.2, "fixed_point")
w = build_weights(1.0, a, gamma, d, 1.2, omega=omega, mode="fixed_point")
cfg = PenaltyConfig(s=default_s(w))
grid = make_grid(a, 100, 200, 1.0)
y0 = grid.x_inner * (1 - grid.x_inner)
y0n = np.sqrt(grid.h * np.sum(y0 ** 2))

print(f"s = {cfg.s:.3e}, |y0| = {y0n:.4e}")
print(f"{'epsilon':>8s} {'|y(T)|/|y0|':>12s} {'J':>11s} {'CG':>4s} {'est. ratio':>11s}")
for eps, r, status in epsilon_sweep(y0, None, a, w, cfg, omega, [1e-2, 1e-4, 1e-6, 1e-8],
                                    grid=grid):
    ratio = control_estimate_ratio(r, y0, None, w, cfg)
    print(f"{eps:8.0e} {r.terminal_norm / y0n:12.3e} {r.weighted_cost:11.4e} "
          f"{r.cg_iterations:4d} {ratio:11.3e}")

# the control concentrates early and vanishes outside omega
u = r.u
print("\ncontrol energy per quarter of [0, T]:")
for q in np.array_split(np.arange(1, grid.M + 1), 4):
    print(f"  t in [{grid.t[q[0]]:.2f}, {grid.t[q[-1]]:.2f}]: {np.sum(u[q] ** 2) * grid.dt * grid.h:.3e}")
print(f"max |u| outside omega: {np.max(np.abs(u[:, ~grid.mask(omega)])):.1e}")
