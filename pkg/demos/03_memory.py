"""Null control with a memory term by Picard iteration.

A kernel decaying fast enough near the final time passes the admissibility
test and the fixed-point loop converges in a few sweeps; a constant kernel
is rejected before any solve.
"""

import numpy as np

from degmem import FixedPointConfig, PenaltyConfig, build_weights, d_star, default_s
from degmem import fixed_point_solve, kernel_admissible, make_grid, prototype_coefficient
from degmem import solve_forward_with_memory, default_bc
from degmem.kernel import constant_kernel, decaying_kernel
from degmem.memory import admissible_decay_M
from degmem.weights import choose_gamma_d

omega = (0.3, 0.6)
a = prototype_coefficient(0.5, 0.0, "left")
gamma, d = choose_gamma_d(d_star(a), 1.2, "fixed_point")
w = build_weights(1.0, a, gamma, d, 1.2, omega=omega, mode="fixed_point")
cfg = PenaltyConfig(s=default_s(w))
grid = make_grid(a, 100, 200, 1.0)
y0 = grid.x_inner * (1 - grid.x_inner)

M = admissible_decay_M(w, cfg.s)
for b in (constant_kernel(1.0), decaying_kernel(1.0, 2 * M, 1.0), decaying_kernel(50.0, 2 * M, 1.0)):
    rep = kernel_admissible(b, w, cfg.s, 0.0, grid)
    print(f"\n{b.label}: admissible={rep.passed} margin={rep.margin:.1f}")
    if not rep.passed:
        continue
    fp = fixed_point_solve(y0, b, a, w, cfg, FixedPointConfig(picard_tol=1e-10), omega, grid=grid)
    for it, res, term, cg in fp.log:
        print(f"  iter {it}: residual {res:.2e}  |y(T)| {term:.3e}  CG {cg}")
    y = solve_forward_with_memory(y0, b, fp.control.u, grid, default_bc(a), a=a, omega=omega)
    err = np.max(np.abs(y.values - fp.control.y.values)) / np.max(np.abs(y.values))
    print(f"  substitution check {err:.1e}, empirical C_T {fp.C_T:.3e}")
    print(f"  smallness lhs {fp.smallness_lhs:.3e} (holds: {fp.smallness_holds})")
