"""Carleman weights for a weakly degenerate coefficient.

Builds the weights for a(x) = sqrt(x), checks every pointwise inequality
they must satisfy and prints the Hardy-Poincare ratio of a few fields.
"""

import numpy as np

from degmem import build_weights, d_star, hardy_poincare_ratio, prototype_coefficient
from degmem.weights import choose_gamma_d, fixed_point_exponent_chain, verify_weight_inequalities

a = prototype_coefficient(0.5, 0.0, "left")
ds = d_star(a)
print(f"d* = {ds:.12f} (exact 2/3)")

for mode in ("carleman_only", "fixed_point"):
    gamma, d = choose_gamma_d(ds, 1.2, mode)
    w = build_weights(1.0, a, gamma, d, 1.2, p=4, omega=(0.3, 0.6), mode=mode)
    print(f"\n{mode}: gamma = {gamma:.4f}, d = {d:.4f}")
    for r in verify_weight_inequalities(w):
        print(f"  {r.inequality_id:22s} {r.max_violation: .3e}  {'ok' if r.passed else 'FAIL'}")
    if mode == "fixed_point":
        lhs, bound = fixed_point_exponent_chain(w)
        print(f"  exponent chain {lhs:.3f} < {bound:.3f}: {lhs < bound}")

x = np.linspace(0, 1, 801)
print("\nHardy-Poincare ratios")
for name, y in (("x(1-x)", x * (1 - x)), ("sin(pi x)", np.sin(np.pi * x)),
                ("sin(3 pi x)", np.sin(3 * np.pi * x))):
    print(f"  {name:12s} {hardy_poincare_ratio(y, a, x):.6f}")
