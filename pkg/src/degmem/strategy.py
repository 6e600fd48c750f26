"""Two-phase control for rough initial data and cutoff gluing for double degeneracy."""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .coeffs import d_star
from .control import PenaltyConfig, default_s
from .errors import ConfigurationError, GeometryError
from .kernel import zero_kernel
from .memory import FixedPointConfig, fixed_point_solve
from .pde import (History, Trajectory, _interior, assemble_operator, default_bc, fill_boundary,
                  make_grid, memory_source, solve_forward_with_memory)
from .weights import build_weights, choose_gamma_d


def h1a_seminorm(values, grid):
    """Discrete ``int a w_x^2`` of full slices (last axis includes boundary slots)."""
    dw = np.diff(values, axis=-1) / grid.h
    return grid.h * np.sum(grid.a_half * dw ** 2, axis=-1)


def select_tstar(phase1, a=None, T=None):
    """Node in ``[T/4, T/2)`` minimizing the discrete H_a^1 seminorm; earliest on ties.

    ``phase1`` covers ``[0, T/2]``; ``T`` defaults to twice its horizon.
    Returns ``(t_star, index)``.
    """
    g = phase1.grid
    T = 2.0 * g.T if T is None else T
    t = g.t
    idx = np.flatnonzero((t >= 0.25 * T - 1e-12 * T) & (t < 0.5 * T - 1e-12 * T))
    if idx.size == 0:
        raise ConfigurationError("phase-1 grid has no node in [T/4, T/2)")
    sn = h1a_seminorm(phase1.values[idx], g)
    j = int(idx[np.argmin(sn)])
    return float(t[j]), j


@dataclass
class TwoPhasePlan:
    t_star: float
    n_star: int
    phase1: Trajectory
    phase2: object
    weights2: object
    cfg2: PenaltyConfig
    u: np.ndarray
    y: Trajectory
    terminal_norm: float


def two_phase_control(y0, b, a, w, cfg_pen, cfg_fp=None, omega=None, N=100, M=200,
                      rescale_s=True, check_kernel=True):
    """Free evolution on ``[0, T/2]``, then controlled memory solve on ``[t*, T]``.

    Phase 2 rebuilds the weights on ``[t*, T]`` (time weight singular at t*
    and T) with the same gamma, d and L. With ``rescale_s`` the Carleman
    parameter is reset to :func:`degmem.control.default_s` of the new
    weights. The phase-2 memory integral includes the phase-1 slices.

    Returns
    -------
    TwoPhasePlan
        ``u`` is the composite control on the global grid (zero up to t*),
        ``y`` the composite trajectory.
    """
    if M % 2:
        raise ConfigurationError("M must be even so that T/2 is a grid node")
    omega = omega or w.omega
    cfg_fp = cfg_fp or FixedPointConfig()
    bc = default_bc(a)
    grid = make_grid(a, N, M, w.T, w.t0)
    grid1 = replace(grid, M=M // 2, T=float(grid.t[M // 2]), t=grid.t[: M // 2 + 1])
    phase1 = solve_forward_with_memory(y0, b, None, grid1, bc, a=a)
    t_star, n_star = select_tstar(phase1, a, T=w.T)
    w_star = phase1.values[n_star]
    w2 = build_weights(w.T, a, w.gamma, w.d, w.L, p=w.p, omega=omega, t0=t_star, side=w.side,
                       mode=w.mode)
    cfg2 = replace(cfg_pen, s=default_s(w2, cfg_pen.k), s_min=0.0) if rescale_s else cfg_pen
    grid2 = replace(grid, M=M - n_star, t0=t_star, t=grid.t[n_star:])
    hist = History(times=phase1.grid.t[: n_star + 1], values=phase1.values[: n_star + 1])
    fp = fixed_point_solve(w_star, b, a, w2, cfg2, cfg_fp, omega, grid=grid2, bc=bc,
                           history=None if b.is_zero else hist, check_kernel=check_kernel)
    res = fp.control
    U = np.zeros((M + 1, N))
    U[n_star + 1:] = res.u[1:]
    Y = np.concatenate([phase1.values[:n_star], res.y.values])
    y = Trajectory(Y, grid, bc)
    return TwoPhasePlan(t_star=t_star, n_star=n_star, phase1=phase1, phase2=fp, weights2=w2,
                        cfg2=cfg2, u=U, y=y, terminal_norm=res.terminal_norm)


# --- gluing -----------------------------------------------------------------
def smoothstep(tau):
    """Quintic ``6 tau^5 - 15 tau^4 + 10 tau^3`` on [0, 1], clamped outside (C^2)."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (tau * (6.0 * tau - 15.0) + 10.0)


def cutoff(x, lam_pp, beta_pp):
    """chi = 1 on ``x <= lam_pp``, 0 on ``x >= beta_pp``, smooth monotone in between."""
    return 1.0 - smoothstep((np.asarray(x, dtype=float) - lam_pp) / (beta_pp - lam_pp))


@dataclass
class GluePlan:
    lambda_p: float
    beta_p: float
    lambda_pp: float
    beta_pp: float
    chi: np.ndarray
    left: Optional[TwoPhasePlan] = None
    right: Optional[TwoPhasePlan] = None
    j_lambda_p: int = 0
    j_beta_p: int = 0
    diagnostics: dict = field(default_factory=dict)


def nested_points(x, omega):
    """Grid-aligned ``lambda' < l < lambda'' < beta'' < r < beta'``.

    ``lambda''`` and ``beta''`` sit a quarter of ω inside it, ``lambda'``
    and ``beta'`` half of ω outside it (within the open unit interval).
    Returns the node indices ``(j_lp, j_lpp, j_bpp, j_bp)``.

    Raises
    ------
    GeometryError
        When the grid or the domain leaves no room for strict nesting.
    """
    lo, hi = omega
    if not (x[0] < lo < hi < x[-1]):
        raise GeometryError(f"omega {omega} must lie strictly inside the domain")
    width = hi - lo
    inside = np.flatnonzero((x > lo) & (x < hi))
    if inside.size < 4:
        raise GeometryError(f"omega {omega} holds {inside.size} nodes; need at least 4")
    j_lpp = int(np.searchsorted(x, lo + 0.25 * width))
    j_bpp = int(np.searchsorted(x, hi - 0.25 * width, side="right")) - 1
    j_lpp = max(j_lpp, inside[0])
    j_bpp = min(j_bpp, inside[-1])
    if j_bpp - j_lpp < 1:
        raise GeometryError(f"omega {omega} too narrow for the cutoff transition")
    j_lp = int(np.searchsorted(x, max(lo - 0.5 * width, 0.5 * (x[0] + lo)))) - 1
    j_bp = int(np.searchsorted(x, min(hi + 0.5 * width, 0.5 * (hi + x[-1])), side="right"))
    j_lp = min(j_lp, int(np.searchsorted(x, lo)) - 1)
    j_bp = max(j_bp, int(np.searchsorted(x, hi, side="right")))
    if j_lp < 2 or j_bp > x.size - 3:
        raise GeometryError(f"no room between omega {omega} and the domain ends")
    return j_lp, j_lpp, j_bpp, j_bp


def commutator(A, chi, W):
    """Discrete ``A(chi w) - chi A w`` for interior slices ``W`` (rows are time)."""
    return (A @ (chi[:, None] * W.T)).T - chi * (A @ W.T).T


def glue_fields(Wt, Zt, U1, U2, chi_full, A, bc):
    """Compose full-slice fields; returns ``(y_full, u, comm_w, comm_z)``.

    ``y = chi w + (1 - chi) z`` (exactly ``w`` where chi = 1 and ``z`` where
    chi = 0) and ``u = chi u1 + (1 - chi) u2 - [A, chi] w + [A, chi] z``.
    """
    Y = np.where(chi_full == 1.0, Wt, np.where(chi_full == 0.0, Zt, Zt + chi_full * (Wt - Zt)))
    chi = chi_full[1:-1]
    cw = commutator(A, chi, Wt[:, 1:-1])
    cz = commutator(A, chi, Zt[:, 1:-1])
    U = chi * U1 + (1.0 - chi) * U2 - cw + cz
    return Y, U, cw, cz


def pde_residual(traj, u, b, A, omega=None, history=None):
    """Max-norm IE residual ``(y^{n+1}-y^n)/dt - A y^{n+1} - mem^n - 1_ω u^{n+1}``."""
    g = traj.grid
    Yi = traj.inner
    R = (Yi[1:] - Yi[:-1]) / g.dt - (A @ Yi[1:].T).T - _interior(u, g)[1:]
    if not b.is_zero:
        R -= np.array([memory_source(b, traj, n, history) for n in range(g.M)])
    return float(np.max(np.abs(R)))


def boundary_defects(traj, bc):
    """Max Dirichlet value or discrete flux at each end, over all slices."""
    g = traj.grid
    V = traj.values
    out = []
    for end, kind, i0, i1, ah in (("left", bc.left, 0, 1, g.a_half[0]),
                                  ("right", bc.right, -1, -2, g.a_half[-1])):
        if kind == "flux":
            out.append(float(np.max(np.abs(ah * (V[:, i1] - V[:, i0]) / g.h))))
        else:
            out.append(float(np.max(np.abs(V[:, i0]))))
    return tuple(out)


def _sub_weights(a_sub, T, L, p, omega, side):
    ds = d_star(a_sub, side=side)
    gamma, d = choose_gamma_d(ds, L, "fixed_point")
    return build_weights(T, a_sub, gamma, d, L, p=p, omega=omega, side=side, mode="fixed_point")


def glue_double_degenerate(y0, a, omega, T=1.0, L=1.2, p=4, k=0.0, epsilon=1e-8, b=None,
                           N=100, M=200, cfg_fp=None, log_clamp=8.0):
    """Null control for a coefficient degenerate at both ends by cutoff gluing.

    Solves a left-degenerate problem on ``(0, beta')`` and a right-degenerate
    one on ``(lambda', 1)`` with :func:`two_phase_control`, extends both by
    zero, and glues them with a cutoff whose transition lies in ω.

    Returns
    -------
    (u, y, plan)
        Composite control and trajectory on the global grid and the
        :class:`GluePlan` with sub-results and residual diagnostics.
    """
    if a.degeneracy_side != "both":
        raise ConfigurationError("gluing needs a coefficient degenerate at both ends")
    b = b or zero_kernel()
    grid = make_grid(a, N, M, T)
    x = grid.x
    j_lp, j_lpp, j_bpp, j_bp = nested_points(x, omega)
    lam_p, lam_pp, bet_pp, bet_p = x[j_lp], x[j_lpp], x[j_bpp], x[j_bp]
    chi_full = cutoff(x, lam_pp, bet_pp)
    bc = default_bc(a)
    y0f = np.asarray(y0, dtype=float)
    if y0f.shape[-1] == N:
        y0f = fill_boundary(y0f, bc)

    a1 = a.restricted(x[0], bet_p)
    a2 = a.restricted(lam_p, x[-1])
    w1 = _sub_weights(a1, T, L, p, omega, "left")
    w2 = _sub_weights(a2, T, L, p, omega, "right")
    cfg1 = PenaltyConfig(s=default_s(w1, k), k=k, epsilon=epsilon, log_clamp=log_clamp)
    cfg2 = PenaltyConfig(s=default_s(w2, k), k=k, epsilon=epsilon, log_clamp=log_clamp)
    N1, N2 = j_bp - 1, N - j_lp
    left = two_phase_control(y0f[1:j_bp], b, a1, w1, cfg1, cfg_fp, omega, N=N1, M=M)
    right = two_phase_control(y0f[j_lp + 1:-1], b, a2, w2, cfg2, cfg_fp, omega, N=N2, M=M)

    Wt = np.zeros((M + 1, N + 2))
    Zt = np.zeros((M + 1, N + 2))
    Wt[:, : j_bp + 1] = left.y.values
    Zt[:, j_lp:] = right.y.values
    U1 = np.zeros((M + 1, N))
    U2 = np.zeros((M + 1, N))
    U1[:, : N1] = left.u
    U2[:, j_lp:] = right.u
    A = assemble_operator(a, grid, bc)
    Y, U, cw, cz = glue_fields(Wt, Zt, U1, U2, chi_full, A, bc)
    y = Trajectory(Y, grid, bc)
    single = solve_forward_with_memory(y0f, b, U, grid, bc, a=a, omega=omega)
    plan = GluePlan(lambda_p=lam_p, beta_p=bet_p, lambda_pp=lam_pp, beta_pp=bet_pp,
                    chi=chi_full, left=left, right=right, j_lambda_p=j_lp, j_beta_p=j_bp)
    mask = grid.mask(omega)
    plan.diagnostics = {
        "composite_residual": pde_residual(y, U, b, A),
        "single_residual": pde_residual(single, U, b, A),
        "boundary_defects": boundary_defects(y, bc),
        "control_outside_omega": float(np.max(np.abs(U[:, ~mask]))) if (~mask).any() else 0.0,
        "terminal_norm": float(np.sqrt(grid.h * np.sum(Y[-1, 1:-1] ** 2))),
        "single_terminal_norm": float(np.sqrt(grid.h * np.sum(single.values[-1, 1:-1] ** 2))),
        "class": a.double_class,
    }
    return U, y, plan
