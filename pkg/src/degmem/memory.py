"""Kernel admissibility, the smallness condition and Picard iteration for the memory system.

The fixed-point map sends a state ``w`` to the penalized controlled solution
of ``y_t - (a y_x)_x = int_0^t b w ds + 1_omega u``; a fixed point solves the
controlled memory equation.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .control import ControlProblem, ControlResult, synthesize_control, control_estimate_ratio
from .errors import ConfigurationError, ConvergenceError, KernelInadmissibleError, RadiusError
from .kernel import KernelSpec, constant_kernel, decaying_kernel, zero_kernel
from .pde import (LOG_CLAMP, _interior, default_bc, make_grid, memory_field, solve_forward,
                  weighted_log_norm, weighted_norms)

__all__ = ["KernelSpec", "FixedPointConfig", "FixedPointResult", "KernelReport",
           "kernel_admissible", "smallness_condition", "smallness_threshold",
           "fixed_point_solve", "weighted_norm_Esk", "admissible_decay_M", "memory_CT",
           "zero_kernel", "constant_kernel", "decaying_kernel"]

REFINE_LEVELS = 20


def admissible_decay_M(w, s):
    """Exponent scale ``(4/(T-t0))^p s gamma d`` of the kernel hypothesis."""
    return (4.0 / (w.T - w.t0)) ** w.p * s * w.gamma * w.d


@dataclass(frozen=True)
class KernelReport:
    passed: bool
    margin: float
    sup_log_G: float
    refined_sup_log_G: float
    worst_t: float

    def as_dict(self):
        return {"passed": self.passed, "margin": self.margin, "sup_log_G": self.sup_log_G,
                "refined_sup_log_G": self.refined_sup_log_G, "worst_t": self.worst_t}


def _log_G(b, w, s, k, t, s_nodes, x):
    """log[(T-t)^{2k} exp(c/(T-t)^p) |b(t, s', x)|], sup over s' <= t and x, per t."""
    c = admissible_decay_M(w, s)
    out = np.empty(t.size)
    for i, ti in enumerate(t):
        sv = s_nodes[s_nodes <= ti]
        lb = b.log_abs_value(ti, sv[:, None], x[None, :])
        mb = float(np.max(lb)) if lb.size else -np.inf
        gap = w.T - ti
        if mb == -np.inf:
            out[i] = -np.inf
        elif gap <= 0:
            out[i] = np.inf
        else:
            out[i] = 2 * k * np.log(gap) + c / gap ** w.p + mb
    return out


def kernel_admissible(b, w, s, k, grid, clamp=LOG_CLAMP):
    """Check the decay hypothesis on the memory kernel.

    Evaluates ``log G`` jointly over the ``(t, s)`` grid (``s <= t``) and at
    refined times ``T - dt 2^{-j}`` near the final time. At ``t = T`` a
    nonzero kernel gives ``G = inf`` and a vanishing one ``G = 0``.
    Passes when ``sup log G < clamp`` and the refined sup does not exceed
    the grid sup. ``margin = clamp - sup log G`` (``inf`` for ``b = 0``).
    """
    if b.is_zero:
        return KernelReport(True, np.inf, -np.inf, -np.inf, float("nan"))
    x = grid.x
    lg = _log_G(b, w, s, k, grid.t, grid.t, x)
    probe = w.T - grid.dt * 0.5 ** np.arange(1, REFINE_LEVELS + 1)
    lp = _log_G(b, w, s, k, probe, grid.t, x)
    base = float(np.max(lg))
    refined = float(np.max(lp))
    sup = max(base, refined)
    i = int(np.argmax(lg))
    passed = bool(np.isfinite(sup) and sup < clamp and refined <= base)
    return KernelReport(passed, float(clamp - sup), base, refined, float(grid.t[i]))


def smallness_condition(s, k, gamma, d_star, T, C_emp, p=4, t0=0.0):
    """``C s^{-k} exp(-s gamma (2/(T-t0))^{2p} d*)`` and whether it is <= 1/2."""
    lhs = float(C_emp) * s ** (-k) * np.exp(-s * gamma * (2.0 / (T - t0)) ** (2 * p) * d_star)
    return bool(lhs <= 0.5 * (1 + 1e-12)), lhs


def smallness_threshold(s0, k, gamma, d_star, T, C_emp, p=4, max_multiple=10 ** 6):
    """Smallest integer ``m`` such that the condition holds at ``s = m s0`` (None if not found)."""
    for m in range(1, max_multiple + 1):
        if smallness_condition(m * s0, k, gamma, d_star, T, C_emp, p)[0]:
            return m
    return None


def weighted_norm_Esk(y, w, s, k, clamp=LOG_CLAMP):
    """Squared E_{s,k} norm of a trajectory (see :func:`degmem.pde.weighted_norms`)."""
    return weighted_norms(y, w, s, k, clamp).esk


def memory_CT(W, F, w, grid, s, k, clamp=LOG_CLAMP):
    """Empirical C_T in ∬ (s beta)^{-k} e^{-2 s Phi} (int b w)^2 <= C_T s^{-k} ∬ w^2."""
    t = grid.t[1:]
    lf = np.clip(w.log_weight(t, grid.x_inner, s, k, "Phi", -1.0), -clamp, clamp)
    Fi = _interior(F, grid)[1:]
    Wi = _interior(W, grid)[1:]
    with np.errstate(divide="ignore"):
        num = logsumexp(lf + 2 * np.log(np.abs(Fi))) if np.any(Fi) else -np.inf
        den = -k * np.log(s) + np.log(np.sum(Wi ** 2)) if np.any(Wi) else -np.inf
    if num == -np.inf:
        return 0.0
    with np.errstate(over="ignore"):
        return float(np.exp(num - den))


@dataclass(frozen=True)
class FixedPointConfig:
    """``R``: radius of the invariant ball; ``relax``: Picard damping in (0, 1]."""

    R: float = np.inf
    max_iters: int = 20
    picard_tol: float = 1e-6
    relax: float = 1.0
    auto_damping: bool = True

    def __post_init__(self):
        if not self.R > 0 or not self.picard_tol > 0:
            raise ConfigurationError("R and picard_tol must be positive")
        if not 0 < self.relax <= 1:
            raise ConfigurationError("relax must lie in (0, 1]")


@dataclass
class FixedPointResult:
    control: ControlResult
    iterations: int
    residuals: list
    log: list = field(default_factory=list)
    monotone: bool = True
    C_T: float = float("nan")
    control_bound_ratio: float = float("nan")
    smallness_lhs: float = float("nan")
    smallness_holds: bool = False
    kernel: Optional[KernelReport] = None


def _log_rel(Ynew, Yold, w, grid, s, k):
    num = weighted_log_norm(Ynew - Yold, w, grid, s, k)
    den = weighted_log_norm(Ynew, w, grid, s, k)
    if num == -np.inf:
        return 0.0
    if den == -np.inf:
        return np.inf
    return float(np.exp(0.5 * (num - den)))


def fixed_point_solve(y0, b, a, w, cfg_pen, cfg_fp, omega, grid=None, N=100, M=200, bc=None,
                      history=None, check_kernel=True, problem=None):
    """Picard iteration for the controlled memory system.

    ``w^0`` is the uncontrolled memory-free solution. Each step freezes the
    memory forcing ``int_0^t b w^n ds``, synthesizes the penalized control
    for it and relaxes ``w^{n+1} = (1 - relax) w^n + relax y^n``. The
    residual is the relative E_{s,k} distance between ``y^n`` and ``w^n``.
    ``history`` (a :class:`degmem.pde.History`) prepends earlier slices to
    the memory integral.

    Returns
    -------
    FixedPointResult

    Raises
    ------
    KernelInadmissibleError
        When ``check_kernel`` is set and the kernel fails the decay test.
    RadiusError
        If an iterate leaves the ball of radius ``R``.
    ConvergenceError
        If ``max_iters`` is exceeded.
    """
    bc = bc or default_bc(a)
    if problem is None:
        grid = grid or make_grid(a, N, M, w.T, w.t0)
        problem = ControlProblem(a, grid, w, cfg_pen, omega, bc=bc)
    grid = problem.grid
    s, k = cfg_pen.s, cfg_pen.k
    krep = None
    if check_kernel:
        krep = kernel_admissible(b, w, s, k, grid)
        if not krep.passed:
            raise KernelInadmissibleError(f"kernel fails the decay test (margin {krep.margin})")
    W = solve_forward(y0, np.zeros((grid.M + 1, grid.N)), grid, bc,
                      stepper=problem.stepper).inner
    relax = cfg_fp.relax
    residuals = []
    log = []
    F_prev = None
    res = None
    u_prev = None
    log_R2 = 2 * np.log(cfg_fp.R) if np.isfinite(cfg_fp.R) else np.inf
    converged = False
    it = 0
    while it < cfg_fp.max_iters:
        F = memory_field(b, W, grid, history)
        if F_prev is not None and np.array_equal(F, F_prev):
            residuals.append(0.0)
            log.append((it + 1, 0.0, res.terminal_norm, 0))
            converged = True
            break
        it += 1
        res = synthesize_control(y0, None if b.is_zero else F, a, w, cfg_pen, omega,
                                 problem=problem, u_init=u_prev)
        u_prev = res.u
        Y = res.y.inner
        r = _log_rel(Y, W, w, grid, s, k)
        residuals.append(r)
        log.append((it, r, res.terminal_norm, res.cg_iterations))
        if cfg_fp.auto_damping and len(residuals) > 1 and r > residuals[-2] and relax > 0.5:
            relax = 0.5
        W_next = (1.0 - relax) * W + relax * Y
        if weighted_log_norm(W_next, w, grid, s, k) > log_R2:
            raise RadiusError(
                f"iterate left the ball of radius {cfg_fp.R}; increase R or s", residuals)
        F_prev = F
        W = W_next
        if r < cfg_fp.picard_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"Picard iteration not converged after {cfg_fp.max_iters} iterations", residuals)
    tail = residuals[3:]
    monotone = all(x2 <= x1 for x1, x2 in zip(tail, tail[1:]))
    F_last = memory_field(b, W, grid, history)
    ratio = control_estimate_ratio(res, y0, None if b.is_zero else F_last, w, cfg_pen)
    res.estimate_ratio = ratio
    holds, lhs = smallness_condition(s, k, w.gamma, w.d_star, w.T,
                                     ratio if np.isfinite(ratio) else 1.0, w.p, w.t0)
    return FixedPointResult(control=res, iterations=it, residuals=residuals, log=log,
                            monotone=monotone, C_T=memory_CT(W, F_last, w, grid, s, k),
                            control_bound_ratio=control_bound_ratio(res, y0, w, cfg_pen,
                                                                    cfg_fp.R),
                            smallness_lhs=lhs, smallness_holds=holds, kernel=krep)


def control_bound_ratio(res, y0, w, cfg, R):
    """∬_ω (s beta)^{-(k+3)} e^{-2 s sigma} u^2 divided by
    e^{2 s [Phi_hat(t0) - Phi*(5T/8)]} (R^2 + s^{-k} e^{-2 s Phi_hat(t0)} ||y0||^2).

    Zero when ``R`` is infinite.
    """
    if not np.isfinite(R):
        return 0.0
    grid = res.y.grid
    s, k = cfg.s, cfg.k
    mask = grid.mask(res.omega)
    lu = np.clip(w.log_weight(grid.t[1:], grid.x_inner[mask], s, k + 3, "sigma", -1.0),
                 -LOG_CLAMP, LOG_CLAMP)
    U = _interior(res.u, grid)[1:, mask]
    if not np.any(U):
        return 0.0
    with np.errstate(divide="ignore"):
        lhs = logsumexp(lu + 2 * np.log(np.abs(U))) + np.log(grid.dt * grid.h)
    y0i = _interior(y0, grid)
    ph0 = float(w.phi_hat(w.t0))
    y0n = float(np.sum(y0i ** 2) * grid.h)
    with np.errstate(divide="ignore"):
        data = np.logaddexp(2 * np.log(R), -k * np.log(s) - 2 * s * ph0 + np.log(y0n))
    rhs = 2 * s * (ph0 - float(w.phi_star(w.t_58))) + data
    return float(np.exp(lhs - rhs))


def write_iteration_log(path, fp):
    """Iteration log: iter, E_{s,k} residual, terminal norm, CG iterations."""
    np.savetxt(path, np.array(fp.log, dtype=float), delimiter=",",
               header="iter,esk_residual,terminal_norm,cg_iters", comments="# ")
