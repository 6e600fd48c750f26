"""Weighted penalized null-control synthesis and empirical Carleman monitors.

The control minimizes

    J_eps(u) = 1/2 ∬_ω W_u u^2 + 1/2 ∬ W_y y^2 + (1/2 eps) ||y(T)||^2

over the implicit-Euler dynamics, with W_u = (s beta)^{-(k+3)} e^{-2 s sigma}
and W_y = (s beta)^{-k} e^{-2 s sigma}. The weights are divided by the
minimum of W_u over the control region and capped at ``exp(log_clamp)``
(see :class:`PenaltyConfig`), which keeps the quadratic well conditioned
while leaving its minimizer qualitatively unchanged.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, ConvergenceError
from .pde import (LOG_CLAMP, SourceSpec, Stepper, Trajectory, _interior, assemble_operator,
                  default_bc, fill_boundary, inner_product, make_grid, solve_adjoint,
                  solve_forward, weighted_log_norm)


@dataclass(frozen=True)
class PenaltyConfig:
    """Parameters of the penalized functional and of its CG solver.

    ``log_clamp`` caps the normalized log-weights (``LOG_CLAMP`` reproduces
    the raw ``±700`` clamp). ``s_min`` is the declared lower bound for ``s``.
    """

    s: float
    k: float = 0.0
    epsilon: float = 1e-8
    cg_tol: float = 1e-10
    cg_max_iters: int = 2000
    log_clamp: float = 8.0
    include_state_term: bool = True
    s_min: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.k < 0:
            raise ConfigurationError("k must be nonnegative")
        if not self.s > 0 or self.s < self.s_min:
            raise ConfigurationError(f"s = {self.s} below declared minimum {self.s_min}")


def default_s(w, k=0.0):
    """Heuristic Carleman parameter (k + 3) / (2 |Psi|_min beta(t0)).

    At this value the control weight (s beta)^{-(k+3)} e^{-2 s sigma} is
    stationary in s on the plateau, which keeps its dynamic range moderate.
    """
    return (k + 3.0) / (2.0 * abs(w.Psi_max()) * w.beta0)


@dataclass
class ControlResult:
    u: np.ndarray
    y: Trajectory
    terminal_norm: float
    weighted_cost: float
    cg_iterations: int
    estimate_ratio: float = float("nan")
    history: list = field(default_factory=list)
    omega: tuple = None
    converged: bool = True


class ControlProblem:
    """Discrete reduced problem for one (coefficient, grid, weights, penalty) tuple.

    Controls are arrays ``(M, n_omega)``: row ``n`` acts in the step ending
    at ``t_{n+1}``. All inner products carry the quadrature factor ``dt h``.
    """

    def __init__(self, a, grid, w, cfg, omega, bc=None, stepper=None):
        self.a = a
        self.grid = grid
        self.w = w
        self.cfg = cfg
        self.omega = tuple(omega)
        self.bc = bc or default_bc(a)
        self.stepper = stepper or Stepper(assemble_operator(a, grid, self.bc), grid.dt)
        self.mask = grid.mask(omega)
        if not self.mask.any():
            raise ConfigurationError(f"omega {omega} contains no grid node")
        self.idx = np.flatnonzero(self.mask)
        t = grid.t[1:]
        x = grid.x_inner
        lu = w.log_weight(t, x[self.idx], cfg.s, cfg.k + 3, which="sigma", sign=-1.0)
        self.shift = float(np.min(lu))
        self.log_wu = np.clip(lu - self.shift, -LOG_CLAMP, cfg.log_clamp)
        self.Wu = np.exp(self.log_wu)
        if cfg.include_state_term:
            ly = w.log_weight(t, x, cfg.s, cfg.k, which="sigma", sign=-1.0)
            self.Wy = np.exp(np.clip(ly - self.shift, -LOG_CLAMP, cfg.log_clamp))
        else:
            self.Wy = None
        self.scale = grid.dt * grid.h

    # --- maps between reduced controls and full fields ---------------
    def embed(self, uc):
        U = np.zeros((self.grid.M + 1, self.grid.N))
        U[1:, self.idx] = uc
        return U

    def forward(self, uc, y0, f=None):
        F = self.embed(uc)
        if f is not None:
            F = F + _interior(f, self.grid)
        return solve_forward(y0, F, self.grid, self.bc, stepper=self.stepper)

    def adjoint_of(self, y):
        Yi = y.inner
        g = None
        if self.Wy is not None:
            g = np.zeros_like(Yi)
            g[1:] = self.Wy * Yi[1:]
        vT = Yi[-1] / self.cfg.epsilon
        return solve_adjoint(vT, g, self.grid, self.bc, stepper=self.stepper)

    def reduce(self, v):
        return v.inner[:-1, self.idx]

    def dot(self, p, q):
        return self.scale * float(np.sum(p * q))

    # --- functional -------------------------------------------------------
    def cost(self, uc, y):
        Yi = y.inner
        J = 0.5 * self.dot(self.Wu * uc, uc)
        if self.Wy is not None:
            J += 0.5 * self.scale * float(np.sum(self.Wy * Yi[1:] ** 2))
        J += 0.5 * float(inner_product(Yi[-1], Yi[-1], self.grid)) / self.cfg.epsilon
        return J

    def gradient(self, uc, y0, f=None):
        y = self.forward(uc, y0, f)
        return self.Wu * uc + self.reduce(self.adjoint_of(y)), y

    def hessian(self, duc):
        z = np.zeros(self.grid.N)
        y = self.forward(duc, z)
        return self.Wu * duc + self.reduce(self.adjoint_of(y))

    # --- preconditioned conjugate gradient ------------------------------
    def solve(self, y0, f=None, u_init=None):
        """Minimize J_eps; returns ``(u, y, iterations, history, converged)``.

        ``history`` rows are ``(iteration, relative residual, J, terminal norm)``.
        """
        cfg = self.cfg
        nrow = (self.grid.M, self.idx.size)
        uc = np.zeros(nrow) if u_init is None else np.array(u_init, dtype=float).reshape(nrow)
        zero_u = np.zeros(nrow)
        g0, _ = self.gradient(zero_u, y0, f)
        b = -g0
        bnorm = np.sqrt(self.dot(b, b / self.Wu))
        history = []
        if bnorm == 0.0:
            y = self.forward(zero_u, y0, f)
            history.append((0, 0.0, self.cost(zero_u, y), self._term(y)))
            return zero_u, y, 0, history, True
        r = b - self.hessian(uc) if u_init is not None else b.copy()
        z = r / self.Wu
        p = z.copy()
        rz = self.dot(r, z)
        it = 0
        rel = np.sqrt(max(rz, 0.0)) / bnorm
        y = self.forward(uc, y0, f)
        history.append((0, rel, self.cost(uc, y), self._term(y)))
        while rel >= cfg.cg_tol:
            if it >= cfg.cg_max_iters:
                return uc, y, it, history, False
            Hp = self.hessian(p)
            alpha = rz / self.dot(p, Hp)
            uc = uc + alpha * p
            r = r - alpha * Hp
            z = r / self.Wu
            rz_new = self.dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
            rel = np.sqrt(max(rz, 0.0)) / bnorm
            y = self.forward(uc, y0, f)
            history.append((it, rel, self.cost(uc, y), self._term(y)))
        return uc, y, it, history, True

    def _term(self, y):
        return float(np.sqrt(inner_product(y.terminal, y.terminal, self.grid)))


def synthesize_control(y0, f, a, w, cfg, omega, grid=None, N=100, M=200, bc=None,
                       u_init=None, problem=None, raise_on_failure=True):
    """Penalized weighted null control for ``y_t - (a y_x)_x = f + 1_omega u``.

    Parameters
    ----------
    y0 : array
        Initial state at the interior nodes (or with boundary slots).
    f : array or None
        Source field of interior slices ``(M + 1, N)``.
    a : DiffusionCoefficient
    w : CarlemanWeights
    cfg : PenaltyConfig
    omega : tuple
        Control interval.
    grid : Grid, optional
        Built from ``(N, M, w.T, w.t0)`` when omitted.
    u_init : array, optional
        Warm start, either a full field ``(M + 1, N)`` or reduced ``(M, n_omega)``.

    Returns
    -------
    ControlResult
        ``u`` is a full field ``(M + 1, N)``; row 0 is unused by the scheme.

    Raises
    ------
    ConvergenceError
        If CG does not reach ``cfg.cg_tol`` (unless ``raise_on_failure`` is False).
    """
    if problem is None:
        grid = grid or make_grid(a, N, M, w.T, w.t0)
        problem = ControlProblem(a, grid, w, cfg, omega, bc=bc)
    grid = problem.grid
    if f is not None and not np.all(np.isfinite(f)):
        raise ConfigurationError("source f must be finite")
    if u_init is not None:
        u_init = np.asarray(u_init, dtype=float)
        if u_init.shape == (grid.M + 1, grid.N):
            u_init = u_init[1:, problem.idx]
    uc, y, its, hist, ok = problem.solve(y0, f, u_init)
    if not ok and raise_on_failure:
        raise ConvergenceError(
            f"CG did not reach tol {cfg.cg_tol} in {cfg.cg_max_iters} iterations",
            [h[1] for h in hist])
    res = ControlResult(u=problem.embed(uc), y=y, terminal_norm=problem._term(y),
                        weighted_cost=problem.cost(uc, y), cg_iterations=its,
                        history=hist, omega=problem.omega, converged=ok)
    return res


def epsilon_sweep(y0, f, a, w, cfg, omega, epsilons, grid=None, N=100, M=200, bc=None):
    """Solve along ``epsilons`` (in the given order), warm-starting each solve.

    Returns a list of ``(epsilon, ControlResult or None, status)``; a CG
    failure is recorded as a row status and the sweep continues.
    """
    grid = grid or make_grid(a, N, M, w.T, w.t0)
    bc = bc or default_bc(a)
    stepper = Stepper(assemble_operator(a, grid, bc), grid.dt)
    rows = []
    u_prev = None
    for eps in epsilons:
        c = replace(cfg, epsilon=float(eps))
        prob = ControlProblem(a, grid, w, c, omega, bc=bc, stepper=stepper)
        try:
            r = synthesize_control(y0, f, a, w, c, omega, problem=prob, u_init=u_prev)
            rows.append((float(eps), r, "ok"))
            u_prev = r.u
        except ConvergenceError as exc:
            rows.append((float(eps), None, f"cg_failed: {exc}"))
    return rows


def _log_quad(logw, vals, scale):
    with np.errstate(divide="ignore"):
        lv = 2.0 * np.log(np.abs(vals))
    if not np.any(np.isfinite(lv)):
        return -np.inf
    return float(logsumexp(logw + lv) + np.log(scale))


def _logaddexp_all(*terms):
    return float(np.logaddexp.reduce(np.array(terms, dtype=float)))


def control_estimate_ratio(result, y0, f, w, cfg, clamp=LOG_CLAMP):
    """Empirical constant of the weighted control estimate.

    LHS: ∬ (s beta)^{-k} e^{-2 s sigma} y^2 + ∬_ω (s beta)^{-(k+3)} e^{-2 s sigma} u^2.
    RHS: e^{2 s [Phi_hat(t0) - Phi*(5T/8)]} (∬ (s beta)^{-k} e^{-2 s Phi} f^2
    + s^{-k} e^{-2 s Phi_hat(t0)} ||y0||^2). Everything is evaluated in log
    space with weights clamped at ``±clamp``; returns LHS / RHS (0 for zero
    data, ``inf`` when only the RHS vanishes).
    """
    grid = result.y.grid
    s, k = cfg.s, cfg.k
    t = grid.t[1:]
    x = grid.x_inner
    scale = grid.dt * grid.h
    mask = grid.mask(result.omega)
    ly = np.clip(w.log_weight(t, x, s, k, "sigma", -1.0), -clamp, clamp)
    lu = np.clip(w.log_weight(t, x[mask], s, k + 3, "sigma", -1.0), -clamp, clamp)
    U = _interior(result.u, grid)[1:, mask]
    lhs = _logaddexp_all(_log_quad(ly, result.y.inner[1:], scale), _log_quad(lu, U, scale))
    rhs_terms = []
    if f is not None:
        lf = np.clip(w.log_weight(t, x, s, k, "Phi", -1.0), -clamp, clamp)
        rhs_terms.append(_log_quad(lf, _interior(f, grid)[1:], 1.0) + np.log(scale))
    y0i = _interior(y0, grid)
    ph0 = float(w.phi_hat(w.t0))
    rhs_terms.append(_log_quad(np.full(y0i.shape, -k * np.log(s) - 2 * s * ph0), y0i, grid.h))
    rhs = _logaddexp_all(*rhs_terms)
    if np.isfinite(rhs):
        rhs += 2 * s * (ph0 - float(w.phi_star(w.t_58)))
    if lhs == -np.inf:
        return 0.0
    if rhs == -np.inf:
        return float("inf")
    with np.errstate(over="ignore"):
        return float(np.exp(lhs - rhs))


verify_estimate_thm41 = control_estimate_ratio  # alias


# --- empirical Carleman constants ------------------------------------------
def _random_field(rng, x, modes=6, lo=0.0, hi=1.0):
    xi = (x - lo) / (hi - lo)
    c = rng.normal(size=modes) / np.arange(1, modes + 1)
    return np.sin(np.pi * np.outer(xi, np.arange(1, modes + 1))) @ c


def _dist(w, x):
    lo, hi = w.domain
    return (x - lo) if w.side == "left" else (hi - x)


def carleman_log_ratios(v, g, a, w, omega, s, k):
    """log(LHS/RHS) of the three Carleman estimates for one adjoint solution.

    Returns ``{"classical": ..., "modified": ...}``. The classical estimate
    (theta weights, exponent ``k``) uses interior time nodes only, where
    theta is finite; ``k = 0`` is the unweighted-power variant.
    """
    grid = v.grid
    t_in = grid.t[1:-1]
    x = grid.x_inner
    xh = 0.5 * (grid.x[1:] + grid.x[:-1])
    h, dt = grid.h, grid.dt
    V = v.values
    Vi = v.inner
    G = _interior(g, grid) if g is not None else np.zeros_like(Vi)
    mask = grid.mask(omega)
    ls = np.log(s)
    out = {}
    # classical: weights theta, exp(2 s phi) / exp(2 s eta)
    lt = w.log_theta(t_in)[:, None]
    th = np.exp(lt)
    phi_n = th * w.psi(x)[None, :]
    phi_h = th * w.psi(xh)[None, :]
    eta_n = th * w.Psi(x)[None, :]
    vx = np.diff(V[1:-1], axis=1) / h
    ah = grid.a_half
    with np.errstate(divide="ignore"):
        l_grad = (1 + k) * (ls + lt) + 2 * s * phi_h + np.log(ah)[None, :] + 2 * np.log(np.abs(vx))
        l_zero = ((3 + k) * (ls + lt) + 2 * s * phi_n + 2 * np.log(_dist(w, x))[None, :]
                  - np.log(a(x))[None, :] + 2 * np.log(np.abs(Vi[1:-1])))
        l_src = k * (ls + lt) + 2 * s * eta_n + 2 * np.log(np.abs(G[1:-1]))
        l_obs = ((k + 3) * (ls + lt) + 2 * s * eta_n + 2 * np.log(np.abs(Vi[1:-1])))[:, mask]
    lhs = logsumexp(np.concatenate([l_grad.ravel(), l_zero.ravel()]))
    rhs = logsumexp(np.concatenate([l_src.ravel(), l_obs.ravel()]))
    out["classical"] = float(lhs - rhs)
    # modified: weights beta, exp(2 s Phi) / exp(2 s sigma), slices 0..M-1
    tb = grid.t[:-1]
    lb = w.log_beta(tb)[:, None]
    be = np.exp(lb)
    Phi_n = be * w.psi(x)[None, :]
    sig_n = be * w.Psi(x)[None, :]
    ph0 = float(w.phi_hat(w.t0))
    with np.errstate(divide="ignore"):
        l_v0 = k * ls + 2 * s * ph0 + np.log(np.sum(Vi[0] ** 2) * h)
        l_int = k * (ls + lb) + 2 * s * Phi_n + 2 * np.log(np.abs(Vi[:-1]))
        l_src = k * (ls + lb) + 2 * s * sig_n + 2 * np.log(np.abs(G[:-1]))
        l_obs = ((k + 3) * (ls + lb) + 2 * s * sig_n + 2 * np.log(np.abs(Vi[:-1])))[:, mask]
    lhs = np.logaddexp(l_v0, logsumexp(l_int) + np.log(dt * h))
    rhs = (logsumexp(np.concatenate([l_src.ravel(), l_obs.ravel()])) + np.log(dt * h)
           + 2 * s * (ph0 - float(w.phi_star(w.t_58))))
    out["modified"] = float(lhs - rhs)
    return out


@dataclass(frozen=True)
class MonitorReport:
    s: float
    ratios: dict
    samples: int
    skipped: int

    def finite(self):
        return all(np.isfinite(v) for v in self.ratios.values())


def carleman_ratio_monitor(w, a, omega, s, k_values=(0.0, 1.0), n_samples=50, N=40, M=80,
                           seed=0, bc=None):
    """Maximum LHS/RHS ratio of the Carleman estimates over random adjoint samples.

    Each sample draws a terminal state and a source from a seeded sine series,
    solves the adjoint problem, and evaluates both sides in log space.
    Keys of ``ratios``: ``"classical_k{k}"`` for every ``k`` and
    ``"modified_k{k}"``. Zero samples are skipped.
    """
    grid = make_grid(a, N, M, w.T, w.t0)
    bc = bc or default_bc(a)
    st = Stepper(assemble_operator(a, grid, bc), grid.dt)
    rng = np.random.default_rng(seed)
    best = {}
    skipped = 0
    lo, hi = a.domain
    x = grid.x_inner
    for _ in range(n_samples):
        vT = _random_field(rng, x, lo=lo, hi=hi)
        amp = rng.normal(size=grid.M + 1)
        g = np.outer(amp, _random_field(rng, x, lo=lo, hi=hi))
        if not (np.any(vT) or np.any(g)):
            skipped += 1
            continue
        v = solve_adjoint(vT, g, grid, bc, stepper=st)
        for k in k_values:
            r = carleman_log_ratios(v, g, a, w, omega, s, k)
            for name, val in r.items():
                key = f"{name}_k{k:g}"
                best[key] = max(best.get(key, -np.inf), val)
    with np.errstate(over="ignore"):
        ratios = {key: float(np.exp(val)) for key, val in best.items()}
    return MonitorReport(s=float(s), ratios=ratios, samples=n_samples - skipped, skipped=skipped)


def write_history(path, result):
    """CG history as delimited text: iteration, relative residual, J, terminal norm."""
    np.savetxt(path, np.array(result.history, dtype=float), delimiter=",",
               header="iter,rel_residual,J,terminal_norm", comments="# ")


def write_sweep(path, rows, meta=None):
    """Sweep table: epsilon, terminal norm, J, CG iterations, status."""
    lines = [f"# {k} = {v}" for k, v in (meta or {}).items()]
    lines.append("epsilon,terminal_norm,J,cg_iters,status")
    for eps, r, status in rows:
        if r is None:
            lines.append(f"{eps:.6e},nan,nan,-1,{status.split(':')[0]}")
        else:
            lines.append(f"{eps:.6e},{r.terminal_norm:.12e},{r.weighted_cost:.12e},"
                         f"{r.cg_iterations},{status}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
