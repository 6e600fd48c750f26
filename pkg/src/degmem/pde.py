"""Finite-difference forward and adjoint solvers for y_t - (a y_x)_x = F.

Nodes ``x_0 .. x_{N+1}`` include both endpoints; the unknowns are the interior
nodes. A zero-flux end copies its neighbouring interior value into the
boundary slot, so the discrete flux there is exactly zero.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import logsumexp

from .errors import ConfigurationError

DIRICHLET = "dirichlet"
FLUX = "flux"
LOG_CLAMP = 700.0


@dataclass(frozen=True)
class Grid:
    N: int
    M: int
    T: float
    t0: float
    x: np.ndarray
    t: np.ndarray
    h: float
    dt: float
    a_half: np.ndarray
    domain: tuple = (0.0, 1.0)

    @property
    def x_inner(self):
        return self.x[1:-1]

    def mask(self, omega):
        """Interior-node indicator of the open interval ``omega``."""
        lo, hi = omega
        return (self.x_inner > lo) & (self.x_inner < hi)


def make_grid(a, N, M, T, t0=0.0):
    """Uniform grid with ``N`` interior nodes and ``M`` time steps on ``[t0, T]``."""
    if N < 2 or M < 1:
        raise ConfigurationError(f"need N >= 2 and M >= 1, got N={N}, M={M}")
    if not T > t0:
        raise ConfigurationError(f"T={T} must exceed t0={t0}")
    lo, hi = a.domain
    x = np.linspace(lo, hi, N + 2)
    h = (hi - lo) / (N + 1)
    a_half = np.asarray(a(0.5 * (x[1:] + x[:-1])), dtype=float)
    if np.any(a_half < 0) or not np.all(np.isfinite(a_half)):
        raise ConfigurationError("a must be finite and nonnegative at half-points")
    t = np.linspace(t0, T, M + 1)
    return Grid(N=int(N), M=int(M), T=float(T), t0=float(t0), x=x, t=t, h=h,
                dt=(T - t0) / M, a_half=a_half, domain=(lo, hi))


def retime(grid, t0, M):
    """Same space grid on ``[t0, grid.T]`` with ``M`` steps."""
    t = np.linspace(t0, grid.T, M + 1)
    return Grid(N=grid.N, M=int(M), T=grid.T, t0=float(t0), x=grid.x, t=t, h=grid.h,
                dt=(grid.T - t0) / M, a_half=grid.a_half, domain=grid.domain)


@dataclass(frozen=True)
class BoundaryCondition:
    left: str = DIRICHLET
    right: str = DIRICHLET


def default_bc(a):
    """Zero flux at strongly degenerate ends, Dirichlet elsewhere."""
    left = FLUX if a.degenerate_left and a.case_left == "SD" else DIRICHLET
    right = FLUX if a.degenerate_right and a.case_right == "SD" else DIRICHLET
    return BoundaryCondition(left, right)


def check_bc(a, bc):
    for end, kind, deg, case in (("left", bc.left, a.degenerate_left, a.case_left),
                                 ("right", bc.right, a.degenerate_right, a.case_right)):
        if kind not in (DIRICHLET, FLUX):
            raise ConfigurationError(f"unknown boundary condition {kind!r}")
        strong = deg and case == "SD"
        if kind == FLUX and not strong:
            raise ConfigurationError(f"zero-flux condition at {end} end needs SD degeneracy")
        if kind == DIRICHLET and strong:
            raise ConfigurationError(f"SD degenerate {end} end needs the zero-flux condition")


@dataclass(frozen=True)
class Trajectory:
    """Space-time field; ``values[n]`` is the slice at ``grid.t[n]`` including boundary slots."""

    values: np.ndarray
    grid: Grid
    bc: BoundaryCondition

    @property
    def inner(self):
        return self.values[:, 1:-1]

    @property
    def terminal(self):
        return self.values[-1]


def fill_boundary(Y, bc):
    """Interior slices ``(..., N)`` to full slices ``(..., N + 2)``."""
    Y = np.asarray(Y, dtype=float)
    out = np.zeros(Y.shape[:-1] + (Y.shape[-1] + 2,))
    out[..., 1:-1] = Y
    if bc.left == FLUX:
        out[..., 0] = Y[..., 0]
    if bc.right == FLUX:
        out[..., -1] = Y[..., -1]
    return out


def _interior(y, grid):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] == grid.N + 2:
        return y[..., 1:-1]
    if y.shape[-1] == grid.N:
        return y
    raise ConfigurationError(f"field of length {y.shape[-1]} does not match N={grid.N}")


def assemble_operator(a, grid, bc):
    """Flux-form operator on the interior unknowns (sparse CSC, symmetric).

    ``(A y)_i = [a_{i+1/2}(y_{i+1} - y_i) - a_{i-1/2}(y_i - y_{i-1})] / h^2``;
    a zero-flux end drops its boundary half-point flux.
    """
    check_bc(a, bc)
    ah = grid.a_half.copy()
    if bc.left == FLUX:
        ah[0] = 0.0
    if bc.right == FLUX:
        ah[-1] = 0.0
    h2 = grid.h ** 2
    diag = -(ah[:-1] + ah[1:]) / h2
    off = ah[1:-1] / h2
    return sp.diags([off, diag, off], [-1, 0, 1], format="csc")


def inner_product(u, v, grid):
    """Discrete L2 product h * sum over interior nodes (last axis)."""
    return grid.h * np.sum(_interior(u, grid) * _interior(v, grid), axis=-1)


@dataclass
class SourceSpec:
    """Right-hand side ``f + 1_omega u``.

    ``f`` is a callable ``f(t, x)`` or an array of interior slices
    ``(M + 1, N)``; ``u`` an array ``(M + 1, N)`` that is zeroed outside ω.
    """

    f: Union[Callable, np.ndarray, None] = None
    u: Optional[np.ndarray] = None
    omega: Optional[tuple] = None

    def field(self, grid):
        out = np.zeros((grid.M + 1, grid.N))
        if self.f is not None:
            if callable(self.f):
                out += self.f(grid.t[:, None], grid.x_inner[None, :])
            else:
                out += _interior(self.f, grid)
        if self.u is not None:
            if self.omega is None:
                raise ConfigurationError("control given without omega")
            out += _interior(self.u, grid) * grid.mask(self.omega)
        return out


class Stepper:
    """Factorized step matrices of the theta-scheme for one (operator, dt)."""

    def __init__(self, A, dt, scheme="implicit_euler"):
        if scheme not in ("implicit_euler", "crank_nicolson"):
            raise ConfigurationError(f"unknown scheme {scheme!r}")
        self.A = A
        self.dt = dt
        self.scheme = scheme
        th = 1.0 if scheme == "implicit_euler" else 0.5
        self.theta = th
        eye = sp.identity(A.shape[0], format="csc")
        self.lu = splu((eye - dt * th * A).tocsc())
        self.C = (eye + dt * (1.0 - th) * A).tocsr() if th < 1.0 else None

    def step(self, y, src):
        rhs = y + self.dt * src if self.C is None else self.C @ y + self.dt * src
        return self.lu.solve(rhs)


def _stepper(a, grid, bc, scheme, stepper):
    if stepper is not None:
        return stepper
    return Stepper(assemble_operator(a, grid, bc), grid.dt, scheme)


def _blend(F, scheme):
    # source used in step n -> n+1, stored at index n+1
    if scheme == "implicit_euler":
        return F
    out = F.copy()
    out[1:] = 0.5 * (F[1:] + F[:-1])
    return out


def solve_forward(y0, src, grid, bc, a=None, scheme="implicit_euler", stepper=None):
    """March ``(I - dt th A) y^{n+1} = (I + dt (1-th) A) y^n + dt F^{n+th}``.

    ``src`` is a :class:`SourceSpec` or an interior field ``(M + 1, N)``;
    ``a`` is needed unless a prebuilt ``stepper`` is passed.
    """
    st = _stepper(a, grid, bc, scheme, stepper)
    F = src.field(grid) if isinstance(src, SourceSpec) else np.asarray(src, dtype=float)
    F = _blend(F, st.scheme)
    Y = np.empty((grid.M + 1, grid.N))
    Y[0] = _interior(y0, grid)
    for n in range(grid.M):
        Y[n + 1] = st.step(Y[n], F[n + 1])
    return Trajectory(fill_boundary(Y, bc), grid, bc)


def solve_adjoint(vT, g, grid, bc, a=None, scheme="implicit_euler", stepper=None):
    """Backward march ``(I - dt th A) v^{n-1} = (I + dt (1-th) A) v^n + dt G^n``.

    For implicit Euler ``G^n = g^n``, which makes the discrete transposition
    identity exact::

        <vT, y^M> + dt sum_n <g^n, y^n> = <v^0, y^0> + dt sum_n <v^{n-1}, F^n>

    (sums over n = 1..M). Crank-Nicolson averages ``g`` over the step.
    ``g`` is ``None`` or an interior field ``(M + 1, N)``.
    """
    st = _stepper(a, grid, bc, scheme, stepper)
    G = np.zeros((grid.M + 1, grid.N)) if g is None else _interior(g, grid)
    G = _blend(G, st.scheme)
    V = np.empty((grid.M + 1, grid.N))
    V[-1] = _interior(vT, grid)
    for n in range(grid.M, 0, -1):
        V[n - 1] = st.step(V[n], G[n])
    return Trajectory(fill_boundary(V, bc), grid, bc)


def _trapezoid_weights(times):
    w = np.zeros_like(times)
    if times.size > 1:
        dts = np.diff(times)
        w[:-1] += 0.5 * dts
        w[1:] += 0.5 * dts
    return w


@dataclass(frozen=True)
class History:
    """Slices of an earlier stage, prepended to the memory integral.

    ``times`` must end at the current grid's ``t0``; the last slice is the
    handoff state and is not duplicated.
    """

    times: np.ndarray
    values: np.ndarray


def memory_source(b, w, n, history=None):
    """Trapezoid approximation of ``int_0^{t_n} b(t_n, s, x) w(s, x) ds`` at interior nodes.

    Uses only slices with index ``<= n`` (strictly causal).
    """
    grid = w.grid
    if b.is_zero:
        return np.zeros(grid.N)
    return _memory_row(b, _interior(w.values[: n + 1], grid), grid, n, history)


def _memory_row(b, W, grid, n, history):
    times = grid.t[: n + 1]
    vals = W[: n + 1]
    if history is not None:
        times = np.concatenate([history.times[:-1], times])
        vals = np.concatenate([_interior(history.values[:-1], grid), vals])
    if times.size < 2:
        return np.zeros(grid.N)
    wts = _trapezoid_weights(times)
    bv = b(grid.t[n], times[:, None], grid.x_inner[None, :])
    return np.sum((wts[:, None] * bv) * vals, axis=0)


def memory_field(b, W, grid, history=None):
    """Lagged forcing ``F^{n+1} = memory_source(b, W, n)`` as an interior field.

    Slice 0 is zero and is never used by implicit Euler.
    """
    F = np.zeros((grid.M + 1, grid.N))
    if b.is_zero:
        return F
    Wi = _interior(W, grid)
    for n in range(grid.M):
        F[n + 1] = _memory_row(b, Wi, grid, n, history)
    return F


def solve_forward_with_memory(y0, b, u, grid, bc, a=None, omega=None, f=None,
                              history=None, stepper=None):
    """Implicit Euler for ``y_t - (a y_x)_x = int_0^t b y ds + f + 1_omega u``.

    The memory integral in step ``n -> n+1`` is the trapezoid over slices
    ``0..n`` (explicit), so each step is one tridiagonal solve. With
    ``b`` zero the result equals :func:`solve_forward` bit for bit.
    """
    st = _stepper(a, grid, bc, "implicit_euler", stepper)
    F = SourceSpec(f=f, u=u, omega=omega).field(grid)
    Y = np.empty((grid.M + 1, grid.N))
    Y[0] = _interior(y0, grid)
    for n in range(grid.M):
        rhs = F[n + 1]
        if not b.is_zero:
            rhs = rhs + _memory_row(b, Y, grid, n, history)
        Y[n + 1] = st.step(Y[n], rhs)
    return Trajectory(fill_boundary(Y, bc), grid, bc)


@dataclass(frozen=True)
class NormReport:
    log_esk: float
    esk: float
    l2_Q: float
    terminal: float
    divergent: bool
    clamped_slices: int = 0

    def as_dict(self):
        return {"log_esk": self.log_esk, "esk": self.esk, "l2_Q": self.l2_Q,
                "terminal": self.terminal, "divergent": self.divergent,
                "clamped_slices": self.clamped_slices}


def log_esk_weight(w, grid, s, k, clamp=LOG_CLAMP):
    """``log[(s beta)^{-k} e^{-2 s sigma}]`` on slices 1..M, clamped to ``[-clamp, clamp]``."""
    lw = w.log_weight(grid.t[1:], grid.x_inner, s, k, which="sigma", sign=-1.0)
    return np.clip(lw, -clamp, clamp)


def weighted_log_norm(Y, w, grid, s, k, clamp=LOG_CLAMP, logw=None):
    """log of ``dt h sum_{n>=1} (s beta)^{-k} e^{-2 s sigma} y^2`` (``-inf`` for y = 0)."""
    Yi = _interior(Y, grid)[1:]
    if logw is None:
        logw = log_esk_weight(w, grid, s, k, clamp)
    with np.errstate(divide="ignore"):
        ly2 = 2.0 * np.log(np.abs(Yi))
    if not np.any(np.isfinite(ly2)):
        return -np.inf
    return float(logsumexp(logw + ly2) + np.log(grid.dt * grid.h))


def weighted_norms(traj, w, s, k, clamp=LOG_CLAMP):
    """Squared E_{s,k} norm (log and value), plain L2(Q) and terminal L2 norms.

    The time integral is the right-endpoint rectangle rule over slices 1..M.
    ``divergent`` is set when y(T) is nonzero and the weight on the final
    slice hits the clamp, i.e. the norm grows without bound under time
    refinement.
    """
    grid = traj.grid
    if abs(grid.T - w.T) > 1e-12 * max(1.0, abs(w.T)):
        raise ConfigurationError("trajectory and weights use different horizons")
    logw = log_esk_weight(w, grid, s, k, clamp)
    lg = weighted_log_norm(traj.values, w, grid, s, k, clamp, logw=logw)
    Yi = traj.inner
    l2 = float(np.sqrt(grid.dt * grid.h * np.sum(Yi[1:] ** 2)))
    term = float(np.sqrt(inner_product(Yi[-1], Yi[-1], grid)))
    clamped = np.any(logw >= clamp, axis=1)
    with np.errstate(over="ignore"):
        esk = float(np.exp(lg))
    return NormReport(log_esk=lg, esk=esk, l2_Q=l2, terminal=term,
                      divergent=bool(term > 0 and clamped[-1]),
                      clamped_slices=int(clamped.sum()))


def energy_ratio(traj, y0, F):
    """``max_n ||y^n|| / (||y0|| + ||F||_{L2(Q)})``; the empirical constant of the energy estimate."""
    grid = traj.grid
    Yi = traj.inner
    sup = float(np.max(np.sqrt(inner_product(Yi, Yi, grid))))
    y0i = _interior(y0, grid)
    data = float(np.sqrt(inner_product(y0i, y0i, grid)))
    Fi = _interior(F, grid)
    data += float(np.sqrt(grid.dt * grid.h * np.sum(Fi[1:] ** 2)))
    return sup / data if data > 0 else (0.0 if sup == 0 else np.inf)


def write_trajectory(path, traj, header_meta=None):
    """Write ``t, x, y`` rows as delimited text with a '#' metadata header."""
    g = traj.grid
    tt, xx = np.meshgrid(g.t, g.x, indexing="ij")
    meta = "".join(f"{k} = {v}\n" for k, v in (header_meta or {}).items())
    np.savetxt(path, np.column_stack([tt.ravel(), xx.ravel(), traj.values.ravel()]),
               delimiter=",", header=meta + "t,x,y", comments="# ")
