"""Carleman weight functions and the inequalities they must satisfy.

All exponentials of weights are taken in log space; ``LOG_CLAMP`` bounds the
exponent whenever an actual weight value is needed.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .coeffs import d_star as _d_star
from .errors import ConfigurationError, EmptyWindowError, WeightAdmissibilityError
from .quadrature import gauss_cells, graded_integral

LOG_CLAMP = 700.0
_TABLE_CELLS = 4096


def bump(center, lo=0.0, hi=1.0):
    """Smooth bump on [lo, hi], zero at the ends, max 1 attained only at ``center``.

    ``sin(pi g(xi))`` with ``g(xi) = xi + k xi (1 - xi)`` monotone and
    ``g(center) = 1/2``; its derivative vanishes only at ``center``. For
    centers too close to an end (g would lose monotonicity) the bump
    ``xi (1 - xi) exp(k xi)`` is used instead.
    """
    c = (center - lo) / (hi - lo)
    if not 0.0 < c < 1.0:
        raise ConfigurationError(f"bump center {center} outside ({lo}, {hi})")
    k = (0.5 - c) / (c * (1.0 - c))
    if abs(k) < 0.9:
        def rho(x):
            xi = (np.asarray(x, dtype=float) - lo) / (hi - lo)
            return np.sin(np.pi * (xi + k * xi * (1.0 - xi)))
        return rho
    kap = (2.0 * c - 1.0) / (c * (1.0 - c))
    peak = c * (1.0 - c) * np.exp(kap * c)

    def rho(x):
        xi = (np.asarray(x, dtype=float) - lo) / (hi - lo)
        return xi * (1.0 - xi) * np.exp(kap * xi) / peak
    return rho


@dataclass(frozen=True)
class CarlemanWeights:
    """Space and time weights of the Carleman estimates.

    ``side="left"`` uses psi(x) = gamma (int_lo^x (y-lo)/a dy - d);
    ``side="right"`` uses the mirrored psi(x) = gamma (int_x^hi (hi-y)/a dy - d).
    Time weights live on ``[t0, T]``; ``t0 > 0`` gives the shifted weights used
    after a free-evolution phase.
    """

    T: float
    p: int
    gamma: float
    d: float
    d_star: float
    L: float
    rho: Callable
    psi_x: np.ndarray
    psi_int: np.ndarray
    side: str = "left"
    t0: float = 0.0
    domain: tuple = (0.0, 1.0)
    omega: Optional[tuple] = None
    mode: str = "carleman_only"

    # --- time weights -------------------------------------------------
    @property
    def t_mid(self):
        return 0.5 * (self.t0 + self.T)

    @property
    def t_58(self):
        """The time 5T/8 of the horizon [t0, T]."""
        return self.t0 + 0.625 * (self.T - self.t0)

    @property
    def beta0(self):
        """beta on the plateau, i.e. (2/(T-t0))^(2p)."""
        return (2.0 / (self.T - self.t0)) ** (2 * self.p)

    def log_theta(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            prod = (t - self.t0) * (self.T - t)
            out = -self.p * np.log(prod)
        return np.where(prod > 0, out, np.inf)

    def theta(self, t):
        return np.exp(self.log_theta(t))

    def theta_prime(self, t):
        t = np.asarray(t, dtype=float)
        prod = (t - self.t0) * (self.T - t)
        return -self.p * prod ** (-self.p - 1) * (self.t0 + self.T - 2.0 * t)

    def log_beta(self, t):
        t = np.asarray(t, dtype=float)
        plateau = np.log(self.beta0)
        return np.where(t <= self.t_mid, plateau, self.log_theta(np.maximum(t, self.t_mid)))

    def beta(self, t):
        return np.exp(self.log_beta(t))

    # --- space weights ------------------------------------------------
    def psi(self, x):
        return self.gamma * (np.interp(x, self.psi_x, self.psi_int) - self.d)

    def Psi(self, x):
        lam = self.L  # rho is normalized to max 1, so lambda = L
        return np.exp(lam * self.rho(x)) - np.exp(2.0 * self.L)

    def Psi_max(self):
        return np.exp(self.L) - np.exp(2.0 * self.L)

    # --- composite weights (tensor grids: t along axis 0) ---------------
    def _outer(self, tf, xf, t, x):
        return np.multiply.outer(tf(np.asarray(t, dtype=float)), xf(np.asarray(x, dtype=float)))

    def phi(self, t, x):
        return self._outer(self.theta, self.psi, t, x)

    def eta(self, t, x):
        return self._outer(self.theta, self.Psi, t, x)

    def Phi(self, t, x):
        return self._outer(self.beta, self.psi, t, x)

    def sigma(self, t, x):
        return self._outer(self.beta, self.Psi, t, x)

    def phi_hat(self, t):
        """max over x of Phi(t, .) = gamma (d* - d) beta(t)."""
        return self.gamma * (self.d_star - self.d) * self.beta(t)

    def phi_star(self, t):
        """min over x of Phi(t, .) = -gamma d beta(t)."""
        return -self.gamma * self.d * self.beta(t)

    def sigma_hat(self, t):
        return self.Psi_max() * self.beta(t)

    # --- log weights used by norms and the control functional ----------
    def log_weight(self, t, x, s, k, which="sigma", sign=-1.0):
        """Log of ``(s w_t)^(sign k) exp(2 sign s W)`` on the tensor grid.

        ``which`` selects the exponent ``W`` among ``"sigma"`` (beta Psi),
        ``"Phi"`` (beta psi), ``"phi"`` (theta psi) and ``"eta"``
        (theta Psi); the power uses theta for phi/eta and beta otherwise.
        Infinite time weights give ``+inf`` (``sign=-1``) or ``-inf``.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if which in ("phi", "eta"):
            lt = self.log_theta(t)
            space = self.psi(x) if which == "phi" else self.Psi(x)
        else:
            lt = self.log_beta(t)
            space = self.psi(x) if which == "Phi" else self.Psi(x)
        finite = np.isfinite(lt)
        lt_f = np.where(finite, lt, 0.0)
        expo = 2.0 * sign * s * np.multiply.outer(np.exp(lt_f), space)
        power = sign * k * (np.log(s) + lt_f)
        out = power[:, None] + expo
        blow = np.inf if sign < 0 else -np.inf
        return np.where(finite[:, None], out, blow)

    def dump(self, t, x):
        """Per-node table columns (t, x, theta, beta, phi, eta, Phi, sigma)."""
        tt, xx = np.meshgrid(t, x, indexing="ij")
        cols = [tt, xx, np.broadcast_to(self.theta(t)[:, None], tt.shape),
                np.broadcast_to(self.beta(t)[:, None], tt.shape),
                self.phi(t, x), self.eta(t, x), self.Phi(t, x), self.sigma(t, x)]
        return np.column_stack([c.ravel() for c in cols])


def psi_table(a, side="left", cells=_TABLE_CELLS):
    """Cumulative integral defining psi, tabulated on a uniform grid of the domain."""
    lo, hi = a.domain
    x = np.linspace(lo, hi, cells + 1)
    if side == "left":
        f = lambda y: (y - lo) / a(y)
        first = graded_integral(f, x[0], x[1], singular="lo")
        rest = gauss_cells(f, x[1:])
        F = np.concatenate([[0.0, first], first + np.cumsum(rest)])
    else:
        f = lambda y: (hi - y) / a(y)
        last = graded_integral(f, x[-2], x[-1], singular="hi")
        rest = gauss_cells(f, x[:-1])
        tail = np.concatenate([np.cumsum(rest[::-1])[::-1] + last, [last, 0.0]])
        F = tail
    return x, F


def gamma_window(d_star, d, L, mode="carleman_only"):
    """Admissible open interval for gamma.

    Lower end e^{2L}/(d - d*). In ``fixed_point`` mode the upper end is
    3 (e^{2L} - e^L) / (2 (d - d*)), which makes (3/2) sigma_hat <= Phi_hat.
    """
    lower = np.exp(2.0 * L) / (d - d_star)
    if mode == "fixed_point":
        upper = 3.0 * (np.exp(2.0 * L) - np.exp(L)) / (2.0 * (d - d_star))
    else:
        upper = np.inf
    return lower, upper


def choose_gamma_d(d_star, L, mode="carleman_only"):
    """Pick (gamma, d) inside the admissible window.

    ``d = 2 d*`` (``carleman_only``) or ``10 d*`` (``fixed_point``); gamma is
    the window midpoint, or twice the lower bound when the window is
    unbounded.

    Raises
    ------
    EmptyWindowError
        In ``fixed_point`` mode when ``L <= ln 3``.
    """
    if mode not in ("carleman_only", "fixed_point"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if mode == "fixed_point" and L <= np.log(3.0):
        raise EmptyWindowError(f"L = {L} <= ln 3: gamma window is empty")
    d = (10.0 if mode == "fixed_point" else 2.0) * d_star
    lo, hi = gamma_window(d_star, d, L, mode)
    gamma = 2.0 * lo if not np.isfinite(hi) else 0.5 * (lo + hi)
    return gamma, d


def build_weights(T, a, gamma, d, L, p=4, omega=None, t0=0.0, side=None, mode="carleman_only"):
    """Build the Carleman weights for coefficient ``a`` on ``[t0, T]``.

    Parameters
    ----------
    T : float
        Final time.
    a : DiffusionCoefficient
        Degenerate at one end of its domain (``"both"`` is handled by gluing).
    gamma, d, L : float
        Weight parameters; ``L`` = lambda ||rho||_inf.
    p : {2, 4}
        Exponent of theta(t) = [(t - t0)(T - t)]^{-p}.
    omega : tuple, optional
        Control interval; the bump peaks at its center (domain center if None).
    mode : {"carleman_only", "fixed_point"}
        ``fixed_point`` also enforces d >= 10 d* and the upper gamma bound.

    Raises
    ------
    WeightAdmissibilityError
        If d <= d*, gamma is outside its window, or T <= t0.
    """
    if p not in (2, 4):
        raise ConfigurationError(f"p must be 2 or 4, got {p}")
    if mode not in ("carleman_only", "fixed_point"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if not T > t0:
        raise WeightAdmissibilityError(f"horizon T={T} must exceed t0={t0}")
    if side is None:
        if a.degeneracy_side == "both":
            raise ConfigurationError(
                "doubly degenerate coefficients use left/right weights on sub-intervals")
        side = "right" if a.degeneracy_side == "right" else "left"
    ds = _d_star(a, side=side)
    if not d > ds:
        raise WeightAdmissibilityError(f"d = {d} must exceed d* = {ds}")
    if mode == "fixed_point" and d < 10.0 * ds * (1.0 - 1e-12):
        raise WeightAdmissibilityError(f"fixed-point weights need d >= 10 d* = {10 * ds}")
    lo_g, hi_g = gamma_window(ds, d, L, mode)
    if not lo_g < gamma < hi_g:
        raise WeightAdmissibilityError(
            f"gamma = {gamma} outside admissible window ({lo_g}, {hi_g})")
    lo, hi = a.domain
    center = 0.5 * (omega[0] + omega[1]) if omega is not None else 0.5 * (lo + hi)
    x, F = psi_table(a, side)
    if side == "left":
        F[-1] = ds
    else:
        F[0] = ds
    return CarlemanWeights(T=float(T), p=int(p), gamma=float(gamma), d=float(d), d_star=ds,
                           L=float(L), rho=bump(center, lo, hi), psi_x=x, psi_int=F,
                           side=side, t0=float(t0), domain=(lo, hi),
                           omega=tuple(omega) if omega is not None else None, mode=mode)


@dataclass(frozen=True)
class WeightReport:
    inequality_id: str
    max_violation: float
    passed: bool
    witness: tuple


def _wreport(iid, viol, t, x, tol=1e-12):
    viol = np.atleast_2d(viol)
    idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
    v = float(viol[idx])
    tw = float(np.atleast_1d(t)[idx[0]]) if t is not None else float("nan")
    xw = float(np.atleast_1d(x)[idx[1]]) if x is not None else float("nan")
    return WeightReport(iid, v, bool(v <= tol), (tw, xw))


def default_time_nodes(w, n=400):
    return np.linspace(w.t0, w.T, n + 1)


def verify_weight_inequalities(w, x=None, t=None):
    """Check every pointwise inequality on the tensor grid ``t x x``.

    Returns one :class:`WeightReport` per inequality; ``sigma_hat_le_Phi_hat``
    is only checked for ``fixed_point`` weights. ``theta_prime_bound``
    carries the empirical constant sup |theta'| / theta^{3/2} over interior
    time nodes in ``max_violation`` and passes when it is finite.
    """
    lo, hi = w.domain
    x = np.linspace(lo, hi, 201) if x is None else np.asarray(x, dtype=float)
    t = default_time_nodes(w) if t is None else np.asarray(t, dtype=float)
    inner = t[(t > w.t0) & (t < w.T)]
    psi = w.psi(x)
    Psi = w.Psi(x)
    beta = w.beta(t)
    reps = []
    reps.append(_wreport("gamma_admissible",
                         np.array([[np.exp(2 * w.L) - w.gamma * (w.d - w.d_star)]]), None, None))
    reps.append(_wreport("psi_bounds",
                         np.maximum(-w.gamma * w.d - psi, psi)[None, :], [np.nan], x))
    gap = psi - Psi
    reps.append(_wreport("psi_le_Psi", gap[None, :], [np.nan], x))
    reps.append(_wreport("phi_le_eta", np.multiply.outer(w.theta(inner), gap), inner, x))
    reps.append(_wreport("Phi_le_sigma", np.multiply.outer(beta, gap), t, x))
    early = t[t <= w.t_58]
    reps.append(_wreport("Phi_star_58_le_Phi",
                         w.phi_star(w.t_58) - w.Phi(early, x), early, x))
    if w.mode == "fixed_point":
        # beta > 0 factors out; keep the sign where beta is infinite
        factor = 1.5 * w.Psi_max() - w.gamma * (w.d_star - w.d)
        scaled = np.where(np.isfinite(beta), beta * factor, np.sign(factor) * np.inf)
        reps.append(_wreport("sigma_hat_le_Phi_hat", scaled[:, None], t, [np.nan]))
    ratio = np.abs(w.theta_prime(inner)) / w.theta(inner) ** 1.5
    c = float(np.max(ratio)) if ratio.size else 0.0
    i = int(np.argmax(ratio)) if ratio.size else 0
    reps.append(WeightReport("theta_prime_bound", c, bool(np.isfinite(c)),
                             (float(inner[i]) if inner.size else float("nan"), float("nan"))))
    return reps


def fixed_point_exponent_chain(w):
    """Left side of 2 Phi_hat(0) - 2 Phi*(5T/8) + (3/2) sigma_hat(0) < -gamma beta0 d*.

    Returns ``(lhs, bound)``.
    """
    lhs = (2.0 * w.phi_hat(w.t0) - 2.0 * w.phi_star(w.t_58) + 1.5 * w.sigma_hat(w.t0))
    return float(lhs), float(-w.gamma * w.beta0 * w.d_star)


def write_weight_dump(path, w, t, x):
    """Write the per-node weight table as delimited text."""
    header = "t,x,theta,beta,phi,eta,Phi,sigma"
    np.savetxt(path, w.dump(t, x), delimiter=",", header=header, comments="# ")
