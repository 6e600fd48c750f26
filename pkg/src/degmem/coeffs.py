"""Degenerate diffusion coefficients, structural hypotheses and Hardy-Poincare diagnostics."""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateFieldError, InvalidDegeneracyError
from .quadrature import graded_integral

SIDES = ("none", "left", "right", "both")

# absolute slack for hypothesis margins; power laws sit exactly on the bound
TOL_HYP = 1e-10
# "near the degenerate end" for the monotonicity condition
MONOTONE_WINDOW = 0.1


def case_tag(alpha):
    """``"WD"`` for exponents in [0, 1), ``"SD"`` for [1, 2)."""
    if not 0.0 <= alpha < 2.0:
        raise InvalidDegeneracyError(f"degeneracy exponent {alpha} outside [0, 2)")
    return "WD" if alpha < 1.0 else "SD"


@dataclass(frozen=True)
class DiffusionCoefficient:
    """A diffusion coefficient a(x) >= 0 on ``domain`` degenerating at declared end(s).

    ``evaluator`` and ``derivative`` are vectorized callables. ``case_left``
    and ``case_right`` are ``"WD"``/``"SD"`` at a degenerate end and ``None``
    otherwise.
    """

    evaluator: Callable
    degeneracy_side: str
    alpha_left: float = 0.0
    alpha_right: float = 0.0
    case_left: Optional[str] = None
    case_right: Optional[str] = None
    beta_mono_left: Optional[float] = None
    beta_mono_right: Optional[float] = None
    derivative: Optional[Callable] = None
    domain: tuple = (0.0, 1.0)
    record: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    @property
    def degenerate_left(self):
        return self.degeneracy_side in ("left", "both")

    @property
    def degenerate_right(self):
        return self.degeneracy_side in ("right", "both")

    @property
    def double_class(self):
        """Class label of a doubly degenerate coefficient, e.g. ``"SWD"``."""
        if self.degeneracy_side != "both":
            raise InvalidDegeneracyError("class label only defined for side='both'")
        return self.case_left[0] + self.case_right[0] + "D"

    def prime(self, x):
        """a'(x); finite differences (second order) when no derivative is attached."""
        x = np.asarray(x, dtype=float)
        if self.derivative is not None:
            return self.derivative(x)
        lo, hi = self.domain
        step = 1e-6 * (hi - lo)
        xl = np.clip(x - step, lo, hi)
        xr = np.clip(x + step, lo, hi)
        return (self(xr) - self(xl)) / (xr - xl)

    def restricted(self, lo, hi):
        """The same coefficient viewed on the sub-interval ``[lo, hi]``.

        Degeneracy is kept only at ends that coincide with the original ones.
        """
        dlo, dhi = self.domain
        left = self.degenerate_left and lo == dlo
        right = self.degenerate_right and hi == dhi
        side = {(True, True): "both", (True, False): "left",
                (False, True): "right", (False, False): "none"}[(left, right)]
        return replace(
            self, degeneracy_side=side, domain=(float(lo), float(hi)),
            alpha_left=self.alpha_left if left else 0.0,
            alpha_right=self.alpha_right if right else 0.0,
            case_left=self.case_left if left else None,
            case_right=self.case_right if right else None)


def prototype_coefficient(alpha_left, alpha_right, side):
    """Power-law coefficient a(x) = x^alpha_left (1 - x)^alpha_right.

    Parameters
    ----------
    alpha_left, alpha_right : float
        Exponents in [0, 2). An exponent must be zero on a side that is not
        declared degenerate.
    side : {"none", "left", "right", "both"}

    Raises
    ------
    InvalidDegeneracyError
        For exponents outside [0, 2) or a side inconsistent with them.
    """
    al, ar = float(alpha_left), float(alpha_right)
    for alpha in (al, ar):
        case_tag(alpha)
    if side not in SIDES:
        raise InvalidDegeneracyError(f"unknown side {side!r}")
    left = side in ("left", "both")
    right = side in ("right", "both")
    if (al > 0) != left or (ar > 0) != right:
        raise InvalidDegeneracyError(
            f"side={side!r} inconsistent with exponents ({al}, {ar})")

    def a(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.power(x, al) * np.power(1.0 - x, ar)

    def da(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.zeros_like(np.asarray(x, dtype=float))
            if al:
                out = out + al * np.power(x, al - 1.0) * np.power(1.0 - x, ar)
            if ar:
                out = out - ar * np.power(x, al) * np.power(1.0 - x, ar - 1.0)
            return out

    return DiffusionCoefficient(
        evaluator=a, derivative=da, degeneracy_side=side,
        alpha_left=al, alpha_right=ar,
        case_left=case_tag(al) if left else None,
        case_right=case_tag(ar) if right else None,
        record={"kind": "prototype", "alpha_left": al, "alpha_right": ar, "side": side})


def tabulated_coefficient(x, values, alpha_left=0.0, alpha_right=0.0, side="left"):
    """Coefficient interpolated linearly from a table ``(x, a(x))``."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != values.shape or np.any(np.diff(x) <= 0):
        raise InvalidDegeneracyError("table must be two increasing columns of equal length")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidDegeneracyError("tabulated a(x) must be finite and nonnegative")
    slope = np.gradient(values, x, edge_order=2)
    left = side in ("left", "both")
    right = side in ("right", "both")
    return DiffusionCoefficient(
        evaluator=lambda s: np.interp(s, x, values),
        derivative=lambda s: np.interp(s, x, slope),
        degeneracy_side=side, alpha_left=float(alpha_left), alpha_right=float(alpha_right),
        case_left=case_tag(alpha_left) if left else None,
        case_right=case_tag(alpha_right) if right else None,
        domain=(float(x[0]), float(x[-1])),
        record={"kind": "tabulated", "alpha_left": float(alpha_left),
                "alpha_right": float(alpha_right), "side": side})


def load_tabulated(path, **kwargs):
    """Read a two-column text table (x, a(x)); '#' starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise InvalidDegeneracyError(f"{path}: expected two columns, got {data.shape[1]}")
    return tabulated_coefficient(data[:, 0], data[:, 1], **kwargs)


def coefficient_from_record(rec):
    """Build a coefficient from ``{kind, alpha_left, alpha_right, side[, path]}``."""
    kind = rec.get("kind", "prototype")
    al = float(rec.get("alpha_left", 0.0))
    ar = float(rec.get("alpha_right", 0.0))
    side = rec.get("side", "left")
    if kind == "prototype":
        return prototype_coefficient(al, ar, side)
    if kind == "tabulated":
        return load_tabulated(rec["path"], alpha_left=al, alpha_right=ar, side=side)
    raise InvalidDegeneracyError(f"unknown coefficient kind {kind!r}")


@dataclass(frozen=True)
class HypothesisReport:
    condition_id: str
    worst_node: float
    worst_margin: float
    passed: bool


def _report(cid, nodes, margin):
    if nodes.size == 0:
        return HypothesisReport(cid, float("nan"), float("inf"), True)
    i = int(np.argmin(margin))
    m = float(margin[i])
    return HypothesisReport(cid, float(nodes[i]), m, bool(m >= -TOL_HYP))


def _default_beta(alpha):
    return alpha if alpha > 1.0 else 0.5


def check_degeneracy_hypotheses(a, grid):
    """Evaluate the structural hypotheses on the interior nodes of ``grid``.

    Reports, for every degenerate end: the exponent inequality
    ``x a' <= alpha a`` (mirrored ``(x-1) a' <= alpha~ a`` at the right end),
    and for strongly degenerate ends the monotonicity of ``a / x^beta`` on
    the first 10% of the interval (``a / (1-x)^beta~`` on the last 10%).
    Endpoints are excluded since a' may be unbounded there.
    """
    grid = np.asarray(grid, dtype=float)
    lo, hi = a.domain
    x = grid[(grid > lo) & (grid < hi)]
    av = a(x)
    dav = a.prime(x)
    width = hi - lo
    reports = []
    if a.degenerate_left or a.degeneracy_side == "none":
        alpha = a.alpha_left
        reports.append(_report("alpha_left", x, alpha * av - (x - lo) * dav))
    if a.degenerate_right:
        alpha = a.alpha_right
        reports.append(_report("alpha_right", x, alpha * av - (x - hi) * dav))
    if a.degenerate_left and a.case_left == "SD":
        beta = a.beta_mono_left if a.beta_mono_left is not None else _default_beta(a.alpha_left)
        win = x <= lo + MONOTONE_WINDOW * width
        # d/dx (a / x^beta) >= 0  <=>  x a' - beta a >= 0
        margin = (x[win] - lo) * dav[win] - beta * av[win]
        reports.append(_report("beta_mono_left", x[win], margin))
    if a.degenerate_right and a.case_right == "SD":
        beta = a.beta_mono_right if a.beta_mono_right is not None else _default_beta(a.alpha_right)
        win = x >= hi - MONOTONE_WINDOW * width
        # d/dx (a / (1-x)^beta) <= 0  <=>  (x-1) a' - beta a >= 0
        margin = (x[win] - hi) * dav[win] - beta * av[win]
        reports.append(_report("beta_mono_right", x[win], margin))
    return reports


def _singular_end(a):
    left = a.degenerate_left
    right = a.degenerate_right
    return {(True, True): "both", (True, False): "lo",
            (False, True): "hi", (False, False): "none"}[(left, right)]


def d_star(a, side=None):
    """Integral of (x - lo)/a(x) over the domain (its mirror for ``side="right"``).

    The degenerate endpoint singularity is resolved by geometric grading.
    """
    lo, hi = a.domain
    side = side or ("right" if a.degeneracy_side == "right" else "left")
    if side == "left":
        f = lambda y: (y - lo) / a(y)
    else:
        f = lambda y: (hi - y) / a(y)
    return graded_integral(f, lo, hi, singular=_singular_end(a))


def _hardy_distance(a, x):
    lo, hi = a.domain
    if a.degeneracy_side == "both":
        return np.minimum(x - lo, hi - x)
    if a.degeneracy_side == "right":
        return hi - x
    return x - lo


def hardy_poincare_ratio(y, a, x=None):
    """Ratio of the Hardy and Dirichlet energies of a nodal field.

    ``[int a/dist^2 y^2] / [int a y_x^2]`` with ``dist = x`` (left),
    ``1 - x`` (right) or the distance to the nearest end (both). Both
    integrals use the same cell-midpoint rule on the nodes ``x``
    (uniform nodes on the domain by default).

    Raises
    ------
    DegenerateFieldError
        If the denominator vanishes.
    """
    y = np.asarray(y, dtype=float)
    if x is None:
        lo, hi = a.domain
        x = np.linspace(lo, hi, y.size)
    x = np.asarray(x, dtype=float)
    dx = np.diff(x)
    xm = 0.5 * (x[1:] + x[:-1])
    am = a(xm)
    ym = 0.5 * (y[1:] + y[:-1])
    yx = np.diff(y) / dx
    den = float(np.sum(am * yx ** 2 * dx))
    if not den > 0.0:
        raise DegenerateFieldError("field has zero weighted Dirichlet energy")
    num = float(np.sum(am / _hardy_distance(a, xm) ** 2 * ym ** 2 * dx))
    return num / den
