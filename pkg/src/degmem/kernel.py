"""Memory kernels b(t, s, x) for the Volterra term."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class KernelSpec:
    """Memory kernel ``b(t, s, x)``, vectorized with numpy broadcasting.

    ``log_abs`` optionally returns ``log|b|`` directly, which lets admissibility
    checks resolve kernels that underflow in double precision. ``is_zero``
    marks the trivial kernel so solvers can skip the memory integral.
    """

    evaluator: Callable
    decay_M: Optional[float] = None
    k: float = 0.0
    p: int = 4
    log_abs: Optional[Callable] = None
    is_zero: bool = False
    label: str = "custom"

    def __call__(self, t, s, x):
        with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
            return np.asarray(self.evaluator(t, s, x), dtype=float)

    def log_abs_value(self, t, s, x):
        if self.log_abs is not None:
            with np.errstate(divide="ignore", over="ignore"):
                return np.asarray(self.log_abs(t, s, x), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self(t, s, x)))


def zero_kernel():
    return KernelSpec(lambda t, s, x: np.zeros(np.broadcast(t, s, x).shape),
                      log_abs=lambda t, s, x: np.full(np.broadcast(t, s, x).shape, -np.inf),
                      is_zero=True, label="zero")


def constant_kernel(c=1.0):
    c = float(c)
    if c == 0.0:
        return zero_kernel()
    return KernelSpec(lambda t, s, x: np.full(np.broadcast(t, s, x).shape, c),
                      label=f"constant({c})")


def decaying_kernel(c, M, T, p=4, k=0.0):
    """``c exp(-M / (T - t)^p)``, extended by its limit 0 at ``t = T``."""
    c, M, T = float(c), float(M), float(T)

    def log_abs(t, s, x):
        shape = np.broadcast(t, s, x).shape
        gap = np.broadcast_to(T - np.asarray(t, dtype=float), shape)
        with np.errstate(divide="ignore"):
            out = np.log(abs(c)) - M / np.where(gap > 0, gap, 0.0) ** p
        return np.where(gap > 0, out, -np.inf) if c != 0 else np.full(shape, -np.inf)

    def b(t, s, x):
        return np.sign(c) * np.exp(log_abs(t, s, x))

    return KernelSpec(b, decay_M=M, k=k, p=p, log_abs=log_abs, is_zero=(c == 0.0),
                      label=f"decaying(c={c}, M={M})")


def kernel_from_record(rec, T, M_default=None):
    """Build a kernel from ``{kind: zero|constant|decaying, c, M, p}``."""
    kind = rec.get("kind", "zero")
    if kind == "zero":
        return zero_kernel()
    if kind == "constant":
        return constant_kernel(rec.get("c", 1.0))
    if kind == "decaying":
        M = rec.get("M", M_default)
        if M is None:
            raise ConfigurationError("decaying kernel needs M")
        return decaying_kernel(rec.get("c", 1.0), M, T, p=int(rec.get("p", 4)))
    raise ConfigurationError(f"unknown kernel kind {kind!r}")
