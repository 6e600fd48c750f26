import numpy as np
import pytest

from degmem.coeffs import d_star, prototype_coefficient
from degmem.control import PenaltyConfig, default_s
from degmem.weights import build_weights, choose_gamma_d

OMEGA = (0.3, 0.6)


def make_weights(alpha=0.5, p=4, L=1.2, mode="fixed_point", T=1.0, side="left"):
    if side == "left":
        a = prototype_coefficient(alpha, 0.0, "left")
    else:
        a = prototype_coefficient(0.0, alpha, "right")
    gamma, d = choose_gamma_d(d_star(a), L, mode)
    return a, build_weights(T, a, gamma, d, L, p=p, omega=OMEGA, mode=mode)


@pytest.fixture
def wd_setup():
    a, w = make_weights(0.5)
    return a, w, PenaltyConfig(s=default_s(w))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
