import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degmem.coeffs import (check_degeneracy_hypotheses, d_star, hardy_poincare_ratio,
                           load_tabulated, prototype_coefficient, tabulated_coefficient)
from degmem.errors import (DegenerateFieldError, DivergentIntegralError,
                           InvalidDegeneracyError)


def test_prototype_values():
    assert prototype_coefficient(0.0, 0.0, "none")(0.3) == pytest.approx(1.0)
    assert prototype_coefficient(0.5, 0.0, "left")(0.25) == pytest.approx(0.5)
    assert prototype_coefficient(1.5, 1.5, "both")(0.5) == pytest.approx(0.125)


def test_case_tags():
    a = prototype_coefficient(0.5, 1.5, "both")
    assert (a.case_left, a.case_right) == ("WD", "SD")
    assert a.double_class == "WSD"
    assert prototype_coefficient(1.0, 0.0, "left").case_left == "SD"


@pytest.mark.parametrize("alpha", [-0.1, 2.0, 2.5])
def test_invalid_exponent(alpha):
    with pytest.raises(InvalidDegeneracyError):
        prototype_coefficient(alpha, 0.0, "left")


def test_side_must_match_exponents():
    with pytest.raises(InvalidDegeneracyError):
        prototype_coefficient(0.0, 0.5, "left")


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.5])
def test_power_law_hypothesis_equality(alpha):
    a = prototype_coefficient(alpha, 0.0, "left")
    reps = check_degeneracy_hypotheses(a, np.linspace(0, 1, 201))
    r = [r for r in reps if r.condition_id == "alpha_left"][0]
    assert r.passed and abs(r.worst_margin) <= 1e-12


def test_hypothesis_fails_for_understated_alpha():
    a = prototype_coefficient(1.5, 0.0, "left")
    x = np.linspace(0, 1, 101)
    b = tabulated_coefficient(x, a(x), alpha_left=1.0, side="left")
    reps = {r.condition_id: r for r in check_degeneracy_hypotheses(b, x)}
    assert not reps["alpha_left"].passed


def test_constant_coefficient_hypothesis():
    a = prototype_coefficient(0.0, 0.0, "none")
    reps = check_degeneracy_hypotheses(a, np.linspace(0, 1, 51))
    assert all(r.passed for r in reps)
    assert reps[0].worst_margin == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.5])
def test_d_star_power_law(alpha):
    side = "none" if alpha == 0 else "left"
    a = prototype_coefficient(alpha, 0.0, side)
    exact = 1.0 / (2.0 - alpha)
    assert abs(d_star(a) - exact) / exact <= 1e-8


def test_d_star_right_mirror():
    a = prototype_coefficient(0.0, 0.5, "right")
    assert d_star(a, side="right") == pytest.approx(2.0 / 3.0, rel=1e-10)


def test_d_star_divergent():
    # (x - 0)/a is not integrable at 1 when the right exponent is >= 1
    a = prototype_coefficient(0.5, 1.5, "both")
    with pytest.raises(DivergentIntegralError):
        d_star(a, side="left")


def test_hardy_ratio_witness():
    a = prototype_coefficient(1.0, 0.0, "left")
    x = np.linspace(0, 1, 402)
    assert hardy_poincare_ratio(x * (1 - x), a, x) == pytest.approx(0.5, abs=1e-4)


def test_hardy_zero_field():
    a = prototype_coefficient(0.5, 0.0, "left")
    with pytest.raises(DegenerateFieldError):
        hardy_poincare_ratio(np.zeros(50), a)


def test_hardy_sine_mesh_doubling():
    a = prototype_coefficient(0.0, 0.0, "none")
    r1 = hardy_poincare_ratio(np.sin(np.pi * np.linspace(0, 1, 101)), a)
    r2 = hardy_poincare_ratio(np.sin(np.pi * np.linspace(0, 1, 201)), a)
    assert np.isfinite(r1) and abs(r2 - r1) <= 0.1 * abs(r1)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=-1e3, max_value=1e3).filter(lambda v: abs(v) > 1e-3))
def test_hardy_scale_invariance(c):
    a = prototype_coefficient(0.5, 0.0, "left")
    x = np.linspace(0, 1, 101)
    y = np.sin(np.pi * x) + 0.3 * np.sin(3 * np.pi * x)
    assert hardy_poincare_ratio(c * y, a, x) == pytest.approx(hardy_poincare_ratio(y, a, x),
                                                              rel=1e-12)


def test_tabulated_roundtrip(tmp_path):
    x = np.linspace(0, 1, 2001)
    path = tmp_path / "a.txt"
    np.savetxt(path, np.column_stack([x, x]))
    a = load_tabulated(path, alpha_left=1.0, side="left")
    assert a(0.5) == pytest.approx(0.5)
    assert d_star(a) == pytest.approx(1.0, rel=1e-6)


def test_restricted_keeps_degeneracy():
    a = prototype_coefficient(0.5, 0.5, "both")
    left = a.restricted(0.0, 0.7)
    assert left.degeneracy_side == "left"
    assert left.domain == (0.0, 0.7)
