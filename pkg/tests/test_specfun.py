import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from insulation_lab.errors import BracketError, DomainError, EvaluationError
from insulation_lab.specfun import (
    J1_PRIME_FIRST_ZERO,
    bessel_eval,
    bessel_j,
    bessel_j_prime,
    find_root,
)


def test_values_at_zero():
    assert bessel_j(0, 0) == 1.0
    assert bessel_j(1, 0) == 0.0
    assert bessel_j(2.5, 0) == 0.0
    assert bessel_j_prime(1, 0) == 0.5
    assert bessel_j_prime(0, 0) == 0.0


def test_first_zero_of_j0():
    assert abs(bessel_j(0, 2.4048255577)) < 1e-9


def test_first_zero_of_j1_prime():
    assert abs(bessel_j_prime(1, 1.8411837813)) < 1e-9


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_j0_prime_is_minus_j1(x):
    assert bessel_j_prime(0, x) == pytest.approx(-bessel_j(1, x), rel=1e-13)


def test_half_order_closed_form_derivative():
    x = math.pi
    # d/dx sqrt(2/(pi x)) sin x = sqrt(2/(pi x)) (cos x - sin x / (2x))
    expected = math.sqrt(2 / (math.pi * x)) * (math.cos(x) - math.sin(x) / (2 * x))
    assert bessel_j_prime(0.5, x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("x", [0.01, 0.7, 3.0, 6.5, 11.9, 12.1, 40.0])
def test_half_order_closed_form(x):
    assert bessel_j(0.5, x) == pytest.approx(math.sqrt(2 / (math.pi * x)) * math.sin(x), rel=1e-12, abs=1e-15)


def test_against_scipy_grid():
    # absolute error bound of 1e-12 for x <= 50
    worst = 0.0
    for nu in [0, 0.5, 1, 1.5, 2, 3.7, 5, 10, 20.3]:
        for x in np.linspace(0.0, 50.0, 251):
            worst = max(worst, abs(bessel_j(nu, x) - special.jv(nu, x)))
            if x > 0:
                worst = max(worst, abs(bessel_j_prime(nu, x) - special.jvp(nu, x)))
    assert worst < 1e-12


@pytest.mark.parametrize("x", [100.0, 1234.5, 9999.0])
def test_large_arguments(x):
    for nu in (0, 1, 2.5):
        assert bessel_j(nu, x) == pytest.approx(special.jv(nu, x), abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.05, 30.0))
def test_recurrence_and_derivative_identity(nu, x):
    jm = bessel_j(nu + 1, x)
    j0 = bessel_j(nu + 2, x)
    jp = bessel_j(nu + 3, x)
    scale = max(abs(jm), abs(jp), abs((2 * (nu + 2) / x) * j0), 1e-300)
    assert abs(jm + jp - (2 * (nu + 2) / x) * j0) <= 1e-10 * scale
    d = bessel_j_prime(nu + 1, x)
    alt = 0.5 * (bessel_j(nu, x) - bessel_j(nu + 2, x))
    assert abs(d - alt) <= 1e-10 * max(abs(d), abs(bessel_j(nu, x)), 1e-300)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.05, 30.0))
def test_wronskian_style_identity(nu, x):
    # J_v J'_{v+1} - J'_v J_{v+1} + J_v J_{v+1} / x = J_v^2 + J_{v+1}^2 - (2v/x) J_v J_{v+1}
    a, b = bessel_j(nu, x), bessel_j(nu + 1, x)
    lhs = a * bessel_j_prime(nu + 1, x) - bessel_j_prime(nu, x) * b + a * b / x
    rhs = a * a + b * b - (2 * nu / x) * a * b
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(a * b) * (1 + 2 * nu / x))


def test_bessel_eval_record():
    e = bessel_eval(1, 2.0)
    assert e.order == 1.0 and e.argument == 2.0
    assert e.value == bessel_j(1, 2.0)
    assert e.derivative == bessel_j_prime(1, 2.0)


@pytest.mark.parametrize(
    "args",
    [(-1, 1.0), (0, -0.1), (0, 1.0e4 + 1), (float("nan"), 1.0), (0, float("inf")), ("a", 1.0)],
)
def test_domain_errors(args):
    with pytest.raises(DomainError):
        bessel_j(*args)


def test_derivative_singular_at_zero():
    with pytest.raises(DomainError):
        bessel_j_prime(0.5, 0.0)


def test_find_root_examples():
    assert find_root(lambda x: bessel_j_prime(1, x), 1.5, 2.5, 1e-12) == pytest.approx(1.8411837813, abs=1e-10)
    assert find_root(lambda x: x - 1, 0, 2, 1e-12) == pytest.approx(1.0, abs=1e-12)
    assert find_root(lambda x: bessel_j(0, x), 2, 3, 1e-12) == pytest.approx(2.4048255577, abs=1e-10)
    assert J1_PRIME_FIRST_ZERO == pytest.approx(special.jnp_zeros(1, 1)[0], rel=1e-15)


def test_find_root_is_deterministic():
    f = lambda x: math.cos(x) - x  # noqa: E731
    runs = {find_root(f, 0.0, 1.0, 1e-13) for _ in range(5)}
    assert len(runs) == 1


def test_find_root_hard_cases_fall_back_to_bisection():
    # flat on one side; plain regula falsi stalls here
    r = find_root(lambda x: x**9 - 1e-9, 0.0, 1.0, 1e-14)
    assert r == pytest.approx(1e-1, rel=1e-10)


def test_find_root_errors():
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, -1, 1)
    with pytest.raises(BracketError):
        find_root(lambda x: x, 1, 1)
    with pytest.raises(EvaluationError):
        find_root(lambda x: float("nan") if x > 0.3 else -1.0, 0, 1)
    with pytest.raises(DomainError):
        find_root(lambda x: x, -1, 1, tol=0)
