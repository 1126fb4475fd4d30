"""Bessel functions of the first kind and bracketed root finding.

Only real order ``nu >= 0`` and real argument ``0 <= x <= 1e4`` are
supported.  Small arguments use the ascending power series; larger ones use
Miller's backward recurrence in the order, normalised with the Neumann-type
sum

    (x/2)**nu0 = sum_k (nu0 + 2k) Gamma(nu0 + k) / k! * J_{nu0+2k}(x)

where ``nu0`` is the fractional part of the order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketError, DomainError, EvaluationError

__all__ = [
    "BesselEval",
    "bessel_j",
    "bessel_j_prime",
    "bessel_eval",
    "find_root",
    "J1_PRIME_FIRST_ZERO",
]

SERIES_CUTOFF = 6.0
MAX_ARGUMENT = 1.0e4
# first positive zero of J_1', used for domain checks elsewhere
J1_PRIME_FIRST_ZERO = 1.8411837813406593


@dataclass(frozen=True)
class BesselEval:
    order: float
    argument: float
    value: float
    derivative: float


def _check(order: float, x: float) -> tuple[float, float]:
    try:
        order = float(order)
        x = float(x)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"non-numeric Bessel argument: {exc}") from None
    if not (math.isfinite(order) and math.isfinite(x)):
        raise DomainError(f"non-finite Bessel argument (order={order}, x={x})")
    if order < 0.0:
        raise DomainError(f"order must be >= 0, got {order}")
    if x < 0.0 or x > MAX_ARGUMENT:
        raise DomainError(f"argument must lie in [0, {MAX_ARGUMENT:g}], got {x}")
    return order, x


def _leading_term(order: float, half_x: float) -> float:
    if order < 170.0:
        return half_x**order / math.gamma(order + 1.0)
    return math.exp(order * math.log(half_x) - math.lgamma(order + 1.0))


def _series(order: float, x: float) -> float:
    half = 0.5 * x
    q = half * half
    term = _leading_term(order, half)
    if term == 0.0:
        return 0.0
    terms = [term]
    partial = term
    k = 0
    while True:
        k += 1
        term = -term * q / (k * (k + order))
        terms.append(term)
        partial += term
        # only stop once the terms have started to shrink
        if k > q and abs(term) < 1e-17 * abs(partial):
            break
        if k > 500:
            break
    return math.fsum(terms)


def _miller(order: float, x: float) -> float:
    n_int = int(math.floor(order))
    frac = order - n_int
    top = max(n_int, int(x))
    start = top + int(math.sqrt(160.0 * top)) + 20
    if start % 2:
        start += 1

    # backward recurrence J_{mu-1} = (2 mu / x) J_mu - J_{mu+1}, mu = frac + k
    j_next = 0.0
    j_cur = 1e-300
    target = 0.0
    norm = 0.0
    # Gamma(frac + k) / k! for even k, accumulated on the way down is awkward,
    # so collect the even-order values and weight them afterwards
    even_values: dict[int, float] = {}
    for k in range(start, 0, -1):
        mu = frac + k
        j_prev = (2.0 * mu / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if k - 1 == n_int:
            target = j_cur
        if (k - 1) % 2 == 0:
            even_values[k - 1] = j_cur
        if abs(j_cur) > 1e250:
            scale = 1e-250
            j_cur *= scale
            j_next *= scale
            target *= scale
            for key in even_values:
                even_values[key] *= scale
    if n_int == start:
        target = j_next

    # g_k = Gamma(frac + k) / k!, with g_1 = Gamma(frac + 1)
    g = math.gamma(frac + 1.0)
    norm = g * even_values[0]
    for k in range(1, start // 2 + 1):
        if k > 1:
            g *= (frac + k - 1.0) / k
        idx = 2 * k
        if idx not in even_values:
            break
        norm += (frac + 2.0 * k) * g * even_values[idx]
    return target * (0.5 * x) ** frac / norm


def _j(order: float, x: float) -> float:
    if x == 0.0:
        return 1.0 if order == 0.0 else 0.0
    if x <= SERIES_CUTOFF:
        return _series(order, x)
    return _miller(order, x)


def bessel_j(order: float, x: float) -> float:
    """J_order(x) for real order >= 0 and 0 <= x <= 1e4."""
    order, x = _check(order, x)
    return _j(order, x)


def bessel_j_prime(order: float, x: float) -> float:
    """Derivative of J_order at x, via J_nu' = (nu/x) J_nu - J_{nu+1}."""
    order, x = _check(order, x)
    if x == 0.0:
        if order == 0.0 or order > 1.0:
            return 0.0
        if order == 1.0:
            return 0.5
        raise DomainError(f"J_{order}' is unbounded at x = 0")
    return (order / x) * _j(order, x) - _j(order + 1.0, x)


def bessel_eval(order: float, x: float) -> BesselEval:
    return BesselEval(float(order), float(x), bessel_j(order, x), bessel_j_prime(order, x))


def find_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 400,
) -> float:
    """Root of ``f`` inside ``[lo, hi]`` by an Illinois/bisection hybrid.

    Requires a strict sign change.  The bracket is shrunk until its width is
    at most ``tol``; the endpoint with the smaller residual is returned.
    """
    if not (tol > 0.0):
        raise DomainError(f"tol must be positive, got {tol}")
    if not (lo < hi):
        raise BracketError(f"empty bracket [{lo}, {hi}]")

    def ev(x: float) -> float:
        try:
            y = float(f(x))
        except ArithmeticError as exc:
            raise EvaluationError(f"f({x!r}) failed: {exc}") from None
        if not math.isfinite(y):
            raise EvaluationError(f"f({x!r}) = {y}")
        return y

    a, b = float(lo), float(hi)
    fa, fb = ev(a), ev(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise BracketError(f"no sign change on [{a}, {b}]: f = {fa:.3g}, {fb:.3g}")

    # ga, gb are Illinois-weighted copies of fa, fb used only for the secant
    ga, gb = fa, fb
    last = ""
    stale = 0
    for _ in range(max_iter):
        width = b - a
        if width <= tol:
            break
        x = (a * gb - b * ga) / (gb - ga)
        if not (a < x < b) or stale >= 2:
            x = 0.5 * (a + b)
            stale = 0
        fx = ev(x)
        if fx == 0.0:
            return x
        if (fx < 0.0) == (fa < 0.0):
            a, fa, ga = x, fx, fx
            if last == "a":
                gb *= 0.5
            last = "a"
        else:
            b, fb, gb = x, fx, fx
            if last == "b":
                ga *= 0.5
            last = "b"
        stale = stale + 1 if (b - a) > 0.5 * width else 0
    return a if abs(fa) <= abs(fb) else b
