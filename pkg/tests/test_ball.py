import math

import numpy as np
import pytest

from insulation_lab.ball import (
    BallConfig,
    CompositeGauss,
    RadialSource,
    energy_value,
    insulation_density,
    optimal_distribution,
    solve_radial,
)
from insulation_lab.errors import DegenerateDistributionError, DomainError, ValidationError


def random_instances(count, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(2, 6))
        R = float(rng.uniform(0.3, 3.0))
        m = float(10 ** rng.uniform(-2, 2))
        deg = int(rng.integers(0, 6))
        # nonnegative coefficients keep f >= 0 on [0, R]
        coeffs = tuple(rng.uniform(0, 2, size=deg + 1))
        out.append((BallConfig(n, R), RadialSource(coeffs), m))
    return out


def test_geometry():
    assert BallConfig(2, 1).omega_n == pytest.approx(math.pi)
    assert BallConfig(3, 1).omega_n == pytest.approx(4 * math.pi / 3)
    for n in range(2, 7):
        c = BallConfig(n, 1.7)
        assert c.perimeter * c.R == pytest.approx(n * c.volume, rel=1e-14)


@pytest.mark.parametrize("n,R", [(1, 1.0), (2, 0.0), (2, -1.0), (2.5, 1.0), (2, float("inf"))])
def test_bad_config(n, R):
    with pytest.raises(DomainError):
        BallConfig(n, R)


def test_disk_constant_source():
    sol = solve_radial(BallConfig(2, 1.0), RadialSource.constant(), 1.0)
    assert sol.ur_R == pytest.approx(-0.5, rel=1e-15)
    assert sol.u_R == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert sol.urr_R == pytest.approx(-0.5, rel=1e-15)


def test_three_ball():
    sol = solve_radial(BallConfig(3, 2.0), RadialSource.constant(), 5.0)
    assert sol.ur_R == pytest.approx(-2 / 3, rel=1e-15)
    assert sol.u_R == pytest.approx(5 / (24 * math.pi), rel=1e-14)


def test_zero_source_rejected():
    with pytest.raises(ValidationError):
        solve_radial(BallConfig(2, 1.0), RadialSource((0.0,)), 1.0)


def test_negative_source_names_point():
    with pytest.raises(ValidationError, match=r"r = 0\.708"):
        RadialSource((1, 0, -2)).validate(1.0)
    RadialSource((1, 0, -1)).validate(1.0)  # f(R) = 0 is fine


@pytest.mark.parametrize("m", [0.0, -1.0, float("nan")])
def test_bad_m(m):
    with pytest.raises(DomainError):
        solve_radial(BallConfig(2, 1.0), RadialSource.constant(), m)


def test_source_limits():
    with pytest.raises(ValidationError):
        RadialSource(tuple(range(14)))
    with pytest.raises(ValidationError):
        RadialSource(())
    assert RadialSource.parse("1, 0, 2").coefficients == (1.0, 0.0, 2.0)
    with pytest.raises(ValidationError):
        RadialSource.parse("1,x")


def test_source_derivative_and_shape():
    f = RadialSource((1, 0, 1))
    assert f.derivative(1.0) == pytest.approx(2.0)
    assert f.monotonicity(1.0) == "nondecreasing"
    assert RadialSource((2, 0, -1)).monotonicity(1.0) == "nonincreasing"
    assert RadialSource.constant(3).monotonicity(1.0) == "constant"
    assert RadialSource((1, -3, 3)).monotonicity(1.0) == "mixed"


def test_composite_gauss_exact_on_polynomials():
    q = CompositeGauss(2.0)
    assert q.integrate(lambda x: x**9) == pytest.approx(2.0**10 / 10, rel=1e-14)
    x = np.array([0.0, 0.3, 1.0, 1.77, 2.0])
    assert np.allclose(q.cumulative(lambda s: s**3, x), x**4 / 4, rtol=1e-14, atol=1e-16)


def test_closed_forms_match_quadrature_random():
    for config, f, m in random_instances(50):
        sol = solve_radial(config, f, m)
        # mean of f by quadrature
        q = sol.quadrature
        n, R = config.n, config.R
        mean_q = n * config.omega_n * q.integrate(lambda r: f(r) * r ** (n - 1)) / config.volume
        assert sol.mean_f == pytest.approx(mean_q, rel=1e-10)
        assert sol.radial_derivative(R)[0] == pytest.approx(sol.ur_R, rel=1e-10)
        # u_rr(R) by differentiating the quadrature u_r
        h = 1e-4 * R
        d = sol.radial_derivative
        urr = (3 * d(R) - 4 * d(R - h) + d(R - 2 * h))[0] / (2 * h)
        assert urr == pytest.approx(sol.urr_R, rel=1e-5, abs=1e-7)
        # compatibility: int_S u = -m u_r(R)
        assert sol.boundary_integral() == pytest.approx(-m * sol.ur_R, rel=1e-10)
        assert sol.temperature(R)[0] == pytest.approx(sol.u_R, rel=1e-12)


def test_ode_residual_and_positivity():
    for config, f, m in random_instances(10, seed=3):
        sol = solve_radial(config, f, m)
        fmax = float(np.max(f(f.grid(config.R))))
        assert sol.ode_residual() <= 1e-8 * fmax
        assert np.all(sol.u > 0)


def test_monotone_source_gives_decreasing_u():
    sol = solve_radial(BallConfig(2, 1.0), RadialSource((2, 0, -1)), 2.0)
    assert np.all(sol.ur <= 0)
    assert np.all(np.diff(sol.u) < 0)


def test_energy_identity_and_trends():
    config = BallConfig(2, 1.0)
    f = RadialSource.constant()
    e1 = energy_value(solve_radial(config, f, 1.0))
    # u = u_R + (1 - r^2)/4 by hand
    exact = -0.5 * (math.pi / (4 * math.pi) + math.pi / 8)
    assert e1 == pytest.approx(exact, rel=1e-12)
    energies = [energy_value(solve_radial(config, f, m)) for m in (0.5, 1, 2, 10, 100)]
    assert all(b < a for a, b in zip(energies[:-1], energies[1:]))
    e2 = energy_value(solve_radial(config, f.scaled(2.0), 1.0))
    assert e2 == pytest.approx(4 * e1, rel=1e-12)


def test_energy_identity_random():
    for config, f, m in random_instances(20, seed=11):
        sol = solve_radial(config, f, m)
        assert energy_value(sol) == pytest.approx(-0.5 * sol.source_work(), rel=1e-8)


@pytest.mark.parametrize("n,R,m,value", [(2, 1.0, 3.0, 3 / (2 * math.pi)), (3, 1.0, 1.0, 1 / (4 * math.pi))])
def test_optimal_distribution_constant(n, R, m, value):
    config = BallConfig(n, R)
    h = optimal_distribution(solve_radial(config, RadialSource.constant(), m))
    assert h.value == pytest.approx(value, rel=1e-14)
    theta = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(h(theta), value)
    assert h.value * config.perimeter == pytest.approx(m, rel=1e-10)


def test_discrete_density_integrates_to_m():
    trace = np.array([0.3, -0.1, 0.0, 0.5])
    w = np.array([0.2, 0.3, 0.1, 0.4])
    h = insulation_density(trace, w, 2.5)
    assert w @ h == pytest.approx(2.5)
    with pytest.raises(DegenerateDistributionError):
        insulation_density(np.zeros(4), w, 1.0)
