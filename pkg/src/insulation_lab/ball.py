"""Energy problem on a ball with a radial polynomial heat source.

The minimiser of

    J_m(u) = 1/2 int |grad u|^2 + 1/(2m) (int_{boundary} |u|)^2 - int f u

on ``B_R`` is radial.  Its radial derivative is

    u_r(r) = -r^(1-n) int_0^r f(s) s^(n-1) ds

and the additive constant is fixed by the boundary condition
``u_r(R) = -(1/m) int_{boundary} u``.  Boundary data are available in closed
form; the radial profile and the energy are evaluated by composite
Gauss-Legendre quadrature so the two routes can be compared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DegenerateDistributionError, DomainError, ValidationError, VerificationError

__all__ = [
    "BallConfig",
    "RadialSource",
    "CompositeGauss",
    "EnergyBallSolution",
    "solve_radial",
    "energy_value",
    "optimal_distribution",
    "insulation_density",
]

MAX_DEGREE = 12
GRID_POINTS = 1001


@dataclass(frozen=True)
class BallConfig:
    """Dimension and radius of the ball ``B_R`` in R^n."""

    n: int
    R: float

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.n!r}")
        R = float(self.R)
        if not (math.isfinite(R) and R > 0.0):
            raise DomainError(f"radius must be positive and finite, got {self.R!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "R", R)

    @property
    def omega_n(self) -> float:
        """Volume of the unit ball."""
        return math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1)

    @property
    def perimeter(self) -> float:
        return self.n * self.omega_n * self.R ** (self.n - 1)

    @property
    def volume(self) -> float:
        return self.omega_n * self.R**self.n


@dataclass(frozen=True)
class RadialSource:
    """Heat source ``f(r) = sum_k c_k r^k`` (degree at most 12)."""

    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValidationError("source needs at least one coefficient")
        if len(coeffs) - 1 > MAX_DEGREE:
            raise ValidationError(f"source degree {len(coeffs) - 1} exceeds {MAX_DEGREE}")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError("source coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def constant(cls, value: float = 1.0) -> "RadialSource":
        return cls((value,))

    @classmethod
    def parse(cls, text: str) -> "RadialSource":
        """Parse a comma separated coefficient list, lowest degree first."""
        try:
            return cls(tuple(float(tok) for tok in text.split(",")))
        except ValueError:
            raise ValidationError(f"cannot parse source coefficients {text!r}") from None

    def __call__(self, r):
        return P.polyval(np.asarray(r, dtype=float), self.coefficients)

    def derivative(self, r):
        return P.polyval(np.asarray(r, dtype=float), P.polyder(self.coefficients))

    def scaled(self, factor: float) -> "RadialSource":
        return RadialSource(tuple(factor * c for c in self.coefficients))

    def grid(self, R: float) -> np.ndarray:
        return np.linspace(0.0, R, GRID_POINTS)

    def validate(self, R: float) -> None:
        """Nonnegativity and nontriviality on a 1001-point grid of [0, R]."""
        r = self.grid(R)
        values = self(r)
        scale = max(abs(c) * R**k for k, c in enumerate(self.coefficients))
        bad = np.nonzero(values < -1e-12 * scale)[0]
        if bad.size:
            i = bad[0]
            raise ValidationError(
                f"source is negative at r = {r[i]:.6g} (f = {values[i]:.6g}); "
                f"{bad.size} grid points violate f >= 0"
            )
        if not np.max(values) > 0.0:
            raise ValidationError("source vanishes identically on [0, R]")

    def mean_over_ball(self, config: BallConfig) -> float:
        """Closed form of the ball average: sum_k c_k n R^k / (k + n)."""
        n, R = config.n, config.R
        return sum(c * n * R**k / (k + n) for k, c in enumerate(self.coefficients))

    def monotonicity(self, R: float, tol: float = 1e-12) -> str:
        """'constant', 'nondecreasing', 'nonincreasing' or 'mixed' on the grid."""
        values = self(self.grid(R))
        diffs = np.diff(values)
        scale = max(1.0, float(np.max(np.abs(values))))
        up = bool(np.all(diffs >= -tol * scale))
        down = bool(np.all(diffs <= tol * scale))
        if up and down:
            return "constant"
        if up:
            return "nondecreasing"
        if down:
            return "nonincreasing"
        return "mixed"


class CompositeGauss:
    """Composite Gauss-Legendre rule on ``[0, b]`` with uniform panels."""

    def __init__(self, b: float, panels: int = 256, order: int = 5):
        self.b = float(b)
        self.panels = panels
        self.order = order
        self.edges = np.linspace(0.0, self.b, panels + 1)
        self._x, self._w = np.polynomial.legendre.leggauss(order)
        h = self.b / panels
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.nodes = (mid[:, None] + 0.5 * h * self._x[None, :]).ravel()
        self.weights = np.tile(0.5 * h * self._w, panels)

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, g(self.nodes)))

    def cumulative(self, g: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
        """int_0^x g for every entry of ``x`` (vectorised over ``x``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        panel_sums = (self.weights * g(self.nodes)).reshape(self.panels, self.order).sum(axis=1)
        prefix = np.concatenate(([0.0], np.cumsum(panel_sums)))
        h = self.b / self.panels
        k = np.clip(np.floor(x / h).astype(int), 0, self.panels - 1)
        left = self.edges[k]
        half = 0.5 * (x - left)
        pts = (left + half)[:, None] + half[:, None] * self._x[None, :]
        partial = (half[:, None] * self._w[None, :] * g(pts.ravel()).reshape(pts.shape)).sum(axis=1)
        return prefix[k] + partial


@dataclass(frozen=True)
class EnergyBallSolution:
    config: BallConfig
    source: RadialSource
    m: float
    mean_f: float
    u_R: float
    ur_R: float
    urr_R: float
    energy: float
    radii: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    ur: np.ndarray = field(repr=False)
    quadrature: CompositeGauss = field(repr=False, compare=False)

    def _weighted_mass(self, r: np.ndarray) -> np.ndarray:
        n = self.config.n
        return self.quadrature.cumulative(lambda s: self.source(s) * s ** (n - 1), r)

    def radial_derivative(self, r) -> np.ndarray:
        """u_r(r) evaluated by quadrature of the source."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = -r[pos] ** (1 - self.config.n) * self._weighted_mass(r[pos])
        return out

    def temperature(self, r) -> np.ndarray:
        """u(r) = u(R) + int_r^R (-u_r)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        q = self.quadrature
        total = q.cumulative(self.radial_derivative, [self.config.R])[0]
        return self.u_R + q.cumulative(self.radial_derivative, r) - total

    def boundary_integral(self) -> float:
        """int over the sphere of u, i.e. perimeter * u(R)."""
        return self.config.perimeter * self.u_R

    def source_work(self) -> float:
        """int_{B_R} f u dx by quadrature."""
        n = self.config.n
        q = self.quadrature
        return n * self.config.omega_n * float(
            np.dot(q.weights, self.source(q.nodes) * self.temperature(q.nodes) * q.nodes ** (n - 1))
        )

    def ode_residual(self, h: float = 1e-3) -> float:
        """max |-(u_rr + (n-1)/r u_r) - f| on interior grid points.

        u_rr is a fourth-order central difference of the quadrature u_r.
        """
        R, n = self.config.R, self.config.n
        r = self.radii[(self.radii > 4 * h) & (self.radii < R - 4 * h)]
        d = self.radial_derivative
        urr = (-d(r + 2 * h) + 8 * d(r + h) - 8 * d(r - h) + d(r - 2 * h)) / (12 * h)
        res = -(urr + (n - 1) / r * d(r)) - self.source(r)
        return float(np.max(np.abs(res)))


def solve_radial(config: BallConfig, f: RadialSource, m: float, panels: int = 256) -> EnergyBallSolution:
    """Radial minimiser of J_m on ``B_R`` together with its boundary data."""
    m = float(m)
    if not (math.isfinite(m) and m > 0.0):
        raise DomainError(f"insulation amount m must be positive, got {m}")
    f.validate(config.R)

    n, R = config.n, config.R
    mean_f = f.mean_over_ball(config)
    ur_R = -(R / n) * mean_f
    u_R = m * mean_f / (n * n * config.omega_n * R ** (n - 2))
    urr_R = -float(f(R)) - (n - 1) / R * ur_R

    quad = CompositeGauss(R, panels=panels)
    sol = EnergyBallSolution(
        config=config, source=f, m=m, mean_f=mean_f, u_R=u_R, ur_R=ur_R, urr_R=urr_R,
        energy=0.0, radii=quad.edges.copy(), u=np.empty(0), ur=np.empty(0), quadrature=quad,
    )
    ur = sol.radial_derivative(quad.edges)
    u = sol.temperature(quad.edges)

    # J_m at the minimiser, each term by quadrature
    nodes, w = quad.nodes, quad.weights
    shell = n * config.omega_n * nodes ** (n - 1)
    grad = 0.5 * float(np.dot(w, shell * sol.radial_derivative(nodes) ** 2))
    boundary = (config.perimeter * u_R) ** 2 / (2.0 * m)
    work = float(np.dot(w, shell * f(nodes) * sol.temperature(nodes)))
    energy = grad + boundary - work

    sol = EnergyBallSolution(
        config=config, source=f, m=m, mean_f=mean_f, u_R=u_R, ur_R=ur_R, urr_R=urr_R,
        energy=energy, radii=quad.edges.copy(), u=u, ur=ur, quadrature=quad,
    )
    bc = abs(ur_R + config.perimeter * u_R / m)
    if bc > 1e-12 * abs(ur_R):
        raise VerificationError(f"boundary condition residual {bc:.3g}")
    return sol


def energy_value(sol: EnergyBallSolution) -> float:
    """E_m(B_R), checked against the identity E_m = -1/2 int f u."""
    half_work = -0.5 * sol.source_work()
    if abs(sol.energy - half_work) > 1e-8 * abs(sol.energy):
        raise VerificationError(
            f"energy {sol.energy:.12g} disagrees with -1/2 int f u = {half_work:.12g}"
        )
    return sol.energy


def optimal_distribution(sol: EnergyBallSolution) -> Callable[[np.ndarray], np.ndarray]:
    """Insulation density h_m = m |u| / int |u| on the sphere.

    The trace of the radial solution is constant, so ``h_m`` is the constant
    m / perimeter; the returned callable accepts any array of boundary points
    (or angles) and broadcasts over its leading shape.
    """
    if sol.u_R == 0.0:
        raise DegenerateDistributionError("boundary trace vanishes identically")
    value = sol.m * abs(sol.u_R) / (sol.config.perimeter * abs(sol.u_R))

    def h(points) -> np.ndarray:
        shape = np.shape(points)
        if len(shape) > 1:
            shape = shape[:-1]
        return np.full(shape, value)

    h.value = value  # type: ignore[attr-defined]
    return h


def insulation_density(trace: Sequence[float], weights: Sequence[float], m: float) -> np.ndarray:
    """Discrete h_m from nodal boundary values and boundary quadrature weights.

    Satisfies ``sum(weights * h) == m``.
    """
    trace = np.abs(np.asarray(trace, dtype=float))
    weights = np.asarray(weights, dtype=float)
    total = float(np.dot(weights, trace))
    if not total > 0.0:
        raise DegenerateDistributionError("boundary trace vanishes identically")
    return m * trace / total
