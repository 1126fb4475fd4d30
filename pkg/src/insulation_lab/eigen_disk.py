"""Insulated eigenvalue on a ball through Bessel-function equations.

Above the threshold m0 the minimiser is radial and positive,

    u(r) = c r^(1-n/2) J_{n/2-1}(k r),    lambda = k^2,

with the Robin-type condition u_r(R) = -(P/m) u(R).  Using
u'(r) = -k r^(1-n/2) J_{n/2}(k r) this becomes the scalar equation

    T(lambda) = -k R^(1-n/2) J_{n/2}(k R) + (P/m) R^(1-n/2) J_{n/2-1}(k R) = 0.

The first nonzero Neumann eigenvalue mu2 comes from the first positive root
of z J'_{n/2}(z) - ((n-2)/2) J_{n/2}(z), and m0 mu2 = ((n-1)/n) P^2/|B|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ball import BallConfig
from .errors import BracketError, DomainError, RegimeError, UnsupportedDimensionError, VerificationError
from .specfun import J1_PRIME_FIRST_ZERO, bessel_j, bessel_j_prime, find_root

__all__ = [
    "EigenBallSolution",
    "EigenModeForm",
    "neumann_mu2",
    "m0_threshold",
    "transcendental_residual",
    "lambda_m",
    "fs_factor",
    "eigen_mode_form",
    "mlambda_scan",
    "LandauReport",
    "landau_check",
]

SCAN_POINTS = 64
RESIDUAL_BOUND = 1e-10


@dataclass(frozen=True)
class EigenBallSolution:
    config: BallConfig
    m: float
    lam: float
    u_R: float
    ur_R: float
    urr_R: float
    residual: float

    @property
    def m_lambda(self) -> float:
        return self.m * self.lam


@dataclass(frozen=True)
class EigenModeForm:
    s: int
    f_s: float
    q_value: float


def _neumann_function(n: int, z: float) -> float:
    nu = n / 2
    return z * bessel_j_prime(nu, z) - (nu - 1.0) * bessel_j(nu, z)


def neumann_mu2(config: BallConfig) -> float:
    """First nonzero Neumann eigenvalue of the Laplacian on B_R."""
    n = config.n
    if n == 2:
        z_star = J1_PRIME_FIRST_ZERO
    else:
        grid = np.linspace(0.05, 4.0 + n, 400)
        vals = [_neumann_function(n, z) for z in grid]
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa * fb < 0:
                z_star = find_root(lambda z: _neumann_function(n, z), float(a), float(b), tol=1e-15)
                break
        else:  # pragma: no cover - the root always lies below n/2 + 2
            raise BracketError(f"no Neumann root found for n = {n}")
    return (z_star / config.R) ** 2


def transcendental_residual(config: BallConfig, m: float, lam: float) -> float:
    n, R = config.n, config.R
    k = math.sqrt(lam)
    z = k * R
    scale = R ** (1 - n / 2)
    return -k * scale * bessel_j(n / 2, z) + (config.perimeter / m) * scale * bessel_j(n / 2 - 1, z)


def m0_threshold(config: BallConfig) -> float:
    """Symmetry-breaking threshold m0 = ((n-1)/n) P^2 / (|B| mu2).

    The identity is used, then checked: the radial equation at
    (lambda, m) = (mu2, m0) must hold to 1e-8.
    """
    mu2 = neumann_mu2(config)
    n = config.n
    m0 = (n - 1) / n * config.perimeter**2 / config.volume / mu2
    res = transcendental_residual(config, m0, mu2)
    scale = math.sqrt(mu2) * config.R ** (1 - n / 2)
    if abs(res) > 1e-8 * max(1.0, scale):
        raise VerificationError(f"radial equation at (mu2, m0) has residual {res:.3g}")
    return m0


def _normalise(config: BallConfig, m: float, lam: float) -> EigenBallSolution:
    n, R = config.n, config.R
    nu = n / 2 - 1
    z = math.sqrt(lam) * R
    jv = bessel_j(nu, z)
    jp = bessel_j_prime(nu, z) if z > 0 else 0.0
    # int_0^R r J_nu(k r)^2 dr = (R^2/2)(J_nu'(z)^2 + (1 - nu^2/z^2) J_nu(z)^2)
    radial = 0.5 * R * R * (jp * jp + (1.0 - nu * nu / (z * z)) * jv * jv)
    c = 1.0 / math.sqrt(n * config.omega_n * radial)
    u_R = c * R ** (1 - n / 2) * jv
    P = config.perimeter
    return EigenBallSolution(
        config=config,
        m=m,
        lam=lam,
        u_R=u_R,
        ur_R=-(P / m) * u_R,
        urr_R=((n - 1) / R * P / m - lam) * u_R,
        residual=abs(transcendental_residual(config, m, lam)),
    )


def lambda_m(config: BallConfig, m: float) -> EigenBallSolution:
    """Radial branch of the insulated eigenvalue for m > m0."""
    m = float(m)
    if not (math.isfinite(m) and m > 0):
        raise DomainError(f"insulation amount m must be positive, got {m}")
    mu2 = neumann_mu2(config)
    m0 = m0_threshold(config)
    if m <= m0:
        raise RegimeError(
            f"m = {m:.6g} <= m0 = {m0:.6g}: the minimiser is not radial here, use the FEM eigen solver"
        )
    eps = 1e-9 * mu2
    grid = np.linspace(eps, mu2 - eps, SCAN_POINTS)
    vals = np.array([transcendental_residual(config, m, lam) for lam in grid])
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if flips.size != 1:
        raise RegimeError(f"expected one sign change of the radial equation, found {flips.size}")
    i = int(flips[0])
    lam = find_root(
        lambda x: transcendental_residual(config, m, x), float(grid[i]), float(grid[i + 1]), tol=1e-15 * mu2
    )
    sol = _normalise(config, m, lam)
    if sol.residual > RESIDUAL_BOUND:
        raise VerificationError(f"radial equation residual {sol.residual:.3g} exceeds {RESIDUAL_BOUND}")
    if not (0 < lam < mu2):
        raise VerificationError(f"lambda = {lam} outside (0, mu2)")
    return sol


def _require_disk(config: BallConfig) -> None:
    if config.n != 2:
        raise UnsupportedDimensionError(
            f"the per-mode eigenvalue second variation is only available for n = 2, got n = {config.n}"
        )


def fs_factor(config: BallConfig, m: float, s: int, sol: EigenBallSolution | None = None) -> float:
    """f_s = (m lam - 2 pi) J_s(z) / (z J_s'(z)) - 2 pi with z = sqrt(lam) R."""
    _require_disk(config)
    if int(s) != s or s < 1:
        raise DomainError(f"mode must be an integer >= 1, got {s!r}")
    sol = sol or lambda_m(config, m)
    z = math.sqrt(sol.lam) * config.R
    # z < j'_{1,1} <= j'_{s,1}, so J_s'(z) > 0
    return (sol.m * sol.lam - 2 * math.pi) * bessel_j(s, z) / (z * bessel_j_prime(s, z)) - 2 * math.pi


def eigen_mode_form(config: BallConfig, m: float, s: int, sol: EigenBallSolution | None = None) -> EigenModeForm:
    """Coefficient of (c_s^2 + d_s^2) in lambda''(0)/2 for zeta = sum c_s cos s.th + d_s sin s.th.

    The Bessel summand carries R^2/m.  Finite differences of the FEM
    eigenvalue at R = 1.5 match this power; at R = 1 it is the same as R/m.
    """
    _require_disk(config)
    sol = sol or lambda_m(config, m)
    R = config.R
    fs = fs_factor(config, m, s, sol)
    u2 = sol.u_R**2
    bessel_part = (R * R / sol.m) * (2 * math.pi / sol.m - sol.lam) * math.pi * u2 * fs
    # (1/m) int_S u^2 times int |grad_S zeta|^2 per mode, pi R s^2/R^2 minus the s = 1 shift
    boundary_part = (1 / sol.m) * (2 * math.pi * R * u2) * math.pi * R * (s * s - 1) / (R * R)
    return EigenModeForm(s=int(s), f_s=fs, q_value=bessel_part + boundary_part)


def mlambda_scan(config: BallConfig, m_grid: Sequence[float]) -> list[EigenBallSolution]:
    """lambda_m along an increasing m-grid; m lambda_m must increase strictly."""
    grid = [float(m) for m in m_grid]
    if not grid:
        raise DomainError("empty m-grid")
    rows = [lambda_m(config, m) for m in grid]
    order = np.argsort(grid)
    ml = [rows[i].m_lambda for i in order]
    for a, b in zip(ml[:-1], ml[1:]):
        if not b > a:
            raise VerificationError("m * lambda_m is not strictly increasing along the grid")
    return rows


def mlambda_limits(config: BallConfig) -> tuple[float, float]:
    """(value at m0+, limit as m -> infinity) of m lambda_m."""
    iso = config.perimeter**2 / config.volume
    return (config.n - 1) / config.n * iso, iso


@dataclass(frozen=True)
class LandauReport:
    t_values: tuple[float, ...]
    s_values: tuple[float, ...]
    ratios: dict
    decreasing: bool
    consecutive_increasing: bool


def landau_check(t_grid: Iterable[float], s_grid: Iterable[float]) -> LandauReport:
    """s -> J_s(t) / (t J_s'(t)) strictly decreasing for t in (0, j'_{1,1})."""
    ts = tuple(float(t) for t in t_grid)
    ss = tuple(sorted(float(s) for s in s_grid))
    if not ts or not ss:
        raise DomainError("t and s grids must be nonempty")
    if any(s < 1 for s in ss):
        raise DomainError("orders must be >= 1")
    for t in ts:
        if not 0 < t < J1_PRIME_FIRST_ZERO:
            raise DomainError(f"t = {t} outside (0, {J1_PRIME_FIRST_ZERO})")
    ratios = {}
    decreasing = True
    increasing = True
    for t in ts:
        row = [bessel_j(s, t) / (t * bessel_j_prime(s, t)) for s in ss]
        ratios[t] = row
        decreasing &= all(b < a for a, b in zip(row[:-1], row[1:]))
        pair = [bessel_j(s, t) / bessel_j(s + 1, t) for s in ss]
        increasing &= all(b > a for a, b in zip(pair[:-1], pair[1:]))
    return LandauReport(ts, ss, ratios, decreasing, increasing)
