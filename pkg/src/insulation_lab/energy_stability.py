"""Second variation of the insulated energy at a ball, mode by mode.

For a volume preserving deformation with normal speed ``zeta`` equal to a
spherical harmonic of order ``s`` (normalised so int zeta^2 = 1 on the
sphere) the linearised temperature is harmonic with Neumann data
``-u_rr(R) zeta``.  Collecting terms gives

    Q_s = -(R/s) u_rr^2 + u_rr u_r - f'(R) u(R)
          + (P u(R)^2 / m) (s(s+n-2) - (n-1)) / R^2

where P is the perimeter.  ``Q_1`` reproduces the classification criterion
(up to the factor ``-R``) and ``Q_s - Q_1 > 0`` for every s >= 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ball import BallConfig, EnergyBallSolution, RadialSource, solve_radial
from .errors import DomainError, VerificationError

__all__ = [
    "ModeParts",
    "ModeForm",
    "StabilityVerdict",
    "mode_form",
    "criterion_value",
    "classify",
    "threshold_m1",
    "worst_mode",
    "SteklovReport",
    "steklov_inequality_check",
    "stability_table",
    "q1_consistency",
]

NONDECREASING = "nondecreasing-unstable"
NONINCREASING = "nonincreasing-stable"
THRESHOLD = "threshold"
UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class ModeParts:
    linearized: float
    curvature_gradient: float
    source: float
    nonlocal_boundary: float

    def total(self) -> float:
        return math.fsum((self.linearized, self.curvature_gradient, self.source, self.nonlocal_boundary))


@dataclass(frozen=True)
class ModeForm:
    s: int
    q_value: float
    parts: ModeParts


@dataclass(frozen=True)
class StabilityVerdict:
    case_label: str
    criterion_value: float
    stable: bool
    m1: Optional[float] = None
    marginal: bool = False


def mode_form(bd: EnergyBallSolution, s: int) -> ModeForm:
    if int(s) != s or s < 1:
        raise DomainError(f"mode must be an integer >= 1, got {s!r}")
    s = int(s)
    n, R = bd.config.n, bd.config.R
    urr, ur, uR = bd.urr_R, bd.ur_R, bd.u_R
    parts = ModeParts(
        # int v dv/dnu on the sphere, v = -(u_rr R / s)(r/R)^s Y_s
        linearized=-(R / s) * urr * urr,
        # mean curvature times u_r u_rr from moving the boundary
        curvature_gradient=urr * ur,
        source=-float(bd.source.derivative(R)) * uR,
        # tangential gradient of zeta against the sphere's first eigenvalue
        nonlocal_boundary=(bd.config.perimeter * uR * uR / bd.m) * (s * (s + n - 2) - (n - 1)) / R**2,
    )
    return ModeForm(s=s, q_value=parts.total(), parts=parts)


def criterion_value(config: BallConfig, f: RadialSource, m: float) -> float:
    """(f(R) - (n-1)/n fbar)(f(R) - fbar) + f'(R) fbar m / (n^2 w_n R^(n-1))."""
    n, R = config.n, config.R
    fbar = f.mean_over_ball(config)
    fR = float(f(R))
    dfR = float(f.derivative(R))
    return (fR - (n - 1) / n * fbar) * (fR - fbar) + dfR * fbar * m / (n * n * config.omega_n * R ** (n - 1))


def _case_label(config: BallConfig, f: RadialSource) -> str:
    shape = f.monotonicity(config.R)
    if shape == "nondecreasing":
        return NONDECREASING
    n, R = config.n, config.R
    fbar = f.mean_over_ball(config)
    if shape in ("constant", "nonincreasing") and float(f(R)) >= (n - 1) / n * fbar:
        return NONINCREASING
    if float(f.derivative(R)) < 0 and float(f(R)) < (n - 1) / n * fbar:
        return THRESHOLD
    return UNCLASSIFIED


def threshold_m1(config: BallConfig, f: RadialSource) -> Optional[float]:
    """Critical insulation amount for sources with f'(R) < 0 and small f(R).

    Returns None outside that case.  The criterion is linear in m, so m1 is
    its root; the sign flip is checked at 0.9 m1 and 1.1 m1.
    """
    n, R = config.n, config.R
    fbar = f.mean_over_ball(config)
    fR = float(f(R))
    dfR = float(f.derivative(R))
    if not (dfR < 0 and fR < (n - 1) / n * fbar):
        return None
    m1 = -(fR - (n - 1) / n * fbar) * (fR - fbar) * n * n * config.omega_n * R ** (n - 1) / (dfR * fbar)
    if not (criterion_value(config, f, 0.9 * m1) > 0 and criterion_value(config, f, 1.1 * m1) < 0):
        raise VerificationError(f"criterion does not change sign across m1 = {m1:.12g}")
    return m1


def classify(config: BallConfig, f: RadialSource, m: float) -> StabilityVerdict:
    if not (m > 0 and math.isfinite(m)):
        raise DomainError(f"insulation amount m must be positive, got {m}")
    f.validate(config.R)
    value = criterion_value(config, f, m)
    label = _case_label(config, f)
    m1 = threshold_m1(config, f) if label == THRESHOLD else None
    scale = max(1.0, f.mean_over_ball(config)) ** 2
    marginal = abs(value) <= 1e-12 * scale
    return StabilityVerdict(
        case_label=label,
        criterion_value=value,
        stable=value <= 0 or marginal,
        m1=m1,
        marginal=marginal,
    )


def worst_mode(bd: EnergyBallSolution, s_max: int) -> int:
    """argmin of Q_s over 1..s_max; anything other than 1 is a verification failure."""
    if int(s_max) != s_max or s_max < 2:
        raise DomainError(f"s_max must be an integer >= 2, got {s_max!r}")
    values = [mode_form(bd, s).q_value for s in range(1, int(s_max) + 1)]
    best = int(np.argmin(values)) + 1
    if best != 1:
        raise VerificationError(f"worst mode is {best}, expected translations (s = 1)")
    return best


@dataclass(frozen=True)
class SteklovReport:
    trials: int
    max_identity_error: float
    min_margin: float
    s1_equality_error: float
    per_mode_ratio: dict
    passed: bool


def _disk_mode_integrals(R: float, s: int, n_r: int = 64, n_theta: int = 256) -> tuple[float, float]:
    """Boundary and Dirichlet integrals of v = r^s cos(s theta) by quadrature."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    wt = 2 * np.pi / n_theta
    # |grad v|^2 = s^2 r^(2s-2) (cos^2 + sin^2)
    grad = np.sum(wr * r * s * s * r ** (2 * s - 2)) * wt * n_theta
    trace = np.sum((R**s * np.cos(s * theta)) ** 2) * wt * R
    return float(trace), float(grad)


def steklov_inequality_check(config: BallConfig, trials: int, seed: int = 0, s_max: int = 8) -> SteklovReport:
    """Trace inequality int_S v^2 <= R int_B |grad v|^2 for harmonic v with zero boundary mean.

    Per mode, int_S v_s^2 = (R/s) int_B |grad v_s|^2.  In 2D both sides are
    also integrated numerically; in any dimension random combinations are
    summed mode-wise using orthogonality.
    """
    if int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be a positive integer, got {trials!r}")
    R, n = config.R, config.n
    ratios = {}
    identity_err = 0.0
    for s in range(1, s_max + 1):
        if n == 2:
            trace, grad = _disk_mode_integrals(R, s)
        else:
            # unit-norm spherical harmonic: int_S (r^s Y)^2 = R^(2s) R^(n-1)
            trace = R ** (2 * s + n - 1)
            grad = (s / R) * trace
        ratios[s] = trace / (R * grad)
        identity_err = max(identity_err, abs(trace - (R / s) * grad) / trace)

    rng = np.random.default_rng(seed)
    margin = math.inf
    for _ in range(int(trials)):
        modes = rng.choice(np.arange(1, s_max + 1), size=rng.integers(1, 4), replace=False)
        coeffs = rng.normal(size=modes.size)
        trace = sum(c * c * R ** (2 * s + n - 1) for c, s in zip(coeffs, modes))
        grad = sum(c * c * (s / R) * R ** (2 * s + n - 1) for c, s in zip(coeffs, modes))
        margin = min(margin, float((R * grad - trace) / trace))
    s1_err = abs(ratios[1] - 1.0)
    passed = identity_err <= 1e-10 and margin >= -1e-12 and s1_err <= 1e-12 and all(
        ratios[s] < 1.0 for s in ratios if s > 1
    )
    return SteklovReport(
        trials=int(trials),
        max_identity_error=identity_err,
        min_margin=margin,
        s1_equality_error=s1_err,
        per_mode_ratio=ratios,
        passed=passed,
    )


def stability_table(config: BallConfig, f: RadialSource, m: float, s_max: int) -> list[ModeForm]:
    bd = solve_radial(config, f, m)
    return [mode_form(bd, s) for s in range(1, s_max + 1)]


def q1_consistency(bd: EnergyBallSolution) -> float:
    """Relative gap between Q_1 and -R times the criterion."""
    q1 = mode_form(bd, 1).q_value
    target = -bd.config.R * criterion_value(bd.config, bd.source, bd.m)
    scale = max(abs(target), abs(mode_form(bd, 2).q_value), 1e-300)
    return abs(q1 - target) / scale

