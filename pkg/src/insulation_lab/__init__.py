"""Numerical checks for optimal insulation problems on balls and perturbed disks.

Submodules
    specfun           Bessel J, J' and a bracketing root finder
    ball              radial solution of the insulated energy problem
    energy_stability  per-mode second variation and the stability verdict
    eigen_disk        insulated eigenvalue on the ball, m0 and the f_s factors
    fem2d             P1 finite-element oracle on exact-area perturbed disks
    cli               command line front end
"""
from .ball import BallConfig, EnergyBallSolution, RadialSource, energy_value, optimal_distribution, solve_radial
from .eigen_disk import eigen_mode_form, fs_factor, lambda_m, landau_check, m0_threshold, mlambda_scan, neumann_mu2
from .energy_stability import classify, mode_form, steklov_inequality_check, threshold_m1, worst_mode
from .specfun import bessel_eval, bessel_j, bessel_j_prime, find_root

__version__ = "0.1.0"

__all__ = [
    "BallConfig",
    "RadialSource",
    "EnergyBallSolution",
    "solve_radial",
    "energy_value",
    "optimal_distribution",
    "mode_form",
    "classify",
    "threshold_m1",
    "worst_mode",
    "steklov_inequality_check",
    "neumann_mu2",
    "m0_threshold",
    "lambda_m",
    "fs_factor",
    "eigen_mode_form",
    "mlambda_scan",
    "landau_check",
    "bessel_j",
    "bessel_j_prime",
    "bessel_eval",
    "find_root",
]
