"""Command line entry point: ``insulation-lab <command> [options]``.

Commands
    energy-ball   boundary data, energy and h_m for the radial solution
    stability     classification, m1 and the Q_s table
    eigen         mu2, m0, the lambda_m table and (n = 2) f_s / mode forms
    fem-verify    finite-element cross checks (energy FD or eigen scan)
    run           execute a saved RunConfig file

Exit status: 0 on success, 2 for usage or input errors, 3 when a numerical
method fails or a built-in check does not hold.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import ball, eigen_disk, energy_stability, fem2d
from .errors import (
    BracketError,
    DegenerateDistributionError,
    DomainError,
    EvaluationError,
    MeshError,
    NumericalError,
    RegimeError,
    ValidationError,
    VerificationError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

USAGE_ERRORS = (DomainError, ValidationError, DegenerateDistributionError)
NUMERICAL_ERRORS = (NumericalError, RegimeError, VerificationError, MeshError, BracketError, EvaluationError)

COMMANDS = ("energy-ball", "stability", "eigen", "fem-verify")


# ---------------------------------------------------------------- m expressions


def _parse_scalar(token: str, m0: Callable[[], float]) -> float:
    token = token.strip()
    if not token:
        raise ValidationError("empty m value")
    if token.endswith("m0"):
        head = token[:-2].strip().rstrip("*")
        factor = float(head) if head else 1.0
        return factor * m0()
    try:
        return float(token)
    except ValueError:
        raise ValidationError(f"cannot parse m value {token!r}") from None


def parse_m_expression(text: str, m0: Callable[[], float]) -> list[float]:
    """Expand an m expression into a list of floats.

    Accepted forms (comma separated, may be mixed):
        1.5        plain number
        2m0        multiple of the threshold (``m0`` alone means 1 m0)
        log:A:B:N  N log-spaced values from A to B, endpoints included
        lin:A:B:N  N evenly spaced values
    """
    out: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if part.startswith(("log:", "lin:")):
            pieces = part.split(":")
            if len(pieces) != 4:
                raise ValidationError(f"range must look like log:A:B:N, got {part!r}")
            lo, hi = _parse_scalar(pieces[1], m0), _parse_scalar(pieces[2], m0)
            try:
                count = int(pieces[3])
            except ValueError:
                raise ValidationError(f"bad point count in {part!r}") from None
            if count < 1:
                raise ValidationError(f"point count must be >= 1 in {part!r}")
            if pieces[0] == "log":
                if lo <= 0 or hi <= 0:
                    raise ValidationError("log ranges need positive endpoints")
                out.extend(np.geomspace(lo, hi, count).tolist())
            else:
                out.extend(np.linspace(lo, hi, count).tolist())
        else:
            out.append(_parse_scalar(part, m0))
    for m in out:
        if not (math.isfinite(m) and m > 0):
            raise ValidationError(f"m values must be positive and finite, got {m}")
    return out


# ---------------------------------------------------------------- RunConfig


@dataclass(frozen=True)
class RunConfig:
    command: str
    n: int = 2
    R: float = 1.0
    f: str = "1"
    m: str = ""
    s_max: int = 12
    s: int = 2
    a: float = 1.0
    problem: str = "energy"
    n_r: int = 48
    n_theta: int = 192
    dt: float = 0.02
    fs: bool = False
    format: str = "json"
    output: str = "-"
    dump: str = ""

    _INT = ("n", "s_max", "s", "n_r", "n_theta")
    _FLOAT = ("R", "a", "dt")

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        ball.BallConfig(self.n, self.R)
        ball.RadialSource.parse(self.f)
        if self.s_max < 1:
            raise ValidationError("empty mode range: s_max must be >= 1")
        if self.s < 1:
            raise ValidationError("s must be >= 1")
        if self.format not in ("json", "csv"):
            raise ValidationError(f"format must be json or csv, got {self.format!r}")
        if self.problem not in ("energy", "eigen"):
            raise ValidationError(f"problem must be energy or eigen, got {self.problem!r}")
        if not 1e-3 <= self.dt <= 5e-2:
            raise ValidationError(f"dt must lie in [1e-3, 5e-2], got {self.dt}")
        if self.command == "fem-verify":
            s_res = self.s if self.problem == "energy" else 1
            if self.n_r < 8 or self.n_theta < 16 or self.n_theta % (4 * s_res):
                raise ValidationError(
                    f"resolution {self.n_r}x{self.n_theta} invalid: need n_r >= 8, "
                    f"n_theta >= 16 and a multiple of {4 * s_res}"
                )
        if self.command in ("energy-ball", "stability") and not self.m:
            raise ValidationError(f"{self.command} needs --m")
        return self

    def to_text(self) -> str:
        """``key = value`` lines in field order; the inverse of ``parse``."""
        lines = []
        for fld in fields(self):
            value = getattr(self, fld.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{fld.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values: dict[str, Any] = {}
        known = {fld.name: fld for fld in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"line {lineno}: expected key = value")
            key, value = (piece.strip() for piece in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ValidationError(f"line {lineno}: unknown key {key!r}")
            try:
                if key in cls._INT:
                    values[key] = int(value)
                elif key in cls._FLOAT:
                    values[key] = float(value)
                elif key == "fs":
                    if value.lower() not in ("true", "false"):
                        raise ValueError(value)
                    values[key] = value.lower() == "true"
                else:
                    values[key] = value
            except ValueError:
                raise ValidationError(f"line {lineno}: bad value for {key}: {value!r}") from None
        if "command" not in values:
            raise ValidationError("config lacks a command")
        return cls(**values)


# ---------------------------------------------------------------- output


def _round(value: Any) -> Any:
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not math.isfinite(x):
            return repr(x)
        return float(f"{x:.12g}")
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    raise TypeError(f"cannot serialise {type(value).__name__}")


def render_json(report: dict) -> str:
    return json.dumps(_round(report), indent=2) + "\n"


def render_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt_cell(row.get(k)) for k in columns})
    return buf.getvalue()


def _fmt_cell(value: Any) -> str:
    if value is None:
        return ""
    value = _round(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _pool_size() -> int:
    raw = os.environ.get("INSULATION_LAB_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    return max(1, cap) if cap else max(1, os.cpu_count() or 1)


def _map(fn, items: Sequence) -> list:
    items = list(items)
    workers = min(_pool_size(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- commands


def _setup(cfg: RunConfig):
    config = ball.BallConfig(cfg.n, cfg.R)
    source = ball.RadialSource.parse(cfg.f)
    m0_cache: list[float] = []

    def m0() -> float:
        if not m0_cache:
            m0_cache.append(eigen_disk.m0_threshold(config))
        return m0_cache[0]

    return config, source, m0


def cmd_energy_ball(cfg: RunConfig) -> tuple[dict, list[dict]]:
    config, source, m0 = _setup(cfg)
    source.validate(config.R)
    grid = parse_m_expression(cfg.m, m0)

    def one(m: float) -> dict:
        sol = ball.solve_radial(config, source, m)
        return {
            "m": m,
            "mean_f": sol.mean_f,
            "u_R": sol.u_R,
            "ur_R": sol.ur_R,
            "urr_R": sol.urr_R,
            "energy": ball.energy_value(sol),
            "h_m": ball.optimal_distribution(sol).value,
            "ode_residual": sol.ode_residual(),
        }

    rows = _map(one, grid)
    report = {"command": "energy-ball", "n": config.n, "R": config.R, "f": list(source.coefficients), "results": rows}
    return report, [{"ball.n": config.n, "ball.R": config.R, **{f"solution.{k}": v for k, v in r.items()}} for r in rows]


def cmd_stability(cfg: RunConfig) -> tuple[dict, list[dict]]:
    config, source, m0 = _setup(cfg)
    source.validate(config.R)
    grid = parse_m_expression(cfg.m, m0)
    s_max = cfg.s_max
    if s_max < 2:
        raise ValidationError("mode range must include s = 1 and s = 2 (s_max >= 2)")

    def one(m: float) -> dict:
        verdict = energy_stability.classify(config, source, m)
        bd = ball.solve_radial(config, source, m)
        modes = [energy_stability.mode_form(bd, s) for s in range(1, s_max + 1)]
        return {
            "m": m,
            "case": verdict.case_label,
            "criterion": verdict.criterion_value,
            "stable": verdict.stable,
            "marginal": verdict.marginal,
            "m1": verdict.m1,
            "worst_mode": energy_stability.worst_mode(bd, s_max),
            "modes": [
                {
                    "s": mf.s,
                    "q_value": mf.q_value,
                    "linearized": mf.parts.linearized,
                    "curvature_gradient": mf.parts.curvature_gradient,
                    "source": mf.parts.source,
                    "nonlocal_boundary": mf.parts.nonlocal_boundary,
                }
                for mf in modes
            ],
        }

    results = _map(one, grid)
    report = {"command": "stability", "n": config.n, "R": config.R, "f": list(source.coefficients), "results": results}
    rows = []
    for r in results:
        for mode in r["modes"]:
            rows.append(
                {
                    "ball.n": config.n,
                    "ball.R": config.R,
                    "verdict.m": r["m"],
                    "mode.s": mode["s"],
                    "verdict.case": r["case"],
                    "verdict.criterion": r["criterion"],
                    "verdict.stable": r["stable"],
                    "verdict.m1": r["m1"],
                    "verdict.worst_mode": r["worst_mode"],
                    **{f"mode.{k}": v for k, v in mode.items() if k != "s"},
                }
            )
    return report, rows


def cmd_eigen(cfg: RunConfig) -> tuple[dict, list[dict]]:
    config, _, m0 = _setup(cfg)
    mu2 = eigen_disk.neumann_mu2(config)
    threshold = m0()
    iso = config.perimeter**2 / config.volume
    identity = threshold * mu2 / ((config.n - 1) / config.n * iso) - 1.0
    want_modes = cfg.fs
    if want_modes and config.n != 2:
        eigen_disk.fs_factor(config, 2 * threshold, 1)  # raises the dimension error
    grid = parse_m_expression(cfg.m or "log:1.01m0:1e6:40", m0)

    def one(m: float) -> dict:
        sol = eigen_disk.lambda_m(config, m)
        row = {"m": m, "lambda": sol.lam, "m_lambda": sol.m_lambda, "u_R": sol.u_R, "residual": sol.residual}
        if want_modes:
            forms = [eigen_disk.eigen_mode_form(config, m, s, sol) for s in range(1, cfg.s_max + 1)]
            row["modes"] = [{"s": mf.s, "f_s": mf.f_s, "q_value": mf.q_value} for mf in forms]
        return row

    table = _map(one, grid)
    ml = [r["m_lambda"] for r in sorted(table, key=lambda r: r["m"])]
    report = {
        "command": "eigen",
        "n": config.n,
        "R": config.R,
        "mu2": mu2,
        "m0": threshold,
        "identity_relative_error": identity,
        "m_lambda_limits": list(eigen_disk.mlambda_limits(config)),
        "m_lambda_increasing": all(b > a for a, b in zip(ml[:-1], ml[1:])),
        "table": table,
    }
    rows = []
    for r in table:
        base = {"ball.n": config.n, "ball.R": config.R, "eigen.m": r["m"]}
        scalars = {f"eigen.{k}": v for k, v in r.items() if k not in ("m", "modes")}
        if "modes" in r:
            for mode in r["modes"]:
                rows.append({**base, "mode.s": mode["s"], **scalars, "mode.f_s": mode["f_s"], "mode.q_value": mode["q_value"]})
        else:
            rows.append({**base, "mode.s": None, **scalars})
    return report, rows


def _check(name: str, expected: float, observed: float, tol: float, passed: Optional[bool] = None) -> dict:
    if passed is None:
        passed = abs(observed - expected) <= tol * abs(expected)
    return {"check": name, "expected": expected, "observed": observed, "tolerance": tol, "passed": bool(passed)}


def cmd_fem_verify(cfg: RunConfig) -> tuple[dict, list[dict]]:
    config, source, m0 = _setup(cfg)
    if config.n != 2:
        raise DomainError("the finite-element checks are two-dimensional (n = 2)")
    R = config.R
    checks = []
    if cfg.problem == "energy":
        source.validate(R)
        grid = parse_m_expression(cfg.m or "1", m0)
        for m in grid:
            bd = ball.solve_radial(config, source, m)
            q = energy_stability.mode_form(bd, cfg.s).q_value
            with ThreadPoolExecutor(max_workers=min(3, _pool_size())) as pool:
                fd = fem2d.energy_derivatives(R, source, m, cfg.s, cfg.a, cfg.dt, cfg.n_r, cfg.n_theta, executor=pool)
            q2 = energy_stability.mode_form(bd, 2).q_value
            scale = max(abs(q), abs(q2))
            checks.append(
                _check(f"d2/(pi R^3 a^2) vs Q_{cfg.s} at m={m:.6g}", q, fd.per_unit_zeta, 0.05,
                       passed=abs(fd.per_unit_zeta - q) <= 0.05 * (abs(q) if abs(q) > 0.05 * scale else scale))
            )
            checks.append(
                _check(f"d1 stationarity at m={m:.6g}", 0.0, fd.d1, 0.02,
                       passed=abs(fd.d1) <= 0.02 * abs(fd.d2) * cfg.dt + 1e-10)
            )
            if cfg.dump:
                sys_ = fem2d.build_system(fem2d.PerturbedDisk(R, cfg.s, cfg.a, 0.0), source, cfg.n_r, cfg.n_theta)
                sol = fem2d.solve_energy(sys_, m)
                fem2d.write_dump(sys_, cfg.dump, {"u": sol.u})
    else:
        threshold = m0()
        grid = parse_m_expression(cfg.m or "0.5m0,1.5m0", m0)
        mu2 = eigen_disk.neumann_mu2(config)
        with ThreadPoolExecutor(max_workers=min(len(grid), _pool_size())) as pool:
            scan = fem2d.symmetry_breaking_scan(R, grid, threshold, cfg.n_r, cfg.n_theta, executor=pool)
        for row in scan:
            label = f"m={row.m:.6g} ({row.m_over_m0:.4g} m0)"
            first = len(checks)
            if row.regime == "uniform":
                ref = eigen_disk.lambda_m(config, row.m).lam
                checks.append(_check(f"lambda vs radial branch, {label}", ref, row.lam, 0.005))
                checks.append(_check(f"h_m uniform, {label}", 0.0, row.nonuniformity, 0.02,
                                     passed=row.nonuniformity <= 0.02 and row.one_signed))
            elif row.regime == "broken":
                checks.append(_check(f"lambda vs mu2, {label}", mu2, row.lam, 0.01))
                checks.append(_check(f"h_m nonuniform, {label}", 0.2, row.nonuniformity, 0.0,
                                     passed=row.nonuniformity >= 0.2))
                checks.append(_check(f"trace sign-changing, {label}", 1.0, float(not row.one_signed), 0.0,
                                     passed=not row.one_signed))
            for c in checks[first:]:
                c["regime"] = row.regime
        if cfg.dump:
            sys_ = fem2d.build_system(fem2d.PerturbedDisk(R, 1, 0.0, 0.0), source, cfg.n_r, cfg.n_theta)
            sol = fem2d.solve_eigen(sys_, grid[0])
            fem2d.write_dump(sys_, cfg.dump, {"u": sol.u})
    report = {
        "command": "fem-verify",
        "problem": cfg.problem,
        "R": R,
        "resolution": [cfg.n_r, cfg.n_theta],
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }
    rows = [{"fem.problem": cfg.problem, **{f"check.{k}": v for k, v in c.items()}} for c in checks]
    return report, rows


DISPATCH = {
    "energy-ball": cmd_energy_ball,
    "stability": cmd_stability,
    "eigen": cmd_eigen,
    "fem-verify": cmd_fem_verify,
}


def execute(cfg: RunConfig) -> str:
    cfg.validate()
    report, rows = DISPATCH[cfg.command](cfg)
    return render_json(report) if cfg.format == "json" else render_csv(rows)


# ---------------------------------------------------------------- argparse


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=2, help="dimension (default 2)")
    p.add_argument("--R", type=float, default=1.0, help="ball radius (default 1)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", default="-", help="output file, '-' for stdout")
    p.add_argument("--save-config", default="", help="also write the resolved RunConfig here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="insulation-lab", description="Optimal insulation checks on balls and disks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("energy-ball", help="radial solution of the energy problem")
    _common(p)
    p.add_argument("--f", default="1", help="source coefficients c0,c1,... (lowest degree first)")
    p.add_argument("--m", required=True, help="m expression, e.g. 1 or 0.5,1,2 or 2m0")

    p = sub.add_parser("stability", help="stability verdict and per-mode second variation")
    _common(p)
    p.add_argument("--f", default="1")
    p.add_argument("--m", required=True)
    p.add_argument("--smax", type=int, default=12, dest="s_max")

    p = sub.add_parser("eigen", help="eigenvalue problem on the ball")
    _common(p)
    p.add_argument("--m-grid", default="", dest="m", help="default log:1.01m0:1e6:40")
    p.add_argument("--fs", action="store_true", help="add f_s and mode-form tables (n = 2 only)")
    p.add_argument("--smax", type=int, default=12, dest="s_max")

    p = sub.add_parser("fem-verify", help="finite-element cross checks")
    _common(p)
    p.add_argument("--problem", choices=("energy", "eigen"), default="energy")
    p.add_argument("--f", default="1")
    p.add_argument("--m", default="")
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--n-r", type=int, default=48, dest="n_r")
    p.add_argument("--n-theta", type=int, default=192, dest="n_theta")
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--dump", default="", help="write mesh and field in plain text to this path")

    p = sub.add_parser("run", help="run a saved RunConfig file")
    p.add_argument("config")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    known = {fld.name for fld in fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in known and v is not None}
    return RunConfig(**values)


def _write(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "run":
            with open(args.config, encoding="utf-8") as fh:
                cfg = RunConfig.parse(fh.read())
        else:
            cfg = config_from_args(args)
            if args.save_config:
                _write(cfg.to_text(), args.save_config)
        _write(execute(cfg), cfg.output)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
