"""P1 finite elements on volume preserving perturbations of a disk.

The domain family is

    r_b(theta) = rho R (1 + t a cos(s theta)),   rho = (1 + t^2 a^2 / 2)^(-1/2),

whose enclosed area is exactly pi R^2 for every t.  A structured polar mesh
(centre node plus ``n_r`` rings of ``n_theta`` nodes) is mapped onto it, so
the node connectivity does not change with t and finite differences in t
compare like with like.

Discrete objects:

* ``A`` stiffness, ``M`` consistent mass, ``b`` boundary weights with
  ``b @ u`` equal to the trapezoid rule for the boundary integral of ``u``,
* ``F = M f`` load for the energy problem.

The energy minimiser solves ``(A + b b^T / m) u = F``; the eigenvalue
problem minimises ``(u A u + (b |u|)^2 / m) / (u M u)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ball import RadialSource, insulation_density
from .errors import DomainError, MeshError, NumericalError, RegimeError

__all__ = [
    "PerturbedDisk",
    "FemSystem",
    "build_system",
    "EnergySolution",
    "solve_energy",
    "FiniteDifference",
    "energy_derivatives",
    "eigen_derivatives",
    "SignPattern",
    "EigenSolution",
    "solve_eigen",
    "nonuniformity",
    "ScanRow",
    "symmetry_breaking_scan",
    "write_dump",
    "read_dump",
    "true_quotient",
]

# shift used for shift-invert; every pencil here is positive semidefinite
EIG_SHIFT = -1e-3


@dataclass(frozen=True)
class PerturbedDisk:
    R: float = 1.0
    s: int = 1
    a: float = 0.0
    t: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.R) and self.R > 0):
            raise DomainError(f"radius must be positive, got {self.R}")
        if int(self.s) != self.s or self.s < 1:
            raise DomainError(f"mode must be an integer >= 1, got {self.s!r}")
        object.__setattr__(self, "s", int(self.s))

    @property
    def rho(self) -> float:
        return (1.0 + 0.5 * (self.t * self.a) ** 2) ** -0.5

    def radius(self, theta):
        return self.rho * self.R * (1.0 + self.t * self.a * np.cos(self.s * np.asarray(theta)))

    @property
    def area(self) -> float:
        """0.5 int r_b^2 dtheta in closed form."""
        ta = self.t * self.a
        return 0.5 * self.rho**2 * self.R**2 * 2 * math.pi * (1 + 0.5 * ta * ta)

    def normal_speed(self, theta):
        """d r_b / dt at t = 0, i.e. R a cos(s theta)."""
        return self.R * self.a * np.cos(self.s * np.asarray(theta))

    def at(self, t: float) -> "PerturbedDisk":
        return PerturbedDisk(self.R, self.s, self.a, t)


@dataclass(frozen=True, eq=False)
class FemSystem:
    domain: PerturbedDisk
    n_r: int
    n_theta: int
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_nodes: np.ndarray = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    boundary_vector: np.ndarray = field(repr=False)
    load: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def boundary_perimeter(self) -> float:
        return float(self.boundary_vector.sum())

    @property
    def mesh_area(self) -> float:
        p = self.nodes[self.boundary_nodes]
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def boundary_angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def rank_one(self, weights: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """Sparse b_w b_w^T, nonzero only on the boundary block."""
        b = self.boundary_vector if weights is None else self.boundary_vector * weights
        col = sp.csr_matrix(b).T
        return (col @ col.T).tocsr()


def _polar_mesh(domain: PerturbedDisk, n_r: int, n_theta: int):
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rb = domain.radius(theta)
    q = np.arange(1, n_r + 1) / n_r
    ring_x = (q[:, None] * rb[None, :] * np.cos(theta)[None, :]).ravel()
    ring_y = (q[:, None] * rb[None, :] * np.sin(theta)[None, :]).ravel()
    nodes = np.vstack([[0.0, 0.0], np.column_stack([ring_x, ring_y])])

    def idx(i, j):
        return 1 + (i - 1) * n_theta + (j % n_theta)

    j = np.arange(n_theta)
    fan = np.column_stack([np.zeros(n_theta, dtype=int), idx(1, j), idx(1, j + 1)])
    quads = []
    for i in range(1, n_r):
        a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
        quads.append(np.column_stack([a, b, c]))
        quads.append(np.column_stack([a, c, d]))
    triangles = np.vstack([fan] + quads)
    boundary = idx(n_r, j)
    return nodes, triangles, boundary


def build_system(domain: PerturbedDisk, f: RadialSource, n_r: int, n_theta: int) -> FemSystem:
    if int(n_r) != n_r or n_r < 8:
        raise DomainError(f"n_r must be an integer >= 8, got {n_r!r}")
    if int(n_theta) != n_theta or n_theta < 16 or n_theta % (4 * domain.s):
        raise DomainError(f"n_theta must be >= 16 and a multiple of 4 s = {4 * domain.s}, got {n_theta!r}")
    if abs(domain.t * domain.a) > 0.2:
        raise DomainError(f"|t a| = {abs(domain.t * domain.a):.3g} exceeds 0.2")
    n_r, n_theta = int(n_r), int(n_theta)
    nodes, tris, bnodes = _polar_mesh(domain, n_r, n_theta)
    N = nodes.shape[0]

    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if area.min() <= 0:
        raise MeshError(f"degenerate element: min signed area {area.min():.3g}")

    # gradients of the barycentric functions times 2*area
    gy = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    gx = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    k_loc = (gy[:, :, None] * gy[:, None, :] + gx[:, :, None] * gx[:, None, :]) / (4 * area[:, None, None])
    m_loc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    A = sp.csr_matrix((k_loc.ravel(), (rows, cols)), shape=(N, N))
    M = sp.csr_matrix((m_loc.ravel(), (rows, cols)), shape=(N, N))
    # exact symmetry; assembly round-off is below 1e-16 but keep A == A^T bitwise
    A = ((A + A.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()

    bp = nodes[bnodes]
    edges = np.linalg.norm(np.roll(bp, -1, axis=0) - bp, axis=1)
    b = np.zeros(N)
    b[bnodes] = 0.5 * (edges + np.roll(edges, 1))
    F = M @ f(np.hypot(nodes[:, 0], nodes[:, 1]))

    for arr in (nodes, tris, bnodes, b, F):
        arr.setflags(write=False)
    return FemSystem(domain, n_r, n_theta, nodes, tris, bnodes, A, M, b, F)


@dataclass(frozen=True)
class EnergySolution:
    u: np.ndarray = field(repr=False)
    energy: float
    boundary_trace: np.ndarray = field(repr=False)
    iterations: int


def _spd_solve(sys_: FemSystem, m: float, rhs: np.ndarray, method: str, rtol: float) -> tuple[np.ndarray, int]:
    A, b = sys_.stiffness, sys_.boundary_vector
    if method == "direct":
        K = (A + sys_.rank_one() / m).tocsc()
        return spla.spsolve(K, rhs), 0
    if method != "cg":
        raise DomainError(f"unknown solver {method!r}")
    op = spla.LinearOperator(A.shape, matvec=lambda v: A @ v + b * (b @ v) / m, dtype=float)
    diag = A.diagonal() + b * b / m
    pre = spla.LinearOperator(A.shape, matvec=lambda v: v / diag, dtype=float)
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = spla.cg(op, rhs, rtol=rtol, atol=0.0, M=pre, maxiter=20 * A.shape[0], callback=tick)
    if info != 0:
        raise NumericalError(f"CG did not reach rtol {rtol:g} (info = {info})")
    return x, count[0]


def solve_energy(sys_: FemSystem, m: float, method: str = "cg", rtol: float = 1e-12) -> EnergySolution:
    """Discrete minimiser of 1/2 uAu + (b.u)^2/(2m) - F.u.

    The operator A + b b^T/m is positive definite, so it is solved directly
    by preconditioned CG (or a sparse LU with ``method="direct"``).
    """
    if not (math.isfinite(m) and m > 0):
        raise DomainError(f"insulation amount m must be positive, got {m}")
    u, its = _spd_solve(sys_, m, sys_.load, method, rtol)
    trace = u[sys_.boundary_nodes]
    if trace.min() <= 0:
        raise RegimeError(f"boundary trace not positive (min {trace.min():.3g}); |u| term is not linear here")
    energy = -0.5 * float(sys_.load @ u)
    return EnergySolution(u=u, energy=energy, boundary_trace=trace, iterations=its)


@dataclass(frozen=True)
class FiniteDifference:
    d1: float
    d2: float
    values: tuple[float, float, float]
    dt: float
    zeta_norm: float  # int over the circle of zeta^2 = pi R^3 a^2

    @property
    def per_unit_zeta(self) -> float:
        return self.d2 / self.zeta_norm


def _central(values: tuple[float, float, float], dt: float) -> tuple[float, float]:
    em, e0, ep = values
    return (ep - em) / (2 * dt), (ep - 2 * e0 + em) / (dt * dt)


def energy_derivatives(
    R: float,
    f: RadialSource,
    m: float,
    s: int,
    a: float = 1.0,
    dt: float = 0.02,
    n_r: int = 48,
    n_theta: int = 192,
    method: str = "cg",
    executor=None,
) -> FiniteDifference:
    """Central first and second differences of E_m along the exact-area family."""
    if not 1e-3 <= dt <= 5e-2:
        raise DomainError(f"dt must lie in [1e-3, 5e-2], got {dt}")
    base = PerturbedDisk(R, s, a, 0.0)

    def energy_at(t):
        return solve_energy(build_system(base.at(t), f, n_r, n_theta), m, method=method).energy

    ts = (-dt, 0.0, dt)
    values = tuple(executor.map(energy_at, ts)) if executor else tuple(energy_at(t) for t in ts)
    d1, d2 = _central(values, dt)
    return FiniteDifference(d1, d2, values, dt, math.pi * R**3 * a * a)


@dataclass(frozen=True)
class SignPattern:
    """+-1 per boundary node, in ring order."""

    weights: np.ndarray

    @classmethod
    def constant(cls, n_theta: int) -> "SignPattern":
        return cls(np.ones(n_theta))

    @classmethod
    def from_trace(cls, trace: np.ndarray, previous: Optional["SignPattern"] = None) -> "SignPattern":
        w = np.sign(trace)
        if previous is not None:
            w = np.where(w == 0, previous.weights, w)
        w = np.where(w == 0, 1.0, w)
        return cls(w.astype(float))

    @property
    def one_signed(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def __eq__(self, other) -> bool:
        return isinstance(other, SignPattern) and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash(self.weights.tobytes())


@dataclass(frozen=True)
class EigenSolution:
    lam: float  # true quotient with |u| at the returned field
    u: np.ndarray = field(repr=False)
    pattern: SignPattern = field(repr=False)
    pencil_lambda: float  # lowest eigenvalue of (A + b_w b_w^T/m, M) for the best sign-iteration pattern
    converged: bool
    iterations: int
    refined: bool

    def trace_of(self, sys_: FemSystem) -> np.ndarray:
        return self.u[sys_.boundary_nodes]


def true_quotient(sys_: FemSystem, u: np.ndarray, m: float) -> float:
    A, M, b = sys_.stiffness, sys_.mass, sys_.boundary_vector
    return float((u @ (A @ u) + (b @ np.abs(u)) ** 2 / m) / (u @ (M @ u)))


def _smallest(K: sp.spmatrix, M: sp.spmatrix) -> tuple[float, np.ndarray]:
    v0 = np.ones(K.shape[0])
    try:
        vals, vecs = spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=EIG_SHIFT, which="LM", v0=v0, tol=1e-13)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise NumericalError(f"shift-invert eigensolve failed: {exc}") from None
    u = vecs[:, 0]
    return float(vals[0]), u


def _oriented(u: np.ndarray, bnodes: np.ndarray) -> np.ndarray:
    # make the boundary trace mostly positive; ties broken by the first nonzero entry
    total = u[bnodes].sum()
    if total < 0 or (total == 0 and u[np.flatnonzero(u)[0]] < 0):
        return -u
    return u


def _sign_iteration(sys_: FemSystem, m: float, start: SignPattern, max_iter: int):
    bn = sys_.boundary_nodes
    w = start
    seen = {w}
    best = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        full = np.zeros(sys_.n_nodes)
        full[bn] = w.weights
        pencil, u = _smallest(sys_.stiffness + sys_.rank_one(full) / m, sys_.mass)
        u = _oriented(u, bn)
        q = true_quotient(sys_, u, m)
        if best is None or q < best[0]:
            best = (q, u, w, pencil)
        nxt = SignPattern.from_trace(u[bn], w)
        if nxt == w:
            converged = True
            break
        if nxt in seen:
            break  # cycle
        seen.add(nxt)
        w = nxt
    return best, converged, it


def _active_set(sys_: FemSystem, m: float, u_start: np.ndarray, max_iter: int = 400):
    """Minimise the quotient over u >= 0 with zero-trace boundary nodes as the active set.

    On the cone u >= 0 the |u| term is the smooth (b.u)^2; the KKT multiplier
    at a clamped node is the eigen-residual there.  At most two clamped nodes
    are released per step, which keeps the iteration from cycling.
    """
    bn = sys_.boundary_nodes
    K = (sys_.stiffness + sys_.rank_one() / m).tocsr()
    M = sys_.mass.tocsr()
    N = sys_.n_nodes
    trace = u_start[bn]
    clamped = set(bn[trace <= 0].tolist())
    lam, u = math.inf, u_start
    for it in range(1, max_iter + 1):
        free = np.setdiff1d(np.arange(N), np.fromiter(clamped, dtype=int, count=len(clamped)))
        lam, uf = _smallest(K[free][:, free], M[free][:, free])
        u = np.zeros(N)
        u[free] = uf
        u = _oriented(u, bn)
        residual = K @ u - lam * (M @ u)
        scale = np.abs(residual).max()
        negative = [int(i) for i in bn if u[i] < -1e-14 * np.abs(u).max()]
        release = sorted((i for i in clamped if residual[i] < -1e-12 * scale), key=lambda i: residual[i])[:2]
        if not negative and not release:
            return lam, u, True, it
        clamped |= set(negative)
        clamped -= set(release)
    return lam, u, False, max_iter


def _neumann_pattern(sys_: FemSystem) -> SignPattern:
    _, vecs = spla.eigsh(
        sys_.stiffness.tocsc(), k=2, M=sys_.mass.tocsc(), sigma=EIG_SHIFT, which="LM", v0=np.ones(sys_.n_nodes)
    )
    # the eigenvector with the larger eigenvalue is nonconstant
    return SignPattern.from_trace(vecs[sys_.boundary_nodes, 1])


def solve_eigen(
    sys_: FemSystem,
    m: float,
    init: Optional[Sequence[SignPattern]] = None,
    max_iter: int = 50,
    refine: bool = True,
) -> EigenSolution:
    """Smallest value of the insulated Rayleigh quotient on the mesh.

    Sign iteration: for weights w, take the lowest eigenpair of
    (A + b_w b_w^T / m, M), reset w to the boundary signs of the eigenvector
    and repeat until w is a fixed point.  By default it starts from the
    constant pattern and from the second Neumann eigenvector.  The quotient
    does not change under u -> |u|, so the best iterate is then polished by
    an active-set solve on u >= 0.  ``lam`` is the true quotient of the
    returned field.
    """
    if not (math.isfinite(m) and m > 0):
        raise DomainError(f"insulation amount m must be positive, got {m}")
    starts = list(init) if init else [SignPattern.constant(sys_.n_theta), _neumann_pattern(sys_)]
    best = None
    converged_all = True
    total = 0
    for start in starts:
        cand, conv, its = _sign_iteration(sys_, m, start, max_iter)
        total += its
        converged_all &= conv
        if best is None or cand[0] < best[0]:
            best = cand
    q, u, w, pencil = best
    refined = False
    if refine:
        lam_c, u_c, ok, its = _active_set(sys_, m, np.where(np.abs(u) > 0, u, 0.0))
        total += its
        q_c = true_quotient(sys_, u_c, m)
        if ok and q_c < q:
            q, u, refined = q_c, u_c, True
            w = SignPattern.from_trace(u[sys_.boundary_nodes], w)
    return EigenSolution(
        lam=q, u=u, pattern=w, pencil_lambda=pencil, converged=converged_all, iterations=total, refined=refined
    )


def nonuniformity(sys_: FemSystem, u: np.ndarray, m: float) -> float:
    """Boundary-weighted coefficient of variation of h = m |u| / int |u|."""
    b = sys_.boundary_vector[sys_.boundary_nodes]
    h = insulation_density(u[sys_.boundary_nodes], b, m)
    mean = float(b @ h) / b.sum()
    std = math.sqrt(float(b @ (h - mean) ** 2) / b.sum())
    return std / mean


def eigen_derivatives(
    R: float,
    m: float,
    s: int,
    a: float = 1.0,
    dt: float = 0.02,
    n_r: int = 32,
    n_theta: int = 144,
    executor=None,
) -> FiniteDifference:
    """Central differences of the FEM eigenvalue for m above the threshold.

    The one-signed branch is used directly (single constant-pattern solve).
    """
    if not 1e-3 <= dt <= 5e-2:
        raise DomainError(f"dt must lie in [1e-3, 5e-2], got {dt}")
    base = PerturbedDisk(R, s, a, 0.0)
    one = RadialSource.constant(1.0)

    def lam_at(t):
        sys_ = build_system(base.at(t), one, n_r, n_theta)
        return _smallest(sys_.stiffness + sys_.rank_one() / m, sys_.mass)[0]

    ts = (-dt, 0.0, dt)
    values = tuple(executor.map(lam_at, ts)) if executor else tuple(lam_at(t) for t in ts)
    d1, d2 = _central(values, dt)
    # zeta = R a cos(s theta) has Fourier coefficient c_s = R a
    return FiniteDifference(d1, d2, values, dt, (R * a) ** 2)


@dataclass(frozen=True)
class ScanRow:
    m: float
    m_over_m0: float
    lam: float
    nonuniformity: float
    regime: str  # "uniform" (m > m0), "broken" (m < m0) or "indeterminate"
    one_signed: bool
    converged: bool


def symmetry_breaking_scan(
    R: float,
    m_grid: Sequence[float],
    m0: float,
    n_r: int = 48,
    n_theta: int = 192,
    executor=None,
) -> list[ScanRow]:
    """FEM eigenvalue and h_m nonuniformity across the threshold m0."""
    sys_ = build_system(PerturbedDisk(R, 1, 0.0, 0.0), RadialSource.constant(1.0), n_r, n_theta)

    def row(m: float) -> ScanRow:
        sol = solve_eigen(sys_, m)
        ratio = m / m0
        if abs(ratio - 1.0) < 1e-9:
            regime = "indeterminate"
        else:
            regime = "uniform" if ratio > 1 else "broken"
        trace = sol.u[sys_.boundary_nodes]
        one_signed = bool(np.all(trace >= 0) or np.all(trace <= 0))
        return ScanRow(m, ratio, sol.lam, nonuniformity(sys_, sol.u, m), regime, one_signed, sol.converged)

    grid = [float(m) for m in m_grid]
    return list(executor.map(row, grid)) if executor else [row(m) for m in grid]


def write_dump(sys_: FemSystem, path, fields: Optional[dict] = None) -> None:
    """Plain-text mesh dump.

    Sections, each opened by a header line:
        nodes <N>            then "index x y"
        triangles <T>        then "index i j k" (node indices, counter-clockwise)
        boundary <B>         then "index node"
        field <name> <N>     then "index value", one section per field
    """
    fields = fields or {}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"nodes {sys_.n_nodes}\n")
        for i, (x, y) in enumerate(sys_.nodes):
            fh.write(f"{i} {x:.17g} {y:.17g}\n")
        fh.write(f"triangles {len(sys_.triangles)}\n")
        for i, (p, q, r) in enumerate(sys_.triangles):
            fh.write(f"{i} {p} {q} {r}\n")
        fh.write(f"boundary {len(sys_.boundary_nodes)}\n")
        for i, node in enumerate(sys_.boundary_nodes):
            fh.write(f"{i} {node}\n")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (sys_.n_nodes,):
                raise DomainError(f"field {name!r} has shape {values.shape}, expected ({sys_.n_nodes},)")
            fh.write(f"field {name} {sys_.n_nodes}\n")
            for i, v in enumerate(values):
                fh.write(f"{i} {v:.17g}\n")


def read_dump(path) -> dict:
    """Inverse of ``write_dump``; returns arrays keyed by section name."""
    out: dict = {"fields": {}}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        head = lines[i].split()
        count = int(head[-1])
        body = [ln.split()[1:] for ln in lines[i + 1 : i + 1 + count]]
        if head[0] == "nodes":
            out["nodes"] = np.array(body, dtype=float)
        elif head[0] == "triangles":
            out["triangles"] = np.array(body, dtype=int)
        elif head[0] == "boundary":
            out["boundary"] = np.array(body, dtype=int).ravel()
        else:
            out["fields"][head[1]] = np.array(body, dtype=float).ravel()
        i += 1 + count
    return out

