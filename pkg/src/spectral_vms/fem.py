"""Stabilized P1 finite elements for steady advection-diffusion.

Solves ``-mu Lap(u) + a . grad(u) = f`` with Dirichlet data. The discrete form is

    mu (grad U, grad V) + (a_K . grad U, V)
      + sum_K tau_K (a_K . grad U, a_K . grad V)_K
    = (f, V) + sum_K tau_K (f, a_K . grad V)_K

with ``a_K`` the velocity at the barycenter of ``K`` and ``tau_K`` supplied by a
:class:`TauProvider`.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, TextIO, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeff_table import StabTable, direct_psi, query
from .geometry import Mesh, PointLocator, make_mesh
from .quadrature import triangle_rule
from .stabilization import DEFAULT_TRUNCATION, Truncation, tau_codina, tau_gen1d


class AssemblyError(ArithmeticError):
    pass


class SolverError(ArithmeticError):
    """Linear solve failed to meet the residual contract."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


# ------------------------------------------------------------ velocity

@dataclass(frozen=True)
class VelocityField:
    """Advection velocity, sampled at element barycenters to give ``a_K``.

    Use the constructors :meth:`constant`, :meth:`from_angle`,
    :meth:`rotational` and :meth:`nodal`.
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, a1: float, a2: float) -> "VelocityField":
        return cls("constant", {"a": (float(a1), float(a2))})

    @classmethod
    def from_angle(cls, alpha: float, magnitude: float) -> "VelocityField":
        """``magnitude * (cos alpha, sin alpha)``."""
        return cls.constant(magnitude * np.cos(alpha), magnitude * np.sin(alpha))

    @classmethod
    def rotational(cls, center=(0.5, 0.5), strength: float = 2.0,
                   inner_radius: float = 0.01, inner_strength: float = 0.1) -> "VelocityField":
        """Rigid rotation about ``center``, weakened inside a small disc at the origin.

        ``a = k * (-(y - cy), x - cx)`` with ``k = inner_strength`` where
        ``sqrt(x^2 + y^2) < inner_radius`` and ``k = strength`` elsewhere.
        """
        return cls("rotational", {"center": tuple(map(float, center)), "strength": float(strength),
                                  "inner_radius": float(inner_radius),
                                  "inner_strength": float(inner_strength)})

    @classmethod
    def nodal(cls, mesh: Mesh, values) -> "VelocityField":
        """Per-node samples on ``mesh``, interpolated linearly."""
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes, 2):
            raise ValueError(f"velocity has {values.shape[0] if values.ndim else 0} samples "
                             f"but the mesh has {mesh.n_nodes} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("velocity samples must be finite")
        values = values.copy()
        values.setflags(write=False)
        return cls("nodal", {"mesh": mesh, "values": values})

    def at_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            return np.broadcast_to(np.array(self.params["a"]), pts.shape).copy()
        if self.kind == "rotational":
            p = self.params
            x, y = pts[:, 0], pts[:, 1]
            k = np.where(np.hypot(x, y) < p["inner_radius"], p["inner_strength"], p["strength"])
            cx, cy = p["center"]
            return np.column_stack([-k * (y - cy), k * (x - cx)])
        if self.kind == "nodal":
            loc = self.params.get("_locator")
            if loc is None:
                loc = PointLocator(self.params["mesh"])
                self.params["_locator"] = loc
            return loc.interpolate(self.params["values"], pts)
        raise ValueError(f"unknown velocity kind {self.kind!r}")

    def at_elements(self, mesh: Mesh, sl: slice = slice(None)) -> np.ndarray:
        """``a_K`` (velocity at the barycenter) for the elements ``mesh.elements[sl]``."""
        el = mesh.elements[sl]
        if self.kind == "nodal" and self.params["mesh"] is mesh:
            return self.params["values"][el].mean(axis=1)
        return self.at_points(mesh.nodes[el].mean(axis=1))


def element_peclets(em, a_K, mu: float) -> tuple[float, float, float]:
    """Signed directional Peclet numbers ``h_K a_i / (2 mu)`` and ``h_K |a| / (2 mu)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    h = em.h if hasattr(em, "h") else float(em)
    c = h / (2.0 * mu)
    a1, a2 = float(a_K[0]), float(a_K[1])
    return a1 * c, a2 * c, float(np.hypot(a1, a2)) * c


def peclet_arrays(mesh: Mesh, a_K: np.ndarray, mu: float) -> np.ndarray:
    """``(m, 3)`` array of (Pe1, Pe2, Pe) for every element."""
    c = mesh.element_sizes() / (2.0 * mu)
    return np.column_stack([a_K[:, 0] * c, a_K[:, 1] * c, np.hypot(a_K[:, 0], a_K[:, 1]) * c])


# ------------------------------------------------------------ tau providers

TAU_KINDS = ("spectral", "gen1d", "codina", "none")


@dataclass(frozen=True)
class TauProvider:
    """Element stabilization coefficient.

    ``spectral`` uses ``8 h^2 psi / mu`` with psi from ``table`` when given,
    otherwise from direct evaluation at the truncation ``truncation``.
    """

    kind: str = "spectral"
    table: Optional[StabTable] = None
    truncation: Truncation = DEFAULT_TRUNCATION

    def __post_init__(self):
        if self.kind not in TAU_KINDS:
            raise ValueError(f"unknown tau provider {self.kind!r}; expected one of {TAU_KINDS}")

    def psi_values(self, pe1: np.ndarray, pe2: np.ndarray) -> np.ndarray:
        if self.table is not None:
            return np.asarray(query(self.table, pe1, pe2), dtype=float)
        pairs = np.column_stack([pe1, pe2])
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        vals = direct_psi(uniq[:, 0], uniq[:, 1], self.truncation)
        return vals[inverse.ravel()]

    def __call__(self, h: np.ndarray, mu: float, a_K: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        speed = np.hypot(a_K[:, 0], a_K[:, 1])
        if self.kind == "none":
            return np.zeros_like(h)
        if self.kind == "gen1d":
            return np.asarray(tau_gen1d(h, mu, speed), dtype=float)
        if self.kind == "codina":
            return np.asarray(tau_codina(h, mu, speed), dtype=float)
        c = h / (2.0 * mu)
        psi_v = self.psi_values(a_K[:, 0] * c, a_K[:, 1] * c)
        return 8.0 * h * h / mu * psi_v


# ------------------------------------------------------------ linear system

Source = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _eval_source(f: Source, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    return np.full(x.shape, float(f))


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: Mesh
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    tau: Optional[np.ndarray] = None
    peclets: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def p1_gradients(mesh: Mesh, sl: slice = slice(None)) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the three P1 basis functions per element, ``(m, 3, 2)``, and areas."""
    p = mesh.nodes[mesh.elements[sl]]
    area = mesh.signed_areas()[sl]
    if np.any(~(area > 0)):
        raise AssemblyError("singular or inverted element")
    x, y = p[..., 0], p[..., 1]
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([gx, gy], axis=-1) / (2.0 * area)[:, None, None], area


def assemble(mesh: Mesh, mu: float, vel: VelocityField, f: Source,
             tau_provider: TauProvider = TauProvider("none"),
             chunk: int = 1 << 20) -> LinearSystem:
    """Assemble the stabilized system (no boundary conditions applied)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    n = mesh.n_nodes
    ne = mesh.n_elements
    h_all = mesh.element_sizes()
    tau = np.empty(ne)
    peclets = np.empty((ne, 3))
    qp, qw = triangle_rule("interior3")
    lam = np.column_stack([1.0 - qp[:, 0] - qp[:, 1], qp[:, 0], qp[:, 1]])  # (q, 3)

    matrix = sp.csr_matrix((n, n))
    rhs = np.zeros(n)
    for start in range(0, ne, chunk):
        sl = slice(start, start + chunk)
        el = mesh.elements[sl]
        grads, area = p1_gradients(mesh, sl)
        a = vel.at_elements(mesh, sl)
        h = h_all[sl]
        t = np.asarray(tau_provider(h, mu, a), dtype=float)
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise AssemblyError("stabilization coefficients must be finite and non-negative")
        tau[sl] = t
        c = h / (2.0 * mu)
        peclets[sl] = np.column_stack([a[:, 0] * c, a[:, 1] * c, np.hypot(a[:, 0], a[:, 1]) * c])

        stiff = mu * area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
        adv_grad = np.einsum("ed,ejd->ej", a, grads)                 # a . grad(phi_j)
        local = stiff
        local += (area / 3.0)[:, None, None] * adv_grad[:, None, :]
        local += (t * area)[:, None, None] * adv_grad[:, :, None] * adv_grad[:, None, :]
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        matrix = matrix + sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
        del stiff, local, rows, cols

        pts = mesh.nodes[el]                                          # (e, 3, 2)
        qx = lam @ pts[..., 0].T                                      # (q, e)
        qy = lam @ pts[..., 1].T
        fq = _eval_source(f, qx, qy)                                  # (q, e)
        scale = 2.0 * area
        gal = np.einsum("q,qe,qi->ei", qw, fq, lam) * scale[:, None]
        stab = (qw @ fq * scale * t)[:, None] * adv_grad
        rhs += np.bincount(el.ravel(), (gal + stab).ravel(), minlength=n)
    matrix.sum_duplicates()
    matrix.sort_indices()
    return LinearSystem(matrix.tocsr(), rhs, mesh,
                        np.zeros(n, dtype=bool), np.zeros(n),
                        tau=tau, peclets=peclets)


BoundaryData = Union[None, float, Mapping[int, float], Callable[[np.ndarray, np.ndarray], np.ndarray]]


def apply_dirichlet(sys_: LinearSystem, values: BoundaryData = None) -> LinearSystem:
    """Impose Dirichlet data on every boundary node of the mesh.

    ``values`` may be ``None`` (homogeneous), a constant, a callable ``g(x, y)``
    or a mapping ``node -> value`` (missing boundary nodes default to 0).
    Constrained rows become identity rows and the known values are moved to
    the right-hand side of the remaining equations.
    """
    mesh = sys_.mesh
    mask = mesh.boundary.copy()
    g = np.zeros(mesh.n_nodes)
    if values is None:
        pass
    elif callable(values):
        b = np.flatnonzero(mask)
        g[b] = _eval_source(values, mesh.nodes[b, 0], mesh.nodes[b, 1])
    elif isinstance(values, Mapping):
        for node, val in values.items():
            if not (0 <= int(node) < mesh.n_nodes):
                raise ValueError(f"node {node} out of range")
            if not mask[int(node)]:
                raise ValueError(f"Dirichlet value supplied for non-boundary node {node}")
            g[int(node)] = float(val)
    else:
        g[mask] = float(values)
    A = sys_.matrix.tocsr()
    rhs = sys_.rhs - A @ g
    rhs[mask] = g[mask]
    # drop constrained rows and columns in place on a copy, then add unit diagonal
    Ac = A.copy()
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    Ac.data[mask[rows] | mask[Ac.indices]] = 0.0
    del rows
    Ac = Ac + sp.diags(mask.astype(float), format="csr")
    Ac.eliminate_zeros()
    Ac.sort_indices()
    return LinearSystem(Ac, rhs, mesh, mask, g, sys_.tau, sys_.peclets)


# ------------------------------------------------------------ solve

@dataclass
class SolutionField:
    values: np.ndarray
    mesh: Mesh
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("solution length does not match the mesh")

    def to_csv(self, stream: Optional[TextIO] = None) -> str:
        out = io.StringIO()
        out.write("x,y,u\n")
        for (x, y), u in zip(self.mesh.nodes, self.values):
            out.write(f"{x:.17g},{y:.17g},{u:.17g}\n")
        text = out.getvalue()
        if stream is not None:
            stream.write(text)
        return text

    def to_vtk(self, stream: Optional[TextIO] = None, name: str = "u") -> str:
        """Legacy ASCII VTK unstructured grid with the solution as point data."""
        m = self.mesh
        out = io.StringIO()
        out.write("# vtk DataFile Version 3.0\nsolution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        out.write(f"POINTS {m.n_nodes} double\n")
        for x, y in m.nodes:
            out.write(f"{x:.17g} {y:.17g} 0\n")
        out.write(f"CELLS {m.n_elements} {4 * m.n_elements}\n")
        for i, j, k in m.elements:
            out.write(f"3 {i} {j} {k}\n")
        out.write(f"CELL_TYPES {m.n_elements}\n")
        out.write("5\n" * m.n_elements)
        out.write(f"POINT_DATA {m.n_nodes}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for u in self.values:
            out.write(f"{u:.17g}\n")
        text = out.getvalue()
        if stream is not None:
            stream.write(text)
        return text


DIRECT_LIMIT = 150_000


def _relres(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def solve(sys_: LinearSystem, tol: float = 1e-10, method: str = "auto",
          maxiter: int = 2000) -> SolutionField:
    """Solve the constrained system, enforcing ``||Ax - b|| / ||b|| <= tol``.

    ``method`` is ``"direct"`` (sparse LU), ``"amg"`` (algebraic multigrid
    preconditioned BiCGSTAB) or ``"auto"`` (direct up to ``DIRECT_LIMIT`` unknowns).
    """
    A = sys_.matrix.tocsr()
    b = sys_.rhs
    n = A.shape[0]
    t0 = time.perf_counter()
    if not np.any(b):
        x = np.zeros(n)
        return SolutionField(x, sys_.mesh, 0.0, {"method": "trivial", "seconds": 0.0})
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "amg"
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"sparse LU failed: {exc}", float("inf")) from exc
        x = lu.solve(b)
        for _ in range(3):  # iterative refinement
            res = _relres(A, x, b)
            if res <= tol:
                break
            x = x + lu.solve(b - A @ x)
        iters = 0
    elif method == "amg":
        x, iters = _solve_amg(A, b, tol, maxiter)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = _relres(A, x, b)
    if not (np.all(np.isfinite(x)) and res <= tol):
        raise SolverError(f"{method} solve did not reach tolerance {tol:g}", res)
    return SolutionField(x, sys_.mesh, res, {"method": method, "iterations": iters,
                                              "seconds": time.perf_counter() - t0})


def _solve_amg(A, b, tol, maxiter):
    """Classical (Ruge-Stuben) AMG preconditioned BiCGSTAB.

    Restarted from the true residual until the tolerance is met; BiCGSTAB
    keeps only a few vectors, which matters on multi-million unknown grids.
    GMRES(20) takes over if BiCGSTAB stalls.
    """
    import pyamg

    ml = pyamg.ruge_stuben_solver(A, max_coarse=500)
    M = ml.aspreconditioner(cycle="V")
    x = np.zeros_like(b)
    nb = np.linalg.norm(b)
    total = 0
    for attempt in range(6):
        r = b - A @ x
        rn = np.linalg.norm(r)
        if rn <= 0.5 * tol * nb:
            break
        count = [0]

        def cb(_):
            count[0] += 1

        rtol = min(0.5, 0.2 * tol * nb / rn)
        if attempt < 3:
            dx, info = spla.bicgstab(A, r, M=M, rtol=rtol, atol=0.0, maxiter=maxiter, callback=cb)
        else:
            dx, info = spla.gmres(A, r, M=M, rtol=rtol, atol=0.0, restart=20, maxiter=maxiter,
                                  callback=cb, callback_type="pr_norm")
        if np.all(np.isfinite(dx)):
            x = x + dx
        total += count[0]
    return x, total


# ------------------------------------------------------------ problems

@dataclass
class Problem:
    """Complete boundary-value problem on a given mesh."""

    mesh: Mesh
    mu: float
    velocity: VelocityField
    source: Source = 1.0
    tau: TauProvider = field(default_factory=TauProvider)
    boundary: BoundaryData = None

    def on_mesh(self, mesh: Mesh, tau: Optional[TauProvider] = None) -> "Problem":
        return Problem(mesh, self.mu, self.velocity, self.source,
                       self.tau if tau is None else tau, self.boundary)


def solve_problem(problem: Problem, tol: float = 1e-10, method: str = "auto") -> SolutionField:
    system = apply_dirichlet(
        assemble(problem.mesh, problem.mu, problem.velocity, problem.source, problem.tau),
        problem.boundary)
    sol = solve(system, tol=tol, method=method)
    sol.info["peclets"] = system.peclets
    sol.info["tau"] = system.tau
    return sol


def local_matrices(vertices, mu: float, a, tau: float = 0.0):
    """Dense 3x3 diffusion, advection and SUPG matrices of a single triangle."""
    m = make_mesh(np.asarray(vertices, float), [[0, 1, 2]], [True, True, True])
    grads, area = p1_gradients(m)
    g = grads[0]
    ag = g @ np.asarray(a, float)
    stiff = mu * area[0] * g @ g.T
    conv = area[0] / 3.0 * np.tile(ag, (3, 1))
    supg = tau * area[0] * np.outer(ag, ag)
    return stiff, conv, supg
