"""Error norms against reference solutions and convergence bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fem import Problem, SolutionField, TauProvider, solve_problem
from .geometry import Mesh, MeshError, PointLocator, refine
from .quadrature import triangle_rule


@dataclass
class ReferenceSolution:
    """Fine-grid solution used as the exact solution for error measurement.

    ``mode`` is ``"nodal"`` when the coarse grids of interest are nested in
    the fine one (coarse nodes coincide with fine nodes), ``"interpolate"``
    otherwise; in both cases off-node values use linear interpolation.
    """

    field: SolutionField
    mode: str = "interpolate"
    factor: int = 1
    _locator: Optional[PointLocator] = field(default=None, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.field.mesh

    def locator(self) -> PointLocator:
        if self._locator is None:
            self._locator = PointLocator(self.mesh)
        return self._locator

    def at_points(self, points) -> np.ndarray:
        return self.locator().interpolate(self.field.values, points)

    def restrict(self, coarse: Mesh) -> np.ndarray:
        """Reference values at the nodes of ``coarse``."""
        if self.mode == "nodal":
            idx = nested_node_map(coarse, self.mesh)
            return self.field.values[idx]
        return self.at_points(coarse.nodes)


def nested_node_map(coarse: Mesh, fine: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Index of the fine node coinciding with each coarse node.

    Raises
    ------
    MeshError
        If the meshes are not nested structured grids.
    """
    c, f = coarse.structured, fine.structured
    if c is None or f is None:
        raise MeshError("nodal restriction needs structured meshes")
    ratio = c.h / f.h
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9 or (c.n1 - 1) * k != f.n1 - 1 or (c.n2 - 1) * k != f.n2 - 1:
        raise MeshError("coarse mesh is not nested in the reference mesh")
    i2, i1 = np.divmod(np.arange(coarse.n_nodes), c.n1)
    idx = (k * i2) * f.n1 + k * i1
    mismatch = np.max(np.abs(fine.nodes[idx] - coarse.nodes))
    if mismatch > tol * max(1.0, c.L1, c.L2):
        raise MeshError(f"nested node mismatch {mismatch:.2e}")
    return idx


def _same_mesh(a: Mesh, b: Mesh) -> bool:
    return a is b or (a.nodes.shape == b.nodes.shape and a.elements.shape == b.elements.shape
                      and np.array_equal(a.nodes, b.nodes) and np.array_equal(a.elements, b.elements))


def l2_error(coarse: SolutionField, ref: ReferenceSolution) -> float:
    """L2 norm of ``u_h - u_ref`` by the edge-midpoint rule on coarse elements."""
    mesh = coarse.mesh
    qp, qw = triangle_rule("midpoint3")
    lam = np.column_stack([1.0 - qp[:, 0] - qp[:, 1], qp[:, 0], qp[:, 1]])
    el = mesh.elements
    pts = np.einsum("qk,ekd->eqd", lam, mesh.nodes[el])             # (e, q, 2)
    uh = np.einsum("qk,ek->eq", lam, coarse.values[el])
    if _same_mesh(mesh, ref.mesh):
        ur = np.einsum("qk,ek->eq", lam, ref.field.values[el])
    else:
        ur = ref.at_points(pts.reshape(-1, 2)).reshape(uh.shape)
    area = mesh.signed_areas()
    return float(np.sqrt(np.sum(2.0 * area * ((uh - ur) ** 2 @ qw))))


def linf_error(coarse: SolutionField, ref: ReferenceSolution) -> float:
    """Maximum nodal difference on the coarse mesh."""
    return float(np.max(np.abs(coarse.values - ref.restrict(coarse.mesh))))


def make_reference(problem: Problem, factor: int = 8, solver: str = "auto") -> ReferenceSolution:
    """Solve ``problem`` with the spectral coefficient on a mesh refined by ``factor``.

    The coarse problem's own spectral table is reused when it has one. A
    factor of 1 returns the coarse solve itself.
    """
    if factor < 1:
        raise ValueError("refinement factor must be >= 1")
    if factor == 1 or problem.tau.kind == "spectral":
        tau = problem.tau
    else:
        tau = TauProvider("spectral")
    fine_mesh, _ = refine(problem.mesh, factor)
    sol = solve_problem(problem.on_mesh(fine_mesh, tau), method=solver)
    mode = "nodal" if fine_mesh.structured is not None else "interpolate"
    return ReferenceSolution(sol, mode, factor)


def error_ratio_sequence(errors: Sequence[float]) -> np.ndarray:
    """Successive reduction ratios ``e[i] / e[i + 1]``."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two error values")
    return e[:-1] / e[1:]


def observed_order(errors: Sequence[float], refinement: float = 2.0) -> np.ndarray:
    return np.log(error_ratio_sequence(errors)) / np.log(refinement)


def oscillation_indicator(values, lower: float, upper: float) -> float:
    """Total excursion of ``values`` outside ``[lower, upper]``.

    ``max(0, lower - min u) + max(0, max u - upper)``; zero for a solution
    that respects the bounds.
    """
    u = np.asarray(values, dtype=float)
    return float(max(0.0, lower - u.min()) + max(0.0, u.max() - upper))
