"""Triangular meshes: structured right-isosceles grids and imported meshes.

Structured meshes split every square cell ``[x0, x1] x [y0, y1]`` along the
anti-diagonal into

* an ``A`` triangle (below the diagonal) with vertices
  ``(x0, y0), (x1, y0), (x0, y1)``, and
* a ``B`` triangle (above the diagonal) with vertices
  ``(x1, y1), (x0, y1), (x1, y0)``.

In both cases vertex 0 is the right-angle corner, which is the origin of the
affine map onto the reference triangle used by :mod:`spectral_vms.spectral`.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

import numpy as np

ORIENT_A = 0
ORIENT_B = 1
ORIENT_GENERAL = 2
_ORIENT_NAMES = {ORIENT_A: "A", ORIENT_B: "B", ORIENT_GENERAL: "general"}


class MeshError(ValueError):
    """Invalid mesh construction parameters or mesh data."""


class MeshParseError(MeshError):
    """Malformed mesh text; the message names the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


@dataclass(frozen=True)
class StructuredInfo:
    n1: int
    n2: int
    h: float
    L1: float
    L2: float
    origin: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangular mesh.

    Attributes
    ----------
    nodes : (n, 2) float array
    elements : (m, 3) int array, counterclockwise
    boundary : (n,) bool array
    orientation : (m,) int array of ORIENT_A / ORIENT_B / ORIENT_GENERAL
    structured : StructuredInfo or None
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    orientation: np.ndarray
    structured: Optional[StructuredInfo] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.nodes, self.elements, self.boundary, self.orientation):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def h(self) -> Optional[float]:
        return None if self.structured is None else self.structured.h

    def signed_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = _signed_areas(self.nodes, self.elements)
        return self._cache["areas"]

    def areas(self) -> np.ndarray:
        return self.signed_areas()

    def barycenters(self) -> np.ndarray:
        if "bary" not in self._cache:
            self._cache["bary"] = self.nodes[self.elements].mean(axis=1)
        return self._cache["bary"]

    def element_sizes(self) -> np.ndarray:
        """h_K per element: the side size on structured meshes, sqrt(2|K|) otherwise."""
        if "hK" not in self._cache:
            hk = np.sqrt(2.0 * self.signed_areas())
            if self.structured is not None:
                hk = np.where(self.orientation == ORIENT_GENERAL, hk, self.structured.h)
            self._cache["hK"] = hk
        return self._cache["hK"]

    def boundary_edges(self) -> np.ndarray:
        """Edges belonging to exactly one element, as sorted node pairs."""
        edges = np.sort(self.elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]


def _signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = nodes[elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def make_mesh(nodes, elements, boundary, orientation=None, structured=None,
              check: bool = True) -> Mesh:
    nodes = np.ascontiguousarray(nodes, dtype=float)
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    boundary = np.ascontiguousarray(boundary, dtype=bool)
    if orientation is None:
        orientation = np.full(len(elements), ORIENT_GENERAL, dtype=np.int8)
    orientation = np.ascontiguousarray(orientation, dtype=np.int8)
    if check:
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (n, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshError("elements must have shape (m, 3)")
        if boundary.shape != (nodes.shape[0],):
            raise MeshError("one boundary flag per node is required")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise MeshError("node index out of range")
        if np.any(_signed_areas(nodes, elements) <= 0):
            raise MeshError("element with non-positive signed area")
    return Mesh(nodes, elements, boundary, orientation, structured)


def build_structured_mesh(L1: float, L2: float, N1: int, N2: int,
                          origin: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    """Uniform mesh of ``[0, L1] x [0, L2]`` with ``N1 x N2`` nodes.

    Nodes are numbered row-major with x fastest; each cell contributes its
    A triangle followed by its B triangle.

    Raises
    ------
    MeshError
        If ``N1`` or ``N2`` is below 2, a length is not positive, or the cells
        are not square.
    """
    if int(N1) != N1 or int(N2) != N2 or N1 < 2 or N2 < 2:
        raise MeshError("N1 and N2 must be integers >= 2")
    if not (L1 > 0 and L2 > 0):
        raise MeshError("L1 and L2 must be positive")
    N1, N2 = int(N1), int(N2)
    h1 = L1 / (N1 - 1)
    h2 = L2 / (N2 - 1)
    if abs(h1 - h2) > 1e-12 * h1:
        raise MeshError(
            f"cells must be square (h1={h1!r}, h2={h2!r}); "
            "the triangle eigen-pairs assume isosceles right triangles")
    x = origin[0] + L1 * np.arange(N1) / (N1 - 1)
    y = origin[1] + L2 * np.arange(N2) / (N2 - 1)
    X, Y = np.meshgrid(x, y)  # rows are y, x fastest
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(N1 * N2, dtype=np.int64).reshape(N2, N1)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    tri_a = np.column_stack([n00, n10, n01])
    tri_b = np.column_stack([n11, n01, n10])
    elements = np.stack([tri_a, tri_b], axis=1).reshape(-1, 3)
    orientation = np.tile(np.array([ORIENT_A, ORIENT_B], dtype=np.int8), len(n00))
    boundary = np.zeros((N2, N1), dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    info = StructuredInfo(N1, N2, h1, float(L1), float(L2), tuple(map(float, origin)))
    return make_mesh(nodes, elements, boundary.ravel(), orientation, info, check=False)


def element_metrics(mesh: Mesh, e: int) -> "ElementMetrics":
    if not (0 <= e < mesh.n_elements):
        raise IndexError(f"element index {e} out of range [0, {mesh.n_elements})")
    verts = mesh.nodes[mesh.elements[e]].copy()
    return ElementMetrics(
        barycenter=verts.mean(axis=0),
        area=float(mesh.signed_areas()[e]),
        h=float(mesh.element_sizes()[e]),
        orientation=_ORIENT_NAMES[int(mesh.orientation[e])],
        vertices=verts,
    )


@dataclass(frozen=True)
class ElementMetrics:
    barycenter: np.ndarray
    area: float
    h: float
    orientation: str
    vertices: np.ndarray

    @property
    def corner(self) -> np.ndarray:
        """Lower-left corner of the enclosing cell (structured elements)."""
        if self.orientation == "A":
            return self.vertices[0]
        if self.orientation == "B":
            return self.vertices[0] - self.h
        raise MeshError("general elements have no enclosing square cell")


def refine_uniform(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """Split every triangle into four through its edge midpoints.

    Returns the refined mesh and a ``(n_new, 2)`` array of parent node pairs
    (a node created from itself repeats its index) that can be used to carry
    nodal data over by averaging.
    """
    if mesh.structured is not None:
        s = mesh.structured
        fine = build_structured_mesh(s.L1, s.L2, 2 * (s.n1 - 1) + 1, 2 * (s.n2 - 1) + 1,
                                     origin=s.origin)
        i2, i1 = np.divmod(np.arange(fine.n_nodes), fine.structured.n1)
        lo1, hi1 = i1 // 2, (i1 + 1) // 2
        lo2, hi2 = i2 // 2, (i2 + 1) // 2
        a = lo2 * s.n1 + lo1
        b = hi2 * s.n1 + hi1
        # Cell-interior points lie on the anti-diagonal of the coarse cell.
        diag = (i1 % 2 == 1) & (i2 % 2 == 1)
        a = np.where(diag, lo2 * s.n1 + hi1, a)
        b = np.where(diag, hi2 * s.n1 + lo1, b)
        return fine, np.column_stack([a, b])

    el = mesh.elements
    n = mesh.n_nodes
    edges = np.sort(el[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1, 3)
    mid_ids = n + np.arange(len(uniq))
    m01, m12, m20 = (mid_ids[inverse[:, k]] for k in range(3))
    v0, v1, v2 = el[:, 0], el[:, 1], el[:, 2]
    new_el = np.concatenate([
        np.column_stack([v0, m01, m20]),
        np.column_stack([m01, v1, m12]),
        np.column_stack([m20, m12, v2]),
        np.column_stack([m01, m12, m20]),
    ])
    new_nodes = np.concatenate([mesh.nodes, mesh.nodes[uniq].mean(axis=1)])
    on_bdry_edge = counts == 1
    new_bdry = np.concatenate([mesh.boundary, on_bdry_edge])
    parents = np.concatenate([np.column_stack([np.arange(n), np.arange(n)]), uniq])
    return make_mesh(new_nodes, new_el, new_bdry), parents


def refine(mesh: Mesh, factor: int) -> tuple[Mesh, np.ndarray]:
    """Refine by an integer factor; returns the fine mesh and a coarse-to-fine node map.

    Structured meshes accept any factor >= 1; general meshes need a power of two.
    The returned map gives, for each coarse node, the index of the coincident
    fine node.
    """
    if factor < 1 or int(factor) != factor:
        raise MeshError("refinement factor must be a positive integer")
    factor = int(factor)
    if factor == 1:
        return mesh, np.arange(mesh.n_nodes)
    if mesh.structured is not None:
        s = mesh.structured
        fine = build_structured_mesh(s.L1, s.L2, factor * (s.n1 - 1) + 1,
                                     factor * (s.n2 - 1) + 1, origin=s.origin)
        i2, i1 = np.divmod(np.arange(mesh.n_nodes), s.n1)
        return fine, (factor * i2) * fine.structured.n1 + factor * i1
    levels = int(round(math.log2(factor)))
    if 2 ** levels != factor:
        raise MeshError("general meshes can only be refined by powers of two")
    fine = mesh
    for _ in range(levels):
        fine, _ = refine_uniform(fine)
    # uniform refinement keeps the coarse nodes first, in order
    return fine, np.arange(mesh.n_nodes)


def _fmt(v: float) -> str:
    return repr(float(v))


def export_mesh(mesh: Mesh, stream: Optional[TextIO] = None) -> str:
    """Write ``mesh`` in the text format read by :func:`import_mesh`."""
    out = io.StringIO()
    out.write(f"nodes {mesh.n_nodes}\n")
    for (x, y), b in zip(mesh.nodes, mesh.boundary):
        out.write(f"{_fmt(x)} {_fmt(y)} {int(b)}\n")
    out.write(f"elements {mesh.n_elements}\n")
    for i, j, k in mesh.elements:
        out.write(f"{i} {j} {k}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def _data_lines(stream: Iterable[str]):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def import_mesh(stream: TextIO | str) -> Mesh:
    """Parse a mesh from text.

    Format::

        nodes <n>
        x y b          (n lines, b in {0, 1})
        elements <m>
        i j k          (m lines, 0-based, counterclockwise)

    Raises
    ------
    MeshParseError
        On malformed lines, out-of-range indices or degenerate elements.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = _data_lines(stream)

    def header(keyword):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"missing '{keyword}' header", -1) from None
        if len(tok) != 2 or tok[0] != keyword:
            raise MeshParseError(f"expected '{keyword} <count>'", lineno)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshParseError(f"invalid {keyword} count {tok[1]!r}", lineno) from None
        if count < 0:
            raise MeshParseError(f"negative {keyword} count", lineno)
        return lineno, count

    last, n = header("nodes")
    nodes = np.empty((n, 2))
    bflags = np.empty(n, dtype=bool)
    for i in range(n):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {n} node lines, got {i}", last + 1) from None
        last = lineno
        if len(tok) != 3:
            raise MeshParseError("node line must be 'x y b'", lineno)
        try:
            nodes[i] = float(tok[0]), float(tok[1])
        except ValueError:
            raise MeshParseError("malformed node coordinates", lineno) from None
        if tok[2] not in ("0", "1"):
            raise MeshParseError("boundary flag must be 0 or 1", lineno)
        bflags[i] = tok[2] == "1"
        if not np.all(np.isfinite(nodes[i])):
            raise MeshParseError("non-finite node coordinate", lineno)

    last, m = header("elements")
    elements = np.empty((m, 3), dtype=np.int64)
    for e in range(m):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {m} element lines, got {e}", last + 1) from None
        last = lineno
        if len(tok) != 3:
            raise MeshParseError("element line must be 'i j k'", lineno)
        try:
            ijk = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("malformed element indices", lineno) from None
        if min(ijk) < 0 or max(ijk) >= n:
            raise MeshParseError("node index out of range", lineno)
        p = nodes[ijk]
        area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                      - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
        if not area > 0:
            raise MeshParseError("zero or negative area element", lineno)
        elements[e] = ijk
    extra = next(lines, None)
    if extra is not None:
        raise MeshParseError("unexpected trailing data", extra[0])
    return make_mesh(nodes, elements, bflags, check=False)


def read_mesh(path) -> Mesh:
    with open(path, "r", encoding="utf-8") as fh:
        return import_mesh(fh)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        export_mesh(mesh, fh)


class PointLocator:
    """Find the element containing each query point and its barycentric coordinates.

    Structured meshes are located by index arithmetic; general meshes use a
    k-d tree over barycenters and test the nearest candidates.
    """

    def __init__(self, mesh: Mesh, tol: float = 1e-10):
        self.mesh = mesh
        self.tol = tol
        p = mesh.nodes[mesh.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        # rows of the inverse Jacobian
        self._inv = np.stack([np.column_stack([d2[:, 1], -d2[:, 0]]),
                              np.column_stack([-d1[:, 1], d1[:, 0]])], axis=1) / det[:, None, None]
        self._origin = p[:, 0]
        self._tree = None

    def _bary(self, elems, pts):
        r = pts - self._origin[elems]
        uv = np.einsum("nij,nj->ni", self._inv[elems], r)
        return np.column_stack([1.0 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]])

    def _structured(self, pts):
        s = self.mesh.structured
        u = (pts[:, 0] - s.origin[0]) / s.h
        v = (pts[:, 1] - s.origin[1]) / s.h
        i = np.clip(np.floor(u).astype(np.int64), 0, s.n1 - 2)
        j = np.clip(np.floor(v).astype(np.int64), 0, s.n2 - 2)
        upper = (u - i) + (v - j) > 1.0
        return 2 * (j * (s.n1 - 1) + i) + upper

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(element index, barycentric weights (n, 3))`` for each point.

        Raises
        ------
        MeshError
            If a point lies outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.mesh.structured is not None and np.all(self.mesh.orientation != ORIENT_GENERAL):
            elems = self._structured(pts)
            lam = self._bary(elems, pts)
            bad = np.any(lam < -self.tol, axis=1)
            if np.any(bad):
                raise MeshError(f"{int(bad.sum())} point(s) outside the mesh, e.g. {pts[bad][0]}")
            return elems, lam
        if self._tree is None:
            from scipy.spatial import cKDTree
            self._tree = cKDTree(self.mesh.barycenters())
        elems = np.full(len(pts), -1, dtype=np.int64)
        lam = np.zeros((len(pts), 3))
        todo = np.arange(len(pts))
        k = 8
        while todo.size:
            kk = min(k, self.mesh.n_elements)
            _, cand = self._tree.query(pts[todo], k=kk)
            cand = cand.reshape(len(todo), kk)
            found = np.zeros(len(todo), dtype=bool)
            for c in range(kk):
                rest = ~found
                if not rest.any():
                    break
                e = cand[rest, c]
                b = self._bary(e, pts[todo[rest]])
                ok = np.all(b >= -self.tol, axis=1)
                idx = np.flatnonzero(rest)[ok]
                elems[todo[idx]] = e[ok]
                lam[todo[idx]] = b[ok]
                found[idx] = True
            todo = todo[~found]
            if kk == self.mesh.n_elements and todo.size:
                raise MeshError(f"{todo.size} point(s) outside the mesh, e.g. {pts[todo[0]]}")
            k *= 8
        return elems, lam

    def interpolate(self, nodal_values, points) -> np.ndarray:
        """P1 interpolation of nodal values (trailing axes allowed) at ``points``."""
        vals = np.asarray(nodal_values)
        elems, lam = self.locate(points)
        corner = vals[self.mesh.elements[elems]]          # (n, 3, ...)
        return np.einsum("nk,nk...->n...", lam, corner)
