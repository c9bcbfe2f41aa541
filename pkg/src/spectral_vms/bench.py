"""End-to-end benchmarks: constant velocity sweep, rotational field, imported flow.

Every benchmark solves the same problem with several coefficient providers
and measures errors against a refined spectral reference. Reports serialize
to JSON; wall-clock times are only included when asked for, so that repeated
runs produce byte-identical output.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .analysis import ReferenceSolution, l2_error, linf_error, make_reference, oscillation_indicator
from .coeff_table import StabTable, build_table
from .fem import Problem, SolutionField, TauProvider, VelocityField, solve_problem
from .geometry import Mesh, build_structured_mesh, make_mesh, read_mesh

CONSTANT_SPEED = 800.0 * np.sqrt(2.0)


@dataclass
class BenchRecord:
    benchmark: str
    n: int
    tau_kind: str
    pe_max: float
    pe1_range: tuple
    pe2_range: tuple
    l2: float
    linf: float
    residual: float
    oscillation: float
    runtime_s: float = 0.0

    def to_dict(self, timings: bool = False) -> dict:
        d = {"benchmark": self.benchmark, "n": self.n,
             "pe_max": self.pe_max, "pe1_range": list(self.pe1_range),
             "pe2_range": list(self.pe2_range), "l2": self.l2, "linf": self.linf,
             "tau_kind": self.tau_kind, "residual": self.residual,
             "oscillation": self.oscillation}
        if timings:
            d["runtime_s"] = self.runtime_s
        return d


@dataclass
class BenchReport:
    benchmark: str
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def by_kind(self, kind: str) -> list:
        return [r for r in self.records if r.tau_kind == kind]

    def get(self, n: int, kind: str) -> BenchRecord:
        for r in self.records:
            if r.n == n and r.tau_kind == kind:
                return r
        raise KeyError((n, kind))

    def to_json(self, timings: bool = False) -> str:
        return json.dumps([r.to_dict(timings) for r in self.records], indent=1)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"# benchmark {self.benchmark}\n")
        for k, v in sorted(self.meta.items()):
            out.write(f"# {k}={v}\n")
        out.write(f"{'n':>4} {'tau':>9} {'Pe-max':>8} {'Pe1-range':>20} {'Pe2-range':>20} "
                  f"{'L2':>11} {'Linf':>11}\n")
        for r in self.records:
            p1 = f"({r.pe1_range[0]:.3g},{r.pe1_range[1]:.3g})"
            p2 = f"({r.pe2_range[0]:.3g},{r.pe2_range[1]:.3g})"
            out.write(f"{r.n:>4} {r.tau_kind:>9} {r.pe_max:>8.4f} {p1:>20} {p2:>20} "
                      f"{r.l2:>11.4e} {r.linf:>11.4e}\n")
        return out.getvalue()


def peclet_stats(peclets: np.ndarray) -> tuple[float, tuple, tuple]:
    return (float(peclets[:, 2].max()),
            (float(peclets[:, 0].min()), float(peclets[:, 0].max())),
            (float(peclets[:, 1].min()), float(peclets[:, 1].max())))


# ------------------------------------------------------------ shared helpers

_TABLE_CACHE: dict = {}


def table_for(max_abs_pe: float, step: float = 0.125, modes: int = 40) -> StabTable:
    """Symmetric psi table covering ``|Pe_i| <= max_abs_pe`` (rounded up), cached in-process."""
    radius = float(min(32.0, max(2.0, np.ceil(max_abs_pe + 1.0))))
    key = (radius, step, modes)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = build_table((-radius, radius), step=step, tr=(modes, modes))
    return _TABLE_CACHE[key]


def _spectral_provider(peclets_hint: float, table: Optional[StabTable]) -> TauProvider:
    if table is None:
        table = table_for(peclets_hint)
    return TauProvider("spectral", table)


def _provider(kind: str, spectral: TauProvider) -> TauProvider:
    return spectral if kind == "spectral" else TauProvider(kind)


def _run(problem: Problem, ref: ReferenceSolution, bench: str, n: int,
         upper: float, lower: float = 0.0) -> BenchRecord:
    t0 = time.perf_counter()
    sol = solve_problem(problem)
    elapsed = time.perf_counter() - t0
    pe_max, r1, r2 = peclet_stats(sol.info["peclets"])
    return BenchRecord(bench, n, problem.tau.kind, pe_max, r1, r2,
                       l2_error(sol, ref), linf_error(sol, ref), float(sol.residual),
                       oscillation_indicator(sol.values, lower, upper), elapsed)


# ------------------------------------------------------------ constant velocity

def constant_source(x, y):
    return np.sin(np.pi * x) * np.cos(np.pi * y)


def bench_constant(n_values: Iterable[int] = range(0, 20, 2), N: int = 81, mu: float = 1.0,
                   speed: float = CONSTANT_SPEED, reference_factor: int = 8,
                   providers: Sequence[str] = ("spectral", "gen1d", "codina"),
                   table: Optional[StabTable] = None) -> BenchReport:
    """Unit square, ``a = speed (cos(n pi/10), sin(n pi/10))``, ``f = sin(pi x) cos(pi y)``."""
    mesh = build_structured_mesh(1.0, 1.0, N, N)
    h = mesh.h
    spectral = _spectral_provider(speed * h / (2 * mu), table)
    report = BenchReport("constant", meta={"N": N, "h": h, "mu": mu,
                                           "reference_factor": reference_factor})
    for n in n_values:
        if not (0 <= int(n) < 20):
            raise ValueError(f"direction index {n} outside 0..19")
        vel = VelocityField.from_angle(int(n) * np.pi / 10.0, speed)
        base = Problem(mesh, mu, vel, constant_source, spectral)
        ref = make_reference(base, reference_factor)
        upper = float(ref.field.values.max())
        lower = float(ref.field.values.min())
        for kind in providers:
            report.records.append(_run(base.on_mesh(mesh, _provider(kind, spectral)), ref,
                                       "constant", int(n), upper, lower))
    return report


# ------------------------------------------------------------ rotational field

ROTATIONAL_MU = 1e-3

_REFERENCE_CACHE: dict = {}


def rotational_mesh(N: int) -> Mesh:
    """``[0, 1] x [0, 1/2]`` with square cells of side ``1/(2N)``."""
    return build_structured_mesh(1.0, 0.5, 2 * N + 1, N + 1)


def _rotational_pe_bound(mesh: Mesh) -> float:
    # |a| <= 2 * sqrt(0.5^2 + 0.5^2) on the domain
    return np.sqrt(2.0) * mesh.h / (2 * ROTATIONAL_MU)


def rotational_reference(N: int, factor: int = 8, table: Optional[StabTable] = None,
                         cache: bool = True) -> ReferenceSolution:
    """Spectral solve on the grid refined ``factor`` times; shared across coarse grids."""
    fine_n = N * factor
    key = fine_n
    if cache and key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]
    mesh = rotational_mesh(N)
    spectral = _spectral_provider(_rotational_pe_bound(mesh), table)
    problem = Problem(mesh, ROTATIONAL_MU, VelocityField.rotational(), 1.0, spectral)
    ref = make_reference(problem, factor)
    if cache:
        _REFERENCE_CACHE.clear()          # keep at most one multi-million node field alive
        _REFERENCE_CACHE[key] = ref
    return ref


def _nested_factor(reference: ReferenceSolution, N: int) -> int:
    s = reference.mesh.structured
    return (s.n2 - 1) // N if s is not None else reference.factor


def bench_rotational(N: int = 100, providers: Sequence[str] = ("spectral", "codina"),
                     reference_factor: int = 8, table: Optional[StabTable] = None,
                     reference: Optional[ReferenceSolution] = None) -> BenchReport:
    """Rotational velocity on ``[0, 1] x [0, 1/2]``, ``mu = 1e-3``, ``f = 1``."""
    mesh = rotational_mesh(N)
    vel = VelocityField.rotational()
    spectral = _spectral_provider(_rotational_pe_bound(mesh), table)
    if reference is None:
        reference = rotational_reference(N, reference_factor, spectral.table)
    upper = float(reference.field.values.max())
    report = BenchReport("rotational", meta={"N": N, "h": mesh.h, "mu": ROTATIONAL_MU,
                                             "reference_factor": _nested_factor(reference, N)})
    base = Problem(mesh, ROTATIONAL_MU, vel, 1.0, spectral)
    for kind in providers:
        report.records.append(_run(base.on_mesh(mesh, _provider(kind, spectral)), reference,
                                   "rotational", N, upper))
    return report


# ------------------------------------------------------------ imported flow

class VelocityFileError(ValueError):
    pass


def read_velocity(stream, n_nodes: Optional[int] = None) -> np.ndarray:
    """Parse ``velocity <n>`` followed by ``n`` lines ``ax ay``.

    ``stream`` is a text stream, a path, or the file content itself (any
    string that is empty or spans several lines).
    """
    if isinstance(stream, Path) or (isinstance(stream, str) and stream and "\n" not in stream):
        with open(stream, "r", encoding="utf-8") as fh:
            return read_velocity(fh, n_nodes)
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = []
    count = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if count is None:
            if len(tok) != 2 or tok[0] != "velocity":
                raise VelocityFileError(f"expected 'velocity <n>' (line {lineno})")
            try:
                count = int(tok[1])
            except ValueError:
                raise VelocityFileError(f"invalid velocity count (line {lineno})") from None
            continue
        if len(tok) != 2:
            raise VelocityFileError(f"velocity line must be 'ax ay' (line {lineno})")
        try:
            rows.append((float(tok[0]), float(tok[1])))
        except ValueError:
            raise VelocityFileError(f"malformed velocity (line {lineno})") from None
    if count is None:
        raise VelocityFileError("empty velocity file")
    if len(rows) != count:
        raise VelocityFileError(f"velocity header announces {count} rows, found {len(rows)}")
    values = np.array(rows, dtype=float).reshape(-1, 2)
    if n_nodes is not None and len(values) != n_nodes:
        raise VelocityFileError(f"velocity has {len(values)} samples but the mesh has {n_nodes} nodes")
    return values


def write_velocity(values, stream) -> None:
    values = np.asarray(values, dtype=float)
    stream.write(f"velocity {len(values)}\n")
    for ax, ay in values:
        stream.write(f"{float(ax)!r} {float(ay)!r}\n")


def read_solution(stream) -> np.ndarray:
    """Read a ``x,y,u`` CSV and return the ``u`` column."""
    data = np.loadtxt(stream, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2]


def bench_external(mesh_path=None, velocity_path=None, mu: float = 1e-3,
                   f: float | Callable = 1.0, providers: Sequence[str] = ("spectral", "codina"),
                   reference_factor: int = 4, reference_mesh_path=None,
                   reference_solution_path=None, table: Optional[StabTable] = None) -> BenchReport:
    """Passive scalar transported by an imported nodal velocity on an imported mesh.

    With no paths the bundled cylinder-channel fixture is used. The reference
    is either a user-supplied field (mesh + ``x,y,u`` CSV) or a spectral solve
    on the uniformly refined mesh.
    """
    if (mesh_path is None) != (velocity_path is None):
        raise ValueError("mesh and velocity paths must be given together")
    if mesh_path is None:
        mesh, values = load_fixture()
    else:
        for p in (mesh_path, velocity_path):
            if not Path(p).is_file():
                raise FileNotFoundError(f"missing input file: {p}")
        mesh = read_mesh(mesh_path)
        values = read_velocity(velocity_path, mesh.n_nodes)
    vel = VelocityField.nodal(mesh, values)
    max_pe = float(np.max(np.abs(vel.at_elements(mesh)) * mesh.element_sizes()[:, None]) / (2 * mu))
    spectral = _spectral_provider(max_pe, table)
    base = Problem(mesh, mu, vel, f, spectral)
    if reference_solution_path is not None:
        if reference_mesh_path is None:
            raise ValueError("a reference solution needs its mesh")
        ref_mesh = read_mesh(reference_mesh_path)
        with open(reference_solution_path, "r", encoding="utf-8") as fh:
            ref_vals = read_solution(fh)
        if len(ref_vals) != ref_mesh.n_nodes:
            raise ValueError("reference solution length does not match its mesh")
        reference = ReferenceSolution(SolutionField(ref_vals, ref_mesh), "interpolate", 0)
    else:
        reference = make_reference(base, reference_factor)
    upper = float(reference.field.values.max())
    report = BenchReport("external", meta={"nodes": mesh.n_nodes, "elements": mesh.n_elements,
                                           "mu": mu, "reference_factor": reference.factor})
    for kind in providers:
        report.records.append(_run(base.on_mesh(mesh, _provider(kind, spectral)), reference,
                                   "external", mesh.n_nodes, upper))
    return report


# ------------------------------------------------------------ bundled fixture

FIXTURE_MESH = "cylinder_mesh.txt"
FIXTURE_VELOCITY = "cylinder_velocity.txt"


def cylinder_fixture(h: float = 0.025, length: float = 2.2, height: float = 0.41,
                     center=(0.2, 0.2), radius: float = 0.05, speed: float = 0.2):
    """Channel with a circular hole and the potential flow past the cylinder.

    Points: a uniform lattice outside the disc (kept away from the circle by
    ``h/2``), equally spaced points on the rectangle sides and on the circle.
    Triangles come from a Delaunay triangulation with the ones inside the
    disc removed. The velocity is uniform flow plus a doublet:
    ``U (1 - R^2 (x^2 - y^2)/r^4, -2 R^2 x y / r^4)`` in cylinder coordinates.
    """
    from scipy.spatial import Delaunay

    cx, cy = center
    nx = int(round(length / h))
    ny = int(round(height / h))
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs[1:-1], ys[1:-1])
    inner = np.column_stack([X.ravel(), Y.ravel()])
    inner = inner[np.hypot(inner[:, 0] - cx, inner[:, 1] - cy) > radius + 0.5 * h]
    ring_n = int(np.ceil(2 * np.pi * radius / (0.5 * h)))
    ang = 2 * np.pi * np.arange(ring_n) / ring_n
    ring = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    bottom = np.column_stack([xs, np.zeros_like(xs)])
    top = np.column_stack([xs, np.full_like(xs, height)])
    left = np.column_stack([np.zeros(ny - 1), ys[1:-1]])
    right = np.column_stack([np.full(ny - 1, length), ys[1:-1]])
    outer = np.concatenate([bottom, top, left, right])
    nodes = np.concatenate([outer, ring, inner])
    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[:len(outer) + len(ring)] = True
    tri = Delaunay(nodes).simplices.astype(np.int64)
    cent = nodes[tri].mean(axis=1)
    tri = tri[np.hypot(cent[:, 0] - cx, cent[:, 1] - cy) > radius]
    p = nodes[tri]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tri = np.where((cross < 0)[:, None], tri[:, [0, 2, 1]], tri)
    tri = tri[np.abs(cross) > 1e-14]
    # canonical element order for reproducible files
    order = np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0]))
    mesh = make_mesh(nodes, tri[order], boundary)
    rx = nodes[:, 0] - cx
    ry = nodes[:, 1] - cy
    r2 = np.maximum(rx * rx + ry * ry, radius * radius)
    vel = speed * np.column_stack([1.0 - radius ** 2 * (rx * rx - ry * ry) / r2 ** 2,
                                   -2.0 * radius ** 2 * rx * ry / r2 ** 2])
    return mesh, vel


def fixture_paths() -> tuple[Path, Path]:
    base = resources.files("spectral_vms") / "data"
    return Path(str(base / FIXTURE_MESH)), Path(str(base / FIXTURE_VELOCITY))


def load_fixture() -> tuple[Mesh, np.ndarray]:
    mesh_path, vel_path = fixture_paths()
    mesh = read_mesh(mesh_path)
    return mesh, read_velocity(vel_path, mesh.n_nodes)
