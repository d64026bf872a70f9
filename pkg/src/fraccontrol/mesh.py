"""Base triangulations, graded partitions of [0, Y] and their tensor-product cylinder."""

from dataclasses import dataclass, field
import math
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay


@dataclass(frozen=True)
class ClosedCurve:
    """Closed parametric curve ``t -> point``, ``t`` in [0, 1), counterclockwise."""

    point: Callable
    name: str = "curve"

    def __call__(self, t):
        return self.point(np.asarray(t, dtype=float))

    def polygon(self, n):
        return self(np.arange(n) / n)

    def is_convex(self, n=512):
        p = self.polygon(n)
        e = np.roll(p, -1, axis=0) - p
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross > -1e-12) and np.any(cross > 0.0))


def unit_disk_curve():
    def point(t):
        return np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], axis=-1)

    return ClosedCurve(point, name="unit-disk")


def unit_square_curve():
    def point(t):
        t = np.mod(t, 1.0) * 4.0
        side = np.minimum(np.floor(t), 3).astype(int)
        r = t - side
        x = np.choose(side, [r, np.ones_like(r), 1.0 - r, np.zeros_like(r)])
        y = np.choose(side, [np.zeros_like(r), r, np.ones_like(r), 1.0 - r])
        return np.stack([x, y], axis=-1)

    return ClosedCurve(point, name="unit-square")


@dataclass
class BaseMesh:
    """Conforming triangulation of the base domain.

    ``boundary_param`` holds the curve parameter of each boundary vertex of an
    inscribed polygon (NaN elsewhere); it is used to snap refined boundary
    midpoints back onto the curve.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    domain_tag: str = "square"
    curve: ClosedCurve | None = None
    boundary_param: np.ndarray | None = None
    domain_area: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        # counterclockwise orientation
        d = self._signed_double_areas()
        flip = d < 0
        if np.any(flip):
            self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]

    def _signed_double_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = 0.5 * self._signed_double_areas()
        return self._cache["areas"]

    @property
    def interior(self) -> np.ndarray:
        """Indices of the interior vertices N(T_Omega), in increasing order."""
        if "interior" not in self._cache:
            self._cache["interior"] = np.flatnonzero(~self.boundary)
        return self._cache["interior"]

    @property
    def interior_index(self) -> np.ndarray:
        """Map vertex -> position among interior vertices (-1 on the boundary)."""
        if "interior_index" not in self._cache:
            idx = -np.ones(self.n_vertices, dtype=np.int64)
            idx[self.interior] = np.arange(len(self.interior))
            self._cache["interior_index"] = idx
        return self._cache["interior_index"]

    @property
    def edges(self) -> np.ndarray:
        if "edges" not in self._cache:
            t = self.triangles
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            self._cache["edges"] = np.unique(e, axis=0)
        return self._cache["edges"]

    @property
    def h(self) -> float:
        p = self.vertices[self.edges]
        return float(np.max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.degrees(np.min(angles)))

    def uncovered_area(self) -> float:
        """Measure of the part of the domain not covered by triangles."""
        return self.domain_area - float(np.sum(self.areas))


def uniform_square(n: int, diagonal: str = "/") -> BaseMesh:
    """Unit square cut into n x n cells, each split along one diagonal.

    Gives ``(n+1)^2`` vertices and ``2 n^2`` triangles.
    """
    if n < 1:
        raise ValueError(f"need at least one cell per side, got {n}")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    if diagonal == "/":
        tris = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    elif diagonal == "\\":
        tris = np.concatenate([np.column_stack([v00, v10, v01]), np.column_stack([v10, v11, v01])])
    else:
        raise ValueError(f"unknown diagonal {diagonal!r}")
    vx, vy = vertices[:, 0], vertices[:, 1]
    boundary = (vx == 0.0) | (vx == 1.0) | (vy == 0.0) | (vy == 1.0)
    return BaseMesh(vertices, tris, boundary, domain_tag="square", domain_area=1.0)


def triangulate_square(level: int) -> BaseMesh:
    """Uniform square mesh with ``2**level`` cells per side."""
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    return uniform_square(2**level)


def _polygon_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def curve_area(curve: ClosedCurve, n: int = 1 << 15) -> float:
    """Enclosed area; inscribed polygons err by O(n^-2) for smooth curves, removed by extrapolation."""
    coarse = _polygon_area(curve.polygon(n))
    fine = _polygon_area(curve.polygon(2 * n))
    return (4.0 * fine - coarse) / 3.0


def triangulate_convex_domain(curve: ClosedCurve, h: float) -> BaseMesh:
    """Inscribed-polygon mesh of a convex domain with Delaunay interior fill.

    Boundary vertices sit on the curve at equal parameter spacing; interior
    vertices come from a hexagonal lattice of spacing ``h`` kept at distance
    ``>= h/2`` from the polygon boundary.
    """
    if not curve.is_convex():
        raise ValueError("boundary curve is not convex (or not counterclockwise)")
    perimeter = float(np.sum(np.linalg.norm(np.diff(curve.polygon(4096), axis=0, append=curve.polygon(4096)[:1]), axis=1)))
    nb = max(6, math.ceil(perimeter / h))
    t = np.arange(nb) / nb
    bpts = curve(t)

    lo, hi = bpts.min(axis=0), bpts.max(axis=0)
    dy = h * math.sqrt(3.0) / 2.0
    rows = np.arange(lo[1], hi[1] + dy, dy)
    pts = []
    for r, yv in enumerate(rows):
        xs = np.arange(lo[0] + (0.5 * h if r % 2 else 0.0), hi[0] + h, h)
        pts.append(np.column_stack([xs, np.full_like(xs, yv)]))
    lattice = np.concatenate(pts)
    # distance to each polygon edge line, positive inside for a ccw polygon
    a = bpts
    e = np.roll(bpts, -1, axis=0) - a
    normal = np.column_stack([-e[:, 1], e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
    dist = np.min(np.einsum("pej,ej->pe", lattice[:, None, :] - a[None, :, :], normal), axis=1)
    interior_pts = lattice[dist >= 0.5 * h]

    vertices = np.concatenate([bpts, interior_pts])
    tri = Delaunay(vertices)
    tris = tri.simplices
    u = vertices[tris[:, 1]] - vertices[tris[:, 0]]
    v = vertices[tris[:, 2]] - vertices[tris[:, 0]]
    area = 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    tris = tris[area > 1e-14 * h * h]
    boundary = np.zeros(len(vertices), dtype=bool)
    boundary[:nb] = True
    param = np.full(len(vertices), np.nan)
    param[:nb] = t
    return BaseMesh(
        vertices,
        tris,
        boundary,
        domain_tag="polygonal-approx",
        curve=curve,
        boundary_param=param,
        domain_area=curve_area(curve),
    )


def refine_uniform(mesh: BaseMesh) -> BaseMesh:
    """Red refinement; new boundary midpoints are snapped onto the curve, if any."""
    edges = mesh.edges
    nv = mesh.n_vertices
    key = edges[:, 0] * nv + edges[:, 1]
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    t = mesh.triangles
    all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    counts = np.bincount(np.searchsorted(key, all_edges[:, 0] * nv + all_edges[:, 1]), minlength=len(edges))
    bnd_edge = counts == 1
    if mesh.curve is not None and mesh.boundary_param is not None:
        t0 = mesh.boundary_param[edges[:, 0]]
        t1 = mesh.boundary_param[edges[:, 1]]
        gap = np.mod(t1 - t0, 1.0)
        # midpoint of the shorter parameter arc
        tm = np.mod(np.where(gap <= 0.5, t0 + 0.5 * gap, t1 + 0.5 * (1.0 - gap)), 1.0)
        mid[bnd_edge] = mesh.curve(tm[bnd_edge])
        new_param = np.concatenate([mesh.boundary_param, np.where(bnd_edge, tm, np.nan)])
    else:
        new_param = None

    def edge_id(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return np.searchsorted(key, lo * nv + hi) + nv

    m01 = edge_id(t[:, 0], t[:, 1])
    m12 = edge_id(t[:, 1], t[:, 2])
    m20 = edge_id(t[:, 2], t[:, 0])
    tris = np.concatenate([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ])
    vertices = np.concatenate([mesh.vertices, mid])
    boundary = np.concatenate([mesh.boundary, bnd_edge])
    return BaseMesh(
        vertices,
        tris,
        boundary,
        domain_tag=mesh.domain_tag,
        curve=mesh.curve,
        boundary_param=new_param,
        domain_area=mesh.domain_area,
    )


@dataclass(frozen=True)
class GradedPartition:
    """Points ``y_k = (k/M)^gamma Y`` of [0, Y]."""

    M: int
    gamma: float
    Y: float
    points: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def sigma(self) -> float:
        """Largest length ratio of neighbouring intervals (either order)."""
        h = self.lengths
        if len(h) < 2:
            return 1.0
        r = h[1:] / h[:-1]
        return float(max(np.max(r), np.max(1.0 / r)))


def grading_exponent(s: float, gamma_factor: float = 1.1) -> float:
    """``gamma_factor * max(3/(2s), 1.4)``; strictly above 3/(2s) and 1."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    if not gamma_factor > 1.0:
        raise ValueError(f"gamma_factor must exceed 1, got {gamma_factor}")
    return gamma_factor * max(1.5 / s, 1.4)


def graded_partition(M: int, Y: float, s: float | None = None, gamma: float | None = None,
                     gamma_factor: float = 1.1) -> GradedPartition:
    """Graded partition of [0, Y] into M intervals.

    Either ``gamma`` is given explicitly or it is derived from ``s`` via
    :func:`grading_exponent`.
    """
    if M < 1:
        raise ValueError(f"need at least one interval, got M={M}")
    if not Y > 0.0:
        raise ValueError(f"truncation height must be positive, got {Y}")
    if gamma is None:
        if s is None:
            raise ValueError("either s or gamma is required")
        gamma = grading_exponent(s, gamma_factor)
    elif gamma < 1.0:
        raise ValueError(f"grading exponent must be >= 1, got {gamma}")
    k = np.arange(M + 1, dtype=float)
    points = (k / M) ** gamma * Y
    points[0] = 0.0
    points[-1] = Y
    return GradedPartition(M, float(gamma), float(Y), points)


def choose_truncation(M: int, lambda_1: float, c0: float = 1.0) -> float:
    """Truncation height ``Y = (4/sqrt(lambda_1)) (1.5 ln M + ln c0)``, at least 1.

    Makes ``exp(-sqrt(lambda_1) Y / 4) <= M^-1.5 / c0``.
    """
    if M < 2:
        raise ValueError(f"need M >= 2, got {M}")
    if not lambda_1 > 0.0:
        raise ValueError(f"lambda_1 must be positive, got {lambda_1}")
    Y = 4.0 / math.sqrt(lambda_1) * (1.5 * math.log(M) + math.log(c0))
    return max(Y, 1.0)


@dataclass
class CylinderMesh:
    """Tensor product of a base triangulation and a partition of [0, Y].

    Free DOFs are (interior base vertex, layer) with layers 0..M-1, numbered
    ``layer * n_interior + interior_position``; the trace DOFs are therefore
    the contiguous block ``[0, n_interior)``.
    """

    base: BaseMesh
    partition: GradedPartition
    dof_map: np.ndarray
    dirichlet_mask: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.base.interior)

    @property
    def M(self) -> int:
        return self.partition.M

    @property
    def n_dofs(self) -> int:
        """Number of free DOFs."""
        return self.n_interior * self.M

    @property
    def n_dofs_total(self) -> int:
        """All vertices of T_Y, Dirichlet ones included."""
        return self.base.n_vertices * (self.M + 1)

    @property
    def n_prisms(self) -> int:
        return self.base.n_triangles * self.M

    @property
    def prisms(self) -> np.ndarray:
        """(triangle, interval) index pairs."""
        t, k = np.meshgrid(np.arange(self.base.n_triangles), np.arange(self.M), indexing="ij")
        return np.column_stack([t.ravel(), k.ravel()])

    @property
    def trace_dofs(self) -> np.ndarray:
        return np.arange(self.n_interior)

    def layer(self, values, k):
        """Nodal values on layer k over all base vertices (zero at Dirichlet nodes)."""
        out = np.zeros(self.base.n_vertices)
        if k < self.M:
            n = self.n_interior
            out[self.base.interior] = values[k * n:(k + 1) * n]
        return out


def tensor_cylinder(base: BaseMesh, part: GradedPartition) -> CylinderMesh:
    nv = base.n_vertices
    M = part.M
    n_int = len(base.interior)
    dof_map = -np.ones((nv, M + 1), dtype=np.int64)
    for k in range(M):
        dof_map[base.interior, k] = k * n_int + np.arange(n_int)
    return CylinderMesh(base, part, dof_map, dof_map < 0)


def write_mesh(mesh: BaseMesh, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.node`` and ``<prefix>.ele`` plain-text files.

    Node lines: ``index x y boundary``; element lines: ``index v0 v1 v2``.
    """
    prefix = Path(prefix)
    node_path = prefix.with_name(prefix.name + ".node")
    ele_path = prefix.with_name(prefix.name + ".ele")
    with open(node_path, "w") as fh:
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {x:.17g} {y:.17g} {int(mesh.boundary[i])}\n")
    with open(ele_path, "w") as fh:
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i} {a} {b} {c}\n")
    return node_path, ele_path


def read_mesh(prefix) -> BaseMesh:
    prefix = Path(prefix)
    nodes = np.loadtxt(prefix.with_name(prefix.name + ".node"), ndmin=2)
    eles = np.loadtxt(prefix.with_name(prefix.name + ".ele"), dtype=np.int64, ndmin=2)
    return BaseMesh(nodes[:, 1:3], eles[:, 1:4], nodes[:, 3].astype(bool), domain_tag="imported")
