"""Fully discrete control problem: reduced cost, adjoint gradient, projected BFGS.

Controls are either continuous piecewise linears on the base mesh (``p1``,
one value per base vertex) or piecewise constants (``p0``, one value per
triangle).  The optimizer works in the inner product given by a diagonal
metric (lumped mass for P1, element areas for P0); for a diagonal metric,
nodal clipping is the exact projection onto the box.  The cost itself always
uses the consistent mass.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_load, full_mass
from .mesh import CylinderMesh
from .quadrature import sliver_rule, triangle_rule
from .solve import CylinderSolver, FeCoefficients

log = logging.getLogger(__name__)


class LineSearchError(RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class P1Controls:
    """Continuous piecewise linears on the base mesh, zero outside the polygon."""

    kind = "p1"

    def __init__(self, base):
        self.base = base
        self.mass = full_mass(base).tocsr()
        self.metric = np.asarray(self.mass.sum(axis=1)).ravel()
        self.load_map = self.mass[base.interior]

    @property
    def size(self):
        return self.base.n_vertices

    def values_at(self, Z, bary):
        return Z[self.base.triangles] @ bary.T

    def cell_values(self, Z):
        return Z[self.base.triangles]


class P0Controls:
    """Piecewise constants, one value per triangle."""

    kind = "p0"

    def __init__(self, base):
        self.base = base
        self.metric = base.areas.copy()
        self.mass = sp.diags(self.metric, format="csr")
        n_int = len(base.interior)
        idx = base.interior_index[base.triangles]
        rows = idx.ravel()
        cols = np.repeat(np.arange(base.n_triangles), 3)
        vals = np.repeat(base.areas / 3.0, 3)
        keep = rows >= 0
        self.load_map = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_int, base.n_triangles))

    @property
    def size(self):
        return self.base.n_triangles

    def values_at(self, Z, bary):
        return np.repeat(Z[:, None], len(bary), axis=1)

    def cell_values(self, Z):
        return Z[:, None]


def make_control_space(base, scheme):
    if scheme == "p1":
        return P1Controls(base)
    if scheme == "p0":
        return P0Controls(base)
    raise ValueError(f"unknown control scheme {scheme!r}")


@dataclass
class Evaluation:
    Z: np.ndarray
    j: float
    V: np.ndarray
    P: np.ndarray
    grad: np.ndarray  # Euclidean derivative of j with respect to the control DOFs
    riesz: np.ndarray  # grad / metric


class ReducedProblem:
    """``j(Z) = 1/2 ||tr V(Z) - u_d||^2 + vartheta/2 ||Z||^2`` with ``a_T(V, W) = (Z + f, tr W)``."""

    def __init__(self, mesh: CylinderMesh, params, u_d, forcing=None, scheme="p1", solver=None):
        self.mesh = mesh
        self.params = params
        self.space = make_control_space(mesh.base, scheme)
        self.solver = solver or CylinderSolver(mesh, params)
        base = mesh.base
        inner = base.interior
        self.trace_mass = full_mass(base)[inner][:, inner].tocsr()
        self.b_d = assemble_load(u_d, base)[inner]
        self.b_f = np.zeros(len(inner)) if forcing is None else assemble_load(forcing, base)[inner]
        pts, wts, _ = triangle_rule(base)
        ud_sq = float(np.sum(wts * np.asarray(u_d(pts[..., 0], pts[..., 1])) ** 2))
        spts, swts = sliver_rule(base)
        if len(swts):
            ud_sq += float(np.sum(swts * np.asarray(u_d(spts[:, 0], spts[:, 1])) ** 2))
        self.ud_sq = ud_sq
        self.n_solves = 0

    @property
    def lower(self):
        return self.params.a_bound

    @property
    def upper(self):
        return self.params.b_bound

    def project(self, Z):
        return project_admissible(Z, self.lower, self.upper)

    def _solve(self, load):
        self.n_solves += 1
        return self.solver.solve_trace_load(load)

    def state(self, Z):
        return self._solve(self.space.load_map @ Z + self.b_f)

    def _trace(self, V):
        return V[: self.mesh.n_interior]

    def cost(self, Z, V=None):
        if V is None:
            V = self.state(Z)
        u = self._trace(V)
        tracking = 0.5 * (u @ (self.trace_mass @ u) - 2.0 * u @ self.b_d + self.ud_sq)
        return tracking + 0.5 * self.params.vartheta * Z @ (self.space.mass @ Z)

    def evaluate(self, Z) -> Evaluation:
        Z = np.asarray(Z, dtype=float)
        V = self.state(Z)
        u = self._trace(V)
        P = self._solve(self.trace_mass @ u - self.b_d)
        grad = self.space.load_map.T @ self._trace(P) + self.params.vartheta * (self.space.mass @ Z)
        return Evaluation(Z, self.cost(Z, V), V, P, grad, grad / self.space.metric)

    def increment(self, current: Evaluation, step):
        """Exact ``j(Z + step) - j(Z)``, free of the cancellation in ``j(Z + step) - j(Z)``."""
        dV = self._solve(self.space.load_map @ step)
        du = self._trace(dV)
        quad = du @ (self.trace_mass @ du) + self.params.vartheta * step @ (self.space.mass @ step)
        return float(current.grad @ step + 0.5 * quad)

    def gradient(self, Z):
        return self.evaluate(Z).riesz


def project_admissible(Z, lower, upper):
    """Nodal clipping into ``[lower, upper]``."""
    return np.minimum(upper, np.maximum(lower, Z))


def projected_gradient_norm(Z, riesz, lower, upper):
    return float(np.linalg.norm(Z - project_admissible(Z - riesz, lower, upper)))


@dataclass
class ControlIterate:
    Z: np.ndarray
    V: FeCoefficients
    P: FeCoefficients
    j_value: float
    pg_norm: float
    iterations: int
    converged: bool
    space: object
    history: list = field(default_factory=list)
    n_solves: int = 0


def optimize(problem: ReducedProblem, start=None, tol=1e-8, max_iter=500, memory=10,
             c1=1e-4, max_backtracks=40) -> ControlIterate:
    """Projected limited-memory BFGS for the box-constrained reduced problem.

    Each iteration splits the DOFs into an epsilon-active set (steepest
    descent there) and a free set (two-loop BFGS in the metric inner
    product), then backtracks along the projected path with an Armijo test
    on the exact cost increment.  The memory is cleared whenever the active
    set changes.  Stops once ``||Z - proj(Z - g)||_2 <= tol``.
    """
    lo, hi = problem.lower, problem.upper
    D = problem.space.metric
    n = problem.space.size
    Z = problem.project(np.zeros(n) if start is None else np.asarray(start, dtype=float))
    ev = problem.evaluate(Z)
    pairs = []
    prev_active = None
    history = [ev.j]
    eps0 = 1e-3 * (hi - lo)

    def dot(u, v):
        return float(np.sum(D * u * v))

    it = 0
    pg = projected_gradient_norm(Z, ev.riesz, lo, hi)
    while pg > tol and it < max_iter:
        g = ev.riesz
        eps = min(eps0, pg)
        active = ((Z - lo <= eps) & (g > 0)) | ((hi - Z <= eps) & (g < 0))
        if prev_active is None or np.any(active != prev_active):
            pairs.clear()
        prev_active = active
        free = ~active

        q = np.where(free, g, 0.0)
        alphas = []
        for s_i, y_i, rho in reversed(pairs):
            a_i = rho * dot(s_i, q)
            q = q - a_i * y_i
            alphas.append(a_i)
        if pairs:
            s_l, y_l, _ = pairs[-1]
            q *= dot(s_l, y_l) / dot(y_l, y_l)
        for (s_i, y_i, rho), a_i in zip(pairs, reversed(alphas)):
            b_i = rho * dot(y_i, q)
            q = q + (a_i - b_i) * s_i
        d = np.where(free, -q, -g)
        if dot(g, d) >= 0.0:
            pairs.clear()
            d = -g

        t = 1.0
        for _ in range(max_backtracks):
            Zt = project_admissible(Z + t * d, lo, hi)
            step = Zt - Z
            slope = float(ev.grad @ step)
            if slope < 0.0:
                delta = problem.increment(ev, step)
                if delta <= c1 * slope:
                    break
            t *= 0.5
        else:
            raise LineSearchError(f"no sufficient decrease after {max_backtracks} halvings "
                                  f"(pg={pg:.3e})", history)

        new = problem.evaluate(Zt)
        s_vec = np.where(free, new.Z - Z, 0.0)
        y_vec = np.where(free, new.riesz - g, 0.0)
        sy = dot(s_vec, y_vec)
        if sy > 1e-14 * np.sqrt(dot(s_vec, s_vec) * dot(y_vec, y_vec)) and sy > 0.0:
            pairs.append((s_vec, y_vec, 1.0 / sy))
            if len(pairs) > memory:
                pairs.pop(0)
        # cost tracked through the exact increment to avoid round-off drift
        new.j = ev.j + delta
        Z, ev = new.Z, new
        history.append(ev.j)
        it += 1
        pg = projected_gradient_norm(Z, ev.riesz, lo, hi)
        log.debug("iter %d j=%.12e pg=%.3e t=%g", it, ev.j, pg, t)

    mesh = problem.mesh
    return ControlIterate(
        Z=Z,
        V=FeCoefficients(ev.V, mesh),
        P=FeCoefficients(ev.P, mesh),
        j_value=problem.cost(Z, ev.V),
        pg_norm=pg,
        iterations=it,
        converged=pg <= tol,
        space=problem.space,
        history=history,
        n_solves=problem.n_solves,
    )


def reduced_cost(problem: ReducedProblem, Z) -> float:
    return problem.cost(np.asarray(Z, dtype=float))


def reduced_gradient(problem: ReducedProblem, Z) -> np.ndarray:
    """Riesz representative of ``j'(Z)`` in the metric inner product."""
    return problem.evaluate(Z).riesz


@dataclass
class CellPartition:
    active: np.ndarray
    inactive: np.ndarray
    kink: np.ndarray
    kink_measure: float


def classify_cells(space, Z, lower, upper, tol_active=1e-10) -> CellPartition:
    """Split the triangles into active, inactive and kink cells from the nodal values."""
    tol = tol_active * (upper - lower)
    vals = space.cell_values(np.asarray(Z, dtype=float))
    at_lo = vals <= lower + tol
    at_hi = vals >= upper - tol
    active = np.all(at_lo, axis=1) | np.all(at_hi, axis=1)
    inactive = np.all(~at_lo & ~at_hi, axis=1)
    kink = ~active & ~inactive
    areas = space.base.areas
    return CellPartition(
        active=np.flatnonzero(active),
        inactive=np.flatnonzero(inactive),
        kink=np.flatnonzero(kink),
        kink_measure=float(np.sum(areas[kink])),
    )


def solve_p0_scheme(params, mesh, u_d, tol=1e-8, forcing=None, solver=None, max_iter=500):
    problem = ReducedProblem(mesh, params, u_d, forcing=forcing, scheme="p0", solver=solver)
    return optimize(problem, tol=tol, max_iter=max_iter)


def control_l2_error(space, Z, z_ref, subdivide=0) -> float:
    """``||Z - z_ref||_{L2(Omega)}`` with Z extended by zero outside the mesh."""
    base = space.base
    pts, wts, bary = triangle_rule(base, subdivide)
    diff = space.values_at(np.asarray(Z, dtype=float), bary) - np.asarray(z_ref(pts[..., 0], pts[..., 1]))
    total = float(np.sum(wts * diff**2))
    spts, swts = sliver_rule(base)
    if len(swts):
        total += float(np.sum(swts * np.asarray(z_ref(spts[:, 0], spts[:, 1])) ** 2))
    return float(np.sqrt(total))


def sigma_exponent(s, theta=0.99):
    """Hoelder exponent entering the predicted control rate."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    if not theta < 1.0:
        raise ValueError(f"theta must be < 1, got {theta}")
    if s < 0.25:
        return 0.5
    if s < 0.5:
        return 2.0 * s
    if s == 0.5:
        return theta
    return 1.0


def predicted_rate(s, n=2, theta=0.99):
    """Predicted decay exponent of the control error in terms of #T_Y."""
    return (0.5 + sigma_exponent(s, theta)) / (n + 1)
