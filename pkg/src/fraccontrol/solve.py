"""Linear solves on the cylinder, traces, and error norms."""

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    _assemble_2d,
    assemble_load,
    assemble_stiffness,
    full_mass,
    interval_matrices,
    p1_local_matrices,
)
from .mesh import BaseMesh, CylinderMesh
from .quadrature import sliver_rule, triangle_rule
from .spectral import SpectralCoefficients

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when an iterative solve stalls; carries the residual history."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass
class FeCoefficients:
    """Values of a function in V(T_Y) at the free DOFs; Dirichlet DOFs are zero."""

    values: np.ndarray
    mesh: CylinderMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_dofs,):
            raise ValueError(f"expected {self.mesh.n_dofs} values, got {self.values.shape}")

    def profile(self, vertex):
        """Nodal values above base vertex ``vertex`` on all M+1 layers."""
        j = self.mesh.base.interior_index[vertex]
        out = np.zeros(self.mesh.M + 1)
        if j >= 0:
            out[:-1] = self.values.reshape(self.mesh.M, -1)[:, j]
        return out


@dataclass
class TraceCoefficients:
    """Nodal values of a trace function at the interior base vertices."""

    values: np.ndarray
    base: BaseMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.base.interior),):
            raise ValueError(f"expected {len(self.base.interior)} values, got {self.values.shape}")

    def nodal(self):
        """Values at all base vertices (zero on the boundary)."""
        out = np.zeros(self.base.n_vertices)
        out[self.base.interior] = self.values
        return out


def solve_spd(matrix, rhs, rel_tol=1e-10, max_iter=None, preconditioner="jacobi", x0=None):
    """Preconditioned conjugate gradients.

    ``preconditioner`` is ``"jacobi"``, ``"ilu"`` (incomplete LU used as an
    approximate inverse) or ``None``.  Stops when ``||b - Ax|| <= rel_tol ||b||``.
    """
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if preconditioner == "jacobi":
        dinv = 1.0 / A.diagonal()

        def apply_prec(r):
            return dinv * r
    elif preconditioner == "ilu":
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-4, fill_factor=10)
        apply_prec = ilu.solve
    elif preconditioner is None:
        def apply_prec(r):
            return r
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = apply_prec(r)
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(max_iter):
        if history[-1] <= rel_tol:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise SolverError("matrix is not positive definite along a search direction", history)
        step = rz / pAp
        x += step * p
        r -= step * Ap
        history.append(np.linalg.norm(r) / bnorm)
        z = apply_prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if history[-1] <= rel_tol:
        return x
    raise SolverError(f"CG did not reach rel_tol={rel_tol} in {max_iter} iterations "
                      f"(residual {history[-1]:.3e})", history)


class TensorSolver:
    """Direct solver for ``A = (My (x) Sx + Sy (x) Mx) / d_s`` on the free DOFs.

    The base pencil ``Sx q = mu Mx q`` is diagonalized once; each eigenmode
    then decouples into a tridiagonal SPD system ``mu My + Sy`` in ``y``,
    which is factored without pivoting.  The extremely graded ``y`` matrices
    are never diagonalized.
    """

    def __init__(self, mesh: CylinderMesh, params, coeff=None):
        base = mesh.base
        self.mesh = mesh
        self.d_s = params.d_s
        S, Mk = p1_local_matrices(base, coeff)
        inner = base.interior
        Sx = _assemble_2d(base, S)[inner][:, inner].toarray()
        Mx = _assemble_2d(base, Mk)[inner][:, inner].toarray()
        self.mu, self.Q = scipy.linalg.eigh(Sx, Mx)
        my, sy = interval_matrices(mesh.partition.points, params.alpha)
        M = mesh.M
        # free layers 0..M-1 of the (M+1)-point tridiagonals
        my_d = np.zeros(M + 1)
        sy_d = np.zeros(M + 1)
        my_d[:-1] += my[:, 0, 0]
        my_d[1:] += my[:, 1, 1]
        sy_d[:-1] += sy[:, 0, 0]
        sy_d[1:] += sy[:, 1, 1]
        mu = self.mu[:, None]
        diag = mu * my_d[None, :M] + sy_d[None, :M]
        off = mu * my[None, : M - 1, 0, 1] + sy[None, : M - 1, 0, 1]
        # LDL^T of each tridiagonal, batched over modes
        d = np.empty_like(diag)
        l = np.empty_like(off)
        d[:, 0] = diag[:, 0]
        for k in range(1, M):
            l[:, k - 1] = off[:, k - 1] / d[:, k - 1]
            d[:, k] = diag[:, k] - l[:, k - 1] * off[:, k - 1]
        self._d = d
        self._l = l

    def solve(self, rhs):
        M = self.mesh.M
        b = np.asarray(rhs, dtype=float).reshape(M, -1) @ self.Q
        x = b.T.copy()
        for k in range(1, M):
            x[:, k] -= self._l[:, k - 1] * x[:, k - 1]
        x /= self._d
        for k in range(M - 2, -1, -1):
            x[:, k] -= self._l[:, k] * x[:, k + 1]
        return (self.d_s * (x.T @ self.Q.T)).ravel()


class CylinderSolver:
    """State/adjoint solver bound to one cylinder mesh and parameter set.

    ``method`` is ``"tensor"`` (default, direct), ``"splu"`` (sparse LU) or
    ``"cg"`` (Jacobi PCG to ``rel_tol``).
    """

    def __init__(self, mesh: CylinderMesh, params, method="tensor", rel_tol=1e-10, coeff=None):
        self.mesh = mesh
        self.params = params
        self.method = method
        self.rel_tol = rel_tol
        self._matrix = None
        self._coeff = coeff
        if method == "tensor":
            self._tensor = TensorSolver(mesh, params, coeff)
        elif method == "splu":
            self._lu = spla.splu(self.matrix.tocsc())
        elif method != "cg":
            raise ValueError(f"unknown solver method {method!r}")

    @property
    def matrix(self):
        if self._matrix is None:
            self._matrix = assemble_stiffness(self.mesh, self.params, self._coeff)
        return self._matrix

    def solve(self, rhs):
        if self.method == "tensor":
            return self._tensor.solve(rhs)
        if self.method == "splu":
            return self._lu.solve(np.asarray(rhs, dtype=float))
        return solve_spd(self.matrix, rhs, self.rel_tol)

    def solve_trace_load(self, load):
        """Solve with a right-hand side supported on the trace DOFs (layer 0)."""
        rhs = np.zeros(self.mesh.n_dofs)
        rhs[: self.mesh.n_interior] = load
        return self.solve(rhs)


def _trace_load(Z, base):
    """``(Z, tr W)`` for interior basis functions; Z given on interior or all vertices."""
    M = full_mass(base)
    if isinstance(Z, TraceCoefficients):
        z = Z.nodal()
    else:
        z = np.asarray(Z, dtype=float)
        if z.shape == (len(base.interior),):
            full = np.zeros(base.n_vertices)
            full[base.interior] = z
            z = full
    return (M @ z)[base.interior]


def solve_state(Z, mesh: CylinderMesh, params, forcing=None, solver=None) -> FeCoefficients:
    """Galerkin state ``a_T(V, W) = (Z + f, tr W)``; ``forcing`` is an optional evaluator f."""
    solver = solver or CylinderSolver(mesh, params)
    load = _trace_load(Z, mesh.base)
    if forcing is not None:
        load = load + assemble_load(forcing, mesh.base)[mesh.base.interior]
    return FeCoefficients(solver.solve_trace_load(load), mesh)


def solve_adjoint(V: FeCoefficients, u_d, mesh: CylinderMesh, params, solver=None) -> FeCoefficients:
    """Adjoint ``a_T(P, W) = (tr V - u_d, tr W)``."""
    solver = solver or CylinderSolver(mesh, params)
    base = mesh.base
    load = _trace_load(trace(V), base) - assemble_load(u_d, base)[base.interior]
    return FeCoefficients(solver.solve_trace_load(load), mesh)


def trace(V: FeCoefficients) -> TraceCoefficients:
    return TraceCoefficients(V.values[: V.mesh.n_interior].copy(), V.mesh.base)


def _evaluate_p1(base, nodal, bary):
    """P1 function with given nodal values at barycentric points of every triangle."""
    return nodal[base.triangles] @ bary.T


def l2_error_vs_spectral(U, ref, subdivide=0) -> float:
    """``||U - ref||_{L2(Omega)}``; U is zero on any part of Omega not covered by the mesh.

    ``U`` is a :class:`TraceCoefficients` or a nodal array over all base
    vertices paired with ``base`` via ``(base, nodal)``; ``ref`` is a
    :class:`SpectralCoefficients` or an evaluator ``ref(x1, x2)``.
    """
    if isinstance(U, TraceCoefficients):
        base, nodal = U.base, U.nodal()
    else:
        base, nodal = U
    evaluate = ref.evaluate if isinstance(ref, SpectralCoefficients) else ref
    pts, wts, bary = triangle_rule(base, subdivide)
    diff = _evaluate_p1(base, nodal, bary) - np.asarray(evaluate(pts[..., 0], pts[..., 1]))
    total = float(np.sum(wts * diff**2))
    spts, swts = sliver_rule(base)
    if len(swts):
        total += float(np.sum(swts * np.asarray(evaluate(spts[:, 0], spts[:, 1])) ** 2))
    return float(np.sqrt(total))


def energy_norm(V: FeCoefficients, params=None, matrix=None) -> float:
    """``a_T(V, V)^(1/2)``."""
    if matrix is None:
        matrix = assemble_stiffness(V.mesh, params)
    return float(np.sqrt(max(V.values @ (matrix @ V.values), 0.0)))


def prolongate(V: FeCoefficients, fine: CylinderMesh, coarse_to_fine_y=None) -> FeCoefficients:
    """Nodal interpolation of a coarse solution on a finer cylinder.

    The base meshes must come from :func:`~fraccontrol.mesh.refine_uniform`
    (vertex numbering extends the coarse one by edge midpoints) and the fine
    partition must contain the coarse points.
    """
    coarse = V.mesh
    cb, fb = coarse.base, fine.base
    cy = coarse.partition.points
    fy = fine.partition.points
    # y-interpolation of every coarse vertex column
    cols = np.zeros((cb.n_vertices, coarse.M + 1))
    for k in range(coarse.M):
        cols[:, k] = coarse.layer(V.values, k)
    vals_y = np.stack([np.interp(fy, cy, cols[v]) for v in range(cb.n_vertices)])
    # base interpolation: vertices first, then edge midpoints
    edges = cb.edges
    fine_vals = np.zeros((fb.n_vertices, fine.M + 1))
    fine_vals[: cb.n_vertices] = vals_y
    fine_vals[cb.n_vertices:] = 0.5 * (vals_y[edges[:, 0]] + vals_y[edges[:, 1]])
    out = np.zeros(fine.n_dofs)
    mask = fine.dof_map >= 0
    out[fine.dof_map[mask]] = fine_vals[mask]
    return FeCoefficients(out, fine)
