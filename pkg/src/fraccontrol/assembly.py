"""Exact assembly of the weighted stiffness matrix and trace mass/load terms.

The weight ``y^alpha`` is integrated in closed form on each interval of the
graded partition, so the only quadrature in this module is the degree-4 rule
used for trace loads.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .quadrature import triangle_rule


@dataclass(frozen=True)
class WeightedIntervalMatrices:
    y_lo: float
    y_hi: float
    alpha: float
    mass2x2: np.ndarray
    stiff2x2: np.ndarray


_FAR_RATIO = 4.0
_x16, _w16 = np.polynomial.legendre.leggauss(16)
_GAUSS16 = (0.5 * (_x16 + 1.0), 0.5 * _w16)  # on [0, 1]


def _check_alpha(alpha):
    if not -1.0 < alpha < 1.0:
        raise ValueError(f"weight exponent alpha must lie in (-1, 1), got {alpha}")


def interval_matrices(points, alpha):
    """Weighted P1 mass and stiffness matrices ``(M, 2, 2)`` for every interval.

    With ``m_j = int y^(alpha+j) dy`` over the interval, the hat functions
    ``l0 = (y_hi - y)/h`` and ``l1 = (y - y_lo)/h`` give polynomial
    combinations of ``m_0, m_1, m_2``.  That closed form cancels badly on
    short intervals far from y = 0; there (``y_lo >= 4h``) the weight is
    analytic well beyond the interval and a 16-point Gauss rule is exact to
    rounding.
    """
    _check_alpha(alpha)
    points = np.asarray(points, dtype=float)
    lo, hi = points[:-1], points[1:]
    if np.any(lo < 0.0) or np.any(hi <= lo):
        raise ValueError("interval endpoints must satisfy 0 <= y_lo < y_hi")
    h = hi - lo
    mass = np.empty((len(h), 2, 2))
    m0 = np.empty(len(h))
    far = lo >= _FAR_RATIO * h
    near = ~far
    if np.any(near):
        a, b, hn = lo[near], hi[near], h[near]
        m = [(b ** (alpha + j + 1) - a ** (alpha + j + 1)) / (alpha + j + 1) for j in range(3)]
        h2 = hn * hn
        mass[near, 0, 0] = (b * b * m[0] - 2.0 * b * m[1] + m[2]) / h2
        mass[near, 1, 1] = (a * a * m[0] - 2.0 * a * m[1] + m[2]) / h2
        mass[near, 0, 1] = (-b * a * m[0] + (b + a) * m[1] - m[2]) / h2
        m0[near] = m[0]
    if np.any(far):
        t, w = _GAUSS16
        hf = h[far]
        wy = hf[:, None] * w[None, :] * (lo[far][:, None] + hf[:, None] * t[None, :]) ** alpha
        mass[far, 0, 0] = wy @ ((1.0 - t) ** 2)
        mass[far, 1, 1] = wy @ (t**2)
        mass[far, 0, 1] = wy @ (t * (1.0 - t))
        m0[far] = wy.sum(axis=1)
    mass[:, 1, 0] = mass[:, 0, 1]
    stiff = (m0 / (h * h))[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return mass, stiff


def weighted_y_integrals(y_lo, y_hi, alpha) -> WeightedIntervalMatrices:
    mass, stiff = interval_matrices([y_lo, y_hi], alpha)
    return WeightedIntervalMatrices(float(y_lo), float(y_hi), float(alpha), mass[0], stiff[0])


def p1_local_matrices(base, coeff=None):
    """Element stiffness and mass matrices ``(nt, 3, 3)`` of P1 on each triangle.

    ``coeff`` is an optional ``(nt, 2, 2)`` array of constant SPD diffusion
    matrices; the identity is used when omitted.
    """
    p = base.vertices[base.triangles]
    area = base.areas
    # gradients of barycentric coordinates: rot(p_{i+2} - p_{i+1}) / (2|K|)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[:, :, 1], e[:, :, 0]], axis=2) / (2.0 * area)[:, None, None]
    if coeff is None:
        S = np.einsum("tik,tjk->tij", grads, grads)
    else:
        S = np.einsum("tik,tkl,tjl->tij", grads, np.asarray(coeff), grads)
    S *= area[:, None, None]
    Mref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    Mk = area[:, None, None] * Mref[None]
    return S, Mk


def _assemble_2d(base, local):
    t = base.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = base.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh, params, coeff=None, layers_per_chunk=16):
    """Global matrix of ``(1/d_s) int y^alpha A grad V . grad W`` over free DOFs.

    Each prism ``K x I`` contributes ``S_K (x) mass(I) + M_K (x) stiff(I)``;
    Dirichlet rows and columns are dropped.
    """
    if mesh.n_dofs == 0:
        raise ValueError("the cylinder mesh has no free degrees of freedom")
    base = mesh.base
    S, Mk = p1_local_matrices(base, coeff)
    my, sy = interval_matrices(mesh.partition.points, params.alpha)
    t = base.triangles
    nt = len(t)
    # local ordering (vertex i, end p) -> 2*i + p
    local_i = np.repeat(np.arange(3), 2)
    local_p = np.tile(np.arange(2), 3)
    n = mesh.n_dofs
    total = sp.csr_matrix((n, n))
    M = mesh.M
    for k0 in range(0, M, layers_per_chunk):
        ks = np.arange(k0, min(M, k0 + layers_per_chunk))
        # (nk, nt, 6, 6)
        vals = (S[None, :, local_i[:, None], local_i[None, :]] * my[ks][:, None, local_p[:, None], local_p[None, :]]
                + Mk[None, :, local_i[:, None], local_i[None, :]] * sy[ks][:, None, local_p[:, None], local_p[None, :]])
        dofs = mesh.dof_map[t[None, :, local_i], ks[:, None, None] + local_p[None, None, :]]
        rows = np.broadcast_to(dofs[:, :, :, None], vals.shape).ravel()
        cols = np.broadcast_to(dofs[:, :, None, :], vals.shape).ravel()
        keep = (rows >= 0) & (cols >= 0)
        total = total + sp.csr_matrix((vals.ravel()[keep], (rows[keep], cols[keep])), shape=(n, n))
    total = total / params.d_s
    total.sum_duplicates()
    return total.tocsr()


def assemble_stiffness_tensor(mesh, params):
    """Same matrix as :func:`assemble_stiffness` built from Kronecker products.

    Valid for the identity diffusion matrix only; used as an independent
    check and as a faster path.
    """
    base = mesh.base
    S, Mk = p1_local_matrices(base)
    Sx = _assemble_2d(base, S)[base.interior][:, base.interior]
    Mx = _assemble_2d(base, Mk)[base.interior][:, base.interior]
    my, sy = interval_matrices(mesh.partition.points, params.alpha)
    My = _tridiag(my)[:-1, :-1]
    Sy = _tridiag(sy)[:-1, :-1]
    # free DOF index = layer * n_int + vertex  ->  kron(y-matrix, x-matrix)
    return ((sp.kron(My, Sx) + sp.kron(Sy, Mx)) / params.d_s).tocsr()


def _tridiag(local):
    M = len(local)
    diag = np.zeros(M + 1)
    diag[:-1] += local[:, 0, 0]
    diag[1:] += local[:, 1, 1]
    off = local[:, 0, 1]
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def full_mass(base, lumped=False):
    """P1 mass matrix over all base vertices."""
    _, Mk = p1_local_matrices(base)
    M = _assemble_2d(base, Mk)
    if lumped:
        return sp.diags(np.asarray(M.sum(axis=1)).ravel(), format="csr")
    return M


def assemble_trace_mass(base, lumped=False):
    """P1 mass matrix over the interior vertices; lumped uses the full row sums."""
    M = full_mass(base, lumped)[base.interior][:, base.interior]
    return M.tocsr()


def assemble_load(g, base, subdivide=0):
    """``(g, phi_i)`` for every base vertex with the degree-4 triangle rule."""
    pts, wts, bary = triangle_rule(base, subdivide)
    vals = np.asarray(g(pts[..., 0], pts[..., 1]), dtype=float) * wts
    local = np.einsum("tq,qi->ti", vals, bary)
    return np.bincount(base.triangles.ravel(), weights=local.ravel(), minlength=base.n_vertices)


def assemble_trace_load(g, base, subdivide=0):
    """``(g, tr W)`` for the trace basis functions (interior vertices)."""
    return assemble_load(g, base, subdivide)[base.interior]


def write_matrix_market(matrix, path, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, symmetry="general")
