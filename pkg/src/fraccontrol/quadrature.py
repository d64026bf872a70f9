"""Quadrature on triangles and on the slivers between an inscribed polygon and its curve."""

import numpy as np

# Symmetric 6-point rule, exact for polynomials of degree 4 (Dunavant).
# Barycentric points and weights relative to the triangle area.
_B1, _W1 = 0.445948490915964886, 0.223381589678011466
_B2, _W2 = 0.091576213509770743, 0.109951743655321868
_A1, _A2 = 1.0 - 2.0 * _B1, 1.0 - 2.0 * _B2
DEGREE4_POINTS = np.array([
    [_A1, _B1, _B1],
    [_B1, _A1, _B1],
    [_B1, _B1, _A1],
    [_A2, _B2, _B2],
    [_B2, _A2, _B2],
    [_B2, _B2, _A2],
])
DEGREE4_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


def _subdivided_rule(level):
    """Degree-4 rule applied on the 4**level congruent subtriangles of the reference."""
    if level == 0:
        return DEGREE4_POINTS, DEGREE4_WEIGHTS
    corners = [np.eye(3)]
    for _ in range(level):
        refined = []
        for c in corners:
            m01, m12, m20 = 0.5 * (c[0] + c[1]), 0.5 * (c[1] + c[2]), 0.5 * (c[2] + c[0])
            refined += [np.array([c[0], m01, m20]), np.array([m01, c[1], m12]),
                        np.array([m20, m12, c[2]]), np.array([m01, m12, m20])]
        corners = refined
    pts = np.concatenate([DEGREE4_POINTS @ c for c in corners])
    wts = np.tile(DEGREE4_WEIGHTS, len(corners)) / len(corners)
    return pts, wts


def triangle_rule(mesh, subdivide=0):
    """Physical points ``(nt, q, 2)``, weights ``(nt, q)`` and barycentrics ``(q, 3)``."""
    bary, w = _subdivided_rule(subdivide)
    corners = mesh.vertices[mesh.triangles]
    points = np.einsum("qi,tij->tqj", bary, corners)
    weights = mesh.areas[:, None] * w[None, :]
    return points, weights, bary


def boundary_edges(mesh):
    """Edges of the mesh that belong to exactly one triangle, as vertex pairs."""
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq[counts == 1]


def sliver_rule(mesh, order=8):
    """Points and weights covering the domain minus the triangulated polygon.

    Each boundary chord and the arc of the curve above it bound a sliver,
    parametrized by ``P(t, r) = L(t) + r (C(t) - L(t))`` with ``L`` the chord
    and ``C`` the curve.  Returns empty arrays when the mesh has no curve.
    """
    if mesh.curve is None or mesh.boundary_param is None:
        return np.zeros((0, 2)), np.zeros(0)
    edges = boundary_edges(mesh)
    t0 = mesh.boundary_param[edges[:, 0]]
    t1 = mesh.boundary_param[edges[:, 1]]
    gap = np.mod(t1 - t0, 1.0)
    flip = gap > 0.5
    start = np.where(flip, t1, t0)
    width = np.where(flip, 1.0 - gap, gap)
    xg, wg = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    pts, wts = [], []
    for ts, dt in zip(start, width):
        tt = ts + dt * u
        c = mesh.curve(tt)
        p0 = mesh.curve(ts)
        p1 = mesh.curve(ts + dt)
        chord = p0[None, :] + u[:, None] * (p1 - p0)[None, :]
        # d/dt of curve by central differences in the parameter
        step = 1e-6 * dt
        dc = (mesh.curve(tt + step) - mesh.curve(tt - step)) / (2 * step)
        dl = (p1 - p0) / dt
        diff = c - chord
        for r, wr in zip(u, wu):
            P = chord + r * diff
            dPdt = dl + r * (dc - dl)
            jac = np.abs(dPdt[:, 0] * diff[:, 1] - dPdt[:, 1] * diff[:, 0])
            pts.append(P)
            wts.append(wr * wu * dt * jac)
    return np.concatenate(pts), np.concatenate(wts)
