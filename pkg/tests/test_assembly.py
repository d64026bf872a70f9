import numpy as np
import pytest
import scipy.integrate
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from fraccontrol.assembly import (
    assemble_load,
    assemble_stiffness,
    assemble_stiffness_tensor,
    assemble_trace_load,
    assemble_trace_mass,
    full_mass,
    interval_matrices,
    p1_local_matrices,
    weighted_y_integrals,
    write_matrix_market,
)
from fraccontrol.mesh import BaseMesh, graded_partition, tensor_cylinder, triangulate_convex_domain, \
    uniform_square, unit_disk_curve
from fraccontrol.spectral import FracParams


def _weighted_quad(f, lo, hi, alpha):
    """``int_lo^hi y^alpha f(y) dy``; the endpoint singularity goes to the algebraic weight."""
    if lo == 0.0:
        return scipy.integrate.quad(f, lo, hi, weight="alg", wvar=(alpha, 0.0), epsabs=0, epsrel=1e-13)[0]
    return scipy.integrate.quad(lambda y: y**alpha * f(y), lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0]


def _quad_entries(lo, hi, alpha):
    h = hi - lo
    l = [lambda y: (hi - y) / h, lambda y: (y - lo) / h]
    dl = [-1.0 / h, 1.0 / h]
    mass = np.empty((2, 2))
    stiff = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            mass[i, j] = _weighted_quad(lambda y: l[i](y) * l[j](y), lo, hi, alpha)
            stiff[i, j] = dl[i] * dl[j] * _weighted_quad(lambda y: 1.0, lo, hi, alpha)
    return mass, stiff


@pytest.mark.parametrize("alpha", [-0.8, -0.2, 0.0, 0.4, 0.9])
@pytest.mark.parametrize("lo,hi", [(0.0, 0.01), (0.0, 1.0), (0.3, 0.35), (1.0, 4.0), (1e-6, 0.3), (40.0, 40.01)])
def test_interval_entries_match_adaptive_quadrature(alpha, lo, hi):
    w = weighted_y_integrals(lo, hi, alpha)
    mass, stiff = _quad_entries(lo, hi, alpha)
    scale = max(np.abs(mass).max(), 1e-300)
    np.testing.assert_allclose(w.mass2x2, mass, atol=1e-10 * scale, rtol=1e-10)
    np.testing.assert_allclose(w.stiff2x2, stiff, atol=1e-10 * np.abs(stiff).max(), rtol=1e-10)


def test_interval_example():
    w = weighted_y_integrals(0.0, 1.0, 0.5)
    assert w.mass2x2[1, 1] == pytest.approx(2 / 7, rel=1e-15)
    assert w.stiff2x2[0, 0] == pytest.approx(2 / 3, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(0.0, 5.0), st.floats(1e-2, 5.0), st.floats(0.1, 10.0))
def test_weight_scaling_identities(alpha, lo, length, c):
    pts = np.array([lo, lo + length])
    m1, s1 = interval_matrices(pts, alpha)
    m2, s2 = interval_matrices(c * pts, alpha)
    np.testing.assert_allclose(m2, c ** (1 + alpha) * m1, rtol=1e-12)
    np.testing.assert_allclose(s2, c ** (alpha - 1) * s1, rtol=1e-12)
    # mass rows sum to the weighted integral of each hat function; total = m_0
    m0 = ((lo + length) ** (1 + alpha) - lo ** (1 + alpha)) / (1 + alpha)
    assert m1.sum() == pytest.approx(m0, rel=1e-12)


def test_rejects_bad_alpha():
    with pytest.raises(ValueError):
        interval_matrices([0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        interval_matrices([0.5, 0.2], 0.0)


def _one_prism_mesh():
    # a triangle with one interior vertex so the prism has free DOFs
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.3, 0.25]])
    tris = np.array([[0, 1, 3], [1, 2, 3], [2, 0, 3]])
    base = BaseMesh(verts, tris, np.array([True, True, True, False]))
    return base


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_prism_local_matrix_against_quadrature(s):
    params = FracParams(s)
    alpha = params.alpha
    base = _one_prism_mesh()
    S, Mk = p1_local_matrices(base)
    lo, hi = 0.0, 0.7
    my, sy = interval_matrices([lo, hi], alpha)
    k = 1
    p = base.vertices[base.triangles[k]]
    T = np.column_stack([p[1] - p[0], p[2] - p[0]])
    area = 0.5 * abs(np.linalg.det(T))
    grads = np.linalg.solve(T.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])).T
    # 36 entries of the weighted prism stiffness by tensor quadrature
    for a in range(6):
        for b in range(6):
            ia, pa = divmod(a, 2)
            ib, pb = divmod(b, 2)

            def integrand(y):
                h = hi - lo
                la = [(hi - y) / h, (y - lo) / h]
                dla = [-1 / h, 1 / h]
                # x-integrals: grad.grad is constant, mass uses exact P1 formula
                mx = area * (2.0 if ia == ib else 1.0) / 12.0
                return grads[ia] @ grads[ib] * area * la[pa] * la[pb] + mx * dla[pa] * dla[pb]

            ref = _weighted_quad(integrand, lo, hi, alpha)
            got = S[k, ia, ib] * my[0, pa, pb] + Mk[k, ia, ib] * sy[0, pa, pb]
            assert got == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_local_x_matrices():
    base = uniform_square(1)
    S, Mk = p1_local_matrices(base)
    np.testing.assert_allclose(S.sum(axis=2), 0.0, atol=1e-15)
    np.testing.assert_allclose(Mk.sum(axis=(1, 2)), base.areas)
    # right-angle reference triangle
    ref = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert sorted(np.round(np.linalg.eigvalsh(S[0]), 12)) == pytest.approx(sorted(np.linalg.eigvalsh(ref)))


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_global_matrix_symmetric_and_matches_tensor_form(s):
    params = FracParams(s)
    base = triangulate_convex_domain(unit_disk_curve(), 0.4)
    mesh = tensor_cylinder(base, graded_partition(7, 2.0, s=s))
    A = assemble_stiffness(mesh, params, layers_per_chunk=3)
    B = assemble_stiffness_tensor(mesh, params)
    scale = abs(A).max()
    assert abs(A - A.T).max() <= 1e-13 * scale
    assert abs(A - B).max() <= 1e-13 * scale
    w = np.linalg.eigvalsh(A.toarray())
    assert w.min() > 0


def test_half_order_reduces_to_unweighted_assembly():
    params = FracParams(0.5)
    base = uniform_square(3)
    part = graded_partition(4, 1.5, gamma=2.0)
    mesh = tensor_cylinder(base, part)
    A = assemble_stiffness(mesh, params).toarray()
    S, Mk = p1_local_matrices(base)
    from fraccontrol.assembly import _assemble_2d

    Sx = _assemble_2d(base, S).toarray()[np.ix_(base.interior, base.interior)]
    Mx = _assemble_2d(base, Mk).toarray()[np.ix_(base.interior, base.interior)]
    h = part.lengths
    M = len(h)
    My = np.zeros((M + 1, M + 1))
    Sy = np.zeros((M + 1, M + 1))
    for k, hk in enumerate(h):
        My[k:k + 2, k:k + 2] += hk / 6 * np.array([[2, 1], [1, 2]])
        Sy[k:k + 2, k:k + 2] += 1 / hk * np.array([[1, -1], [-1, 1]])
    ref = np.kron(My[:-1, :-1], Sx) + np.kron(Sy[:-1, :-1], Mx)
    np.testing.assert_allclose(A, ref, atol=1e-14 * np.abs(ref).max())


def test_diffusion_coefficient_identity_default():
    params = FracParams(0.3)
    mesh = tensor_cylinder(uniform_square(3), graded_partition(3, 1.0, s=0.3))
    eye = np.tile(np.eye(2), (mesh.base.n_triangles, 1, 1))
    A = assemble_stiffness(mesh, params)
    B = assemble_stiffness(mesh, params, coeff=2 * eye)
    # doubling A in x only scales the S_x (x) M_y part
    Sx_part = A - assemble_stiffness(mesh, params, coeff=0 * eye)
    assert abs(B - A - Sx_part).max() < 1e-12


def test_trace_mass_and_load_examples():
    base = uniform_square(2)
    M = assemble_trace_mass(base)
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(1 / 8)
    # lumping uses the row sum over all vertices
    assert assemble_trace_mass(base, lumped=True)[0, 0] == pytest.approx(1 / 4)
    load = assemble_trace_load(lambda x, y: np.ones_like(x), base)
    assert load == pytest.approx([1 / 4])
    assert full_mass(base).sum() == pytest.approx(1.0)


def test_load_exact_for_quadratics():
    base = uniform_square(3)
    g = lambda x, y: x * x + 3 * x * y - y + 2
    # (g, 1) summed over all hats is the integral of g
    assert assemble_load(g, base).sum() == pytest.approx(1 / 3 + 3 / 4 - 1 / 2 + 2, rel=1e-14)
    # for a P1 function, load = full mass times nodal values
    lin = lambda x, y: 2 * x - y + 0.5
    nodal = lin(base.vertices[:, 0], base.vertices[:, 1])
    np.testing.assert_allclose(assemble_load(lin, base), full_mass(base) @ nodal, atol=1e-15)


def test_empty_free_set_rejected():
    mesh = tensor_cylinder(uniform_square(1), graded_partition(2, 1.0, s=0.5))
    with pytest.raises(ValueError):
        assemble_stiffness(mesh, FracParams(0.5))


def test_matrix_market_export(tmp_path):
    import scipy.io

    mesh = tensor_cylinder(uniform_square(3), graded_partition(3, 1.0, s=0.4))
    A = assemble_stiffness(mesh, FracParams(0.4))
    write_matrix_market(A, tmp_path / "A.mtx")
    back = sp.csr_matrix(scipy.io.mmread(str(tmp_path / "A.mtx")))
    assert abs(back - A).max() < 1e-15 * abs(A).max()
