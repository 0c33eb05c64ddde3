import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parabolic_apost.fespace import (DiffusionMatrix, DofVector, FeSpace, SolverError, SpdSolver,
                                     assemble_mass, assemble_stiffness, cross_mass,
                                     discrete_elliptic_apply, element_gradients, l2_project,
                                     l2_project_full, transfer)
from parabolic_apost.mesh import TriangleMesh, uniform_square_mesh
from parabolic_apost.quadrature import quadrature_points, triangle_rule

ANISO = DiffusionMatrix(((2.0, 0.5), (0.5, 1.0)))


def single_triangle(p):
    return FeSpace(TriangleMesh(np.array(p, dtype=float), np.array([[0, 1, 2]])))


def basis_at_quadrature(space, degree):
    """Values of every vertex basis function at the quadrature points, (V, T, q)."""
    bary, _ = triangle_rule(degree)
    m = space.mesh
    out = np.zeros((m.num_vertices, m.num_triangles, len(bary)))
    for k in range(3):
        out[m.triangles[:, k], np.arange(m.num_triangles), :] += bary[:, k]
    return out


@pytest.mark.oracle
def test_local_mass_single_triangle():
    space = single_triangle([[0.3, -0.2], [2.0, 0.1], [0.5, 1.7]])
    S = space.mesh.areas[0]
    M = assemble_mass(space, keep_boundary=True).toarray()
    # oracle: integrate barycentric products with a degree-2 rule
    bary, w = triangle_rule(2)
    oracle = S * np.einsum("q,qi,qj->ij", w, bary, bary)
    assert np.allclose(M, oracle, rtol=1e-14, atol=0)
    assert np.allclose(M, S / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]), rtol=1e-14)


@pytest.mark.oracle
def test_local_stiffness_unit_right_triangle():
    space = single_triangle([[0, 0], [1, 0], [0, 1]])
    K = assemble_stiffness(space, DiffusionMatrix(), keep_boundary=True).toarray()
    hand = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    assert np.allclose(K, hand, atol=1e-15)


@pytest.mark.parametrize("level", [1, 3])
def test_mass_row_sums_and_total_area(level):
    space = FeSpace(uniform_square_mesh(level))
    M = assemble_mass(space, keep_boundary=True)
    one = np.ones(space.mesh.num_vertices)
    assert one @ M @ one == pytest.approx(4.0, rel=1e-14)
    # row sums equal the integral of each basis function, |supp|/3
    supp = np.bincount(space.mesh.triangles.ravel(), weights=np.repeat(space.mesh.areas, 3))
    assert np.allclose(M @ one, supp / 3.0, rtol=1e-14)


def test_stiffness_kills_constants_and_is_symmetric():
    space = FeSpace(uniform_square_mesh(3))
    K = assemble_stiffness(space, ANISO, keep_boundary=True)
    assert np.abs(K @ np.ones(K.shape[0])).max() <= 1e-12
    assert (K - K.T).count_nonzero() == 0
    M = space.mass()
    assert (M - M.T).count_nonzero() == 0


def test_dof_count_and_dof_map():
    for level in range(4):
        space = FeSpace(uniform_square_mesh(level))
        n = 2**level + 1
        assert space.ndofs == max(n - 2, 0) ** 2
        # shared vertices get the same global index from every triangle
        m = space.mesh
        for t in range(m.num_triangles):
            assert np.array_equal(space.dof_map[t], space.vertex_to_dof[m.triangles[t]])


def test_higher_degree_not_available():
    with pytest.raises(NotImplementedError):
        FeSpace(uniform_square_mesh(1), degree=2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_positive_definite_and_coercive(seed):
    space = FeSpace(uniform_square_mesh(3))
    v = np.random.default_rng(seed).standard_normal(space.ndofs)
    K = space.stiffness(ANISO)
    M = space.mass()
    assert v @ (M @ v) > 0
    # coercivity against the H1 seminorm computed from elementwise gradients
    g = element_gradients(space.mesh, space.to_full(v))
    semi2 = float(np.sum(np.sum(g * g, axis=1) * space.mesh.areas))
    assert v @ (K @ v) >= ANISO.alpha * semi2 * (1 - 1e-12)
    assert v @ (K @ v) <= ANISO.beta * semi2 * (1 + 1e-12)


def test_diffusion_matrix_constants():
    ev = np.linalg.eigvalsh(ANISO.matrix)
    assert ANISO.alpha == pytest.approx(ev[0]) and ANISO.beta == pytest.approx(ev[1])
    x = np.random.default_rng(0).standard_normal((100, 2))
    quad = np.einsum("id,de,ie->i", x, ANISO.matrix, x)
    assert np.all(quad >= ANISO.alpha * np.sum(x * x, axis=1) * (1 - 1e-14))
    with pytest.raises(ValueError):
        DiffusionMatrix(((1.0, 0.0), (0.0, -1.0)))
    with pytest.raises(ValueError):
        DiffusionMatrix(((1.0, 0.2), (0.0, 1.0)))


@pytest.mark.oracle
def test_galerkin_consistency_level3():
    space = FeSpace(uniform_square_mesh(3))
    v = np.random.default_rng(7).standard_normal(space.ndofs)
    for diff in (DiffusionMatrix(), ANISO):
        Av = discrete_elliptic_apply(v, space, diff).coefficients
        Kv = space.stiffness(diff) @ v
        assert np.abs(space.mass() @ Av - Kv).max() <= 1e-10 * np.abs(Kv).max()


def test_discrete_elliptic_apply_zero():
    space = FeSpace(uniform_square_mesh(2))
    assert not np.any(discrete_elliptic_apply(np.zeros(space.ndofs), space, ANISO).coefficients)


@pytest.mark.oracle
def test_projection_of_x_reproduces_nodal_values():
    space = FeSpace(uniform_square_mesh(2))
    P = l2_project_full(lambda x, y: x, space)
    assert np.allclose(P, space.mesh.vertices[:, 0], atol=1e-12)
    # oracle: (P - x, phi) = 0 for every basis function by direct quadrature
    deg = 8
    pts, wts = quadrature_points(space.mesh, deg)
    bary, _ = triangle_rule(deg)
    Pq = P[space.mesh.triangles] @ bary.T
    resid = (Pq - pts[..., 0]) * wts
    phi = basis_at_quadrature(space, deg)
    assert np.abs(np.einsum("vtq,tq->v", phi, resid)).max() <= 1e-14


def test_projection_of_one_with_boundary_retained():
    space = FeSpace(uniform_square_mesh(3))
    assert np.allclose(l2_project_full(lambda x, y: np.ones_like(x), space), 1.0, atol=1e-12)


def test_projection_orthogonality_dirichlet_space():
    space = FeSpace(uniform_square_mesh(3))
    f = lambda x, y: np.exp(x) * np.cos(2 * y)  # noqa: E731
    P = l2_project(f, space, degree=12)
    pts, wts = quadrature_points(space.mesh, 12)
    resid = (space.values_at(P.coefficients, 12) - f(pts[..., 0], pts[..., 1])) * wts
    phi = basis_at_quadrature(space, 12)[space.free]
    scale = np.abs(np.einsum("vtq,tq->v", phi, np.abs(f(pts[..., 0], pts[..., 1])) * wts)).max()
    assert np.abs(np.einsum("vtq,tq->v", phi, resid)).max() <= 1e-10 * scale


def test_projection_idempotent_and_nested_transfer():
    coarse, fine = FeSpace(uniform_square_mesh(2)), FeSpace(uniform_square_mesh(4))
    v = DofVector(coarse, np.random.default_rng(1).standard_normal(coarse.ndofs))
    assert np.allclose(l2_project(v, coarse).coefficients, v.coefficients, atol=1e-12)
    up = transfer(v.coefficients, coarse, fine)
    back = transfer(up, fine, coarse)
    assert np.allclose(back, v.coefficients, atol=1e-11)


def test_cross_mass_is_exact_pairing():
    coarse, fine = FeSpace(uniform_square_mesh(1)), FeSpace(uniform_square_mesh(3))
    v = np.random.default_rng(2).standard_normal(coarse.ndofs)
    # pairing of the coarse function with every fine basis function, by quadrature
    deg = 4
    pts, wts = quadrature_points(fine.mesh, deg)
    from parabolic_apost.mesh import ancestor_map
    anc = ancestor_map(fine.mesh, coarse.mesh)
    tri = coarse.mesh.triangles[anc]
    a, b, c = (coarse.mesh.vertices[tri[:, k]] for k in range(3))
    T = np.stack([b - a, c - a], axis=-1)[:, None]
    lam = np.linalg.solve(T, (pts - a[:, None])[..., None])[..., 0]
    full = coarse.to_full(v)[tri]
    uq = full[:, None, 0] * (1 - lam.sum(-1)) + full[:, None, 1] * lam[..., 0] + \
        full[:, None, 2] * lam[..., 1]
    phi = basis_at_quadrature(fine, deg)[fine.free]
    oracle = np.einsum("vtq,tq->v", phi, uq * wts)
    assert np.allclose(cross_mass(fine, coarse) @ v, oracle, atol=1e-14)
    # and the transpose direction
    w = np.random.default_rng(3).standard_normal(fine.ndofs)
    assert w @ (cross_mass(fine, coarse) @ v) == pytest.approx(v @ (cross_mass(coarse, fine) @ w))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solver_backends_agree_and_failure_is_reported():
    space = FeSpace(uniform_square_mesh(3))
    A = (space.mass() + space.stiffness(DiffusionMatrix())).tocsr()
    rhs = np.random.default_rng(5).standard_normal(space.ndofs)
    x_cg = SpdSolver(A, 1e-12, "cg").solve(rhs)
    x_lu = SpdSolver(A, 1e-12, "direct").solve(rhs)
    assert np.allclose(x_cg, x_lu, rtol=1e-9, atol=1e-12)
    # singular matrix with a right-hand side outside its range
    bad = SpdSolver(np.ones((3, 3)), 1e-12, "cg")
    rhs = np.array([1.0, -1.0, 0.5])
    with pytest.raises(SolverError) as info:
        bad.solve(rhs)
    assert info.value.residual is not None
