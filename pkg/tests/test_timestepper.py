import numpy as np
import pytest

from parabolic_apost.bench import BenchmarkProblem, l2_error_at_node
from parabolic_apost.fespace import DiffusionMatrix, FeSpace, prolongation
from parabolic_apost.mesh import uniform_square_mesh
from parabolic_apost.quadrature import quadrature_points
from parabolic_apost.timestepper import (HeatProblem, SchemeConfig, TimePartition,
                                         averaged_discrete_derivative, backward_euler_step, fhat,
                                         initial_condition, pointwise_residual, run)


def hat(level):
    """Nodal basis function of the origin on the uniform mesh of ``level`` (>= 1)."""
    h = 2.0 ** (1 - level)
    return lambda x, y: np.maximum(0.0, 1.0 - np.maximum(np.maximum(np.abs(x), np.abs(y)),
                                                         np.abs(x - y)) / h)


def zero(x, y, t=0.0):
    return np.zeros_like(x)


def test_partition_validation():
    p = TimePartition.uniform(2.0, 8)
    assert p.N == 8 and p.T == 2.0 and np.allclose(p.tau, 0.25)
    assert p.truncated(3).T == pytest.approx(0.75)
    with pytest.raises(ValueError):
        TimePartition(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(ValueError):
        TimePartition(np.array([0.1, 1.0]))


def test_initial_condition_zero_and_fe_functions():
    space = FeSpace(uniform_square_mesh(3))
    for mode in ("interpolation", "l2_projection"):
        assert not np.any(initial_condition(zero, space, mode).coefficients)
        U0 = initial_condition(hat(3), space, mode).coefficients
        expected = np.zeros(space.ndofs)
        expected[space.vertex_to_dof[np.flatnonzero(np.all(space.mesh.vertices == 0, 1))]] = 1
        assert np.allclose(U0, expected, atol=1e-12)


@pytest.mark.oracle
def test_initial_interpolation_of_gaussian():
    space = FeSpace(uniform_square_mesh(3))
    U0 = initial_condition(lambda x, y: np.exp(-10 * (x * x + y * y)), space).coefficients
    for dof, vertex in enumerate(space.free):
        x, y = space.mesh.vertices[vertex]
        assert U0[dof] == np.exp(-10 * (x * x + y * y))


def test_step_with_zero_data():
    space = FeSpace(uniform_square_mesh(2))
    U = backward_euler_step(np.zeros(space.ndofs), space, space, 0.1, np.zeros(space.ndofs))
    assert not np.any(U.coefficients)


@pytest.mark.oracle
def test_steady_state_is_a_fixed_point():
    space = FeSpace(uniform_square_mesh(3))
    diff = DiffusionMatrix(((1.5, 0.2), (0.2, 0.7)))
    V = np.random.default_rng(4).standard_normal(space.ndofs)
    load = space.stiffness(diff) @ V
    U = backward_euler_step(V, space, space, 0.05, load, diff).coefficients
    assert np.abs(U - V).max() <= 1e-10 * np.abs(V).max()


@pytest.mark.oracle
def test_single_interior_dof_scalar_solve():
    # level 1 has a single free vertex (the origin); its hat covers 6 triangles of
    # area 1/2: m = 6 * (1/2) / 6 = 1/2 and, for the Laplacian on this criss-cross
    # free mesh, k = 4 (the five-point stencil)
    space = FeSpace(uniform_square_mesh(1))
    assert space.ndofs == 1
    m, k = 0.5, 4.0
    tau, b, u_prev = 0.3, 1.7, -0.4
    u = backward_euler_step(np.array([u_prev]), space, space, tau, np.array([b])).coefficients[0]
    hand = (b + m / tau * u_prev) / (m / tau + k)
    assert abs(u - hand) / abs(hand) <= 1e-12


def test_zero_data_gives_zero_trajectory():
    sol = run(HeatProblem(zero, zero), SchemeConfig(levels=2), TimePartition.uniform(1.0, 5))
    assert all(not np.any(U) for U in sol.U)


def test_static_mesh_projection_trivial():
    prob = BenchmarkProblem(1, 0.2)
    sol = run(prob.heat_problem(), SchemeConfig(levels=2), TimePartition.uniform(0.2, 4))
    for n in range(1, 5):
        assert np.array_equal(sol.prev_proj[n], sol.U[n - 1])
        expected = (sol.U[n] - sol.U[n - 1]) / 0.05
        assert np.allclose(averaged_discrete_derivative(sol, n).coefficients, expected,
                           rtol=1e-14, atol=1e-12)


def test_constant_solution_has_zero_derivative():
    space_level = 3
    u0 = hat(space_level)
    space = FeSpace(uniform_square_mesh(space_level))
    # f = A_h u0 keeps the discrete solution at u0
    u0_coeffs = initial_condition(u0, space).coefficients
    K = space.stiffness(DiffusionMatrix())
    Au0 = space.mass_solver().solve(K @ u0_coeffs)

    def f(x, y, t):
        # the P1 function A_h u0 evaluated pointwise
        return _p1_eval(space, Au0, x, y)

    sol = run(HeatProblem(f, u0), SchemeConfig(levels=space_level, quad_degree=2),
              TimePartition.uniform(1.0, 3))
    for n in range(1, 4):
        assert np.abs(averaged_discrete_derivative(sol, n).coefficients).max() <= 1e-9


def _p1_eval(space, coeffs, x, y):
    """A P1 function at the degree-2 quadrature points of its mesh (where loads are built)."""
    assert x.shape == quadrature_points(space.mesh, 2)[1].shape
    return space.values_at(coeffs, 2)


@pytest.mark.oracle
@pytest.mark.parametrize("levels", [[2, 2, 4, 4], [4, 4, 2, 2], [3, 1, 3, 2]])
def test_averaged_derivative_matches_plain_difference_weakly(levels):
    prob = BenchmarkProblem(1, 0.3)
    part = TimePartition.uniform(0.3, 3)
    sol = run(prob.heat_problem(), SchemeConfig(levels=levels), part)
    for n in range(1, 4):
        s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
        fine = s_now if s_now.mesh.level >= s_old.mesh.level else s_old
        # represent U^n, U^{n-1}, dbar U^n and the step-n basis on the finer mesh
        lift = lambda s, v: v if s is fine else prolongation(s, fine) @ v  # noqa: E731
        tau = part.step(n)
        dbar = lift(s_now, averaged_discrete_derivative(sol, n).coefficients)
        plain = (lift(s_now, sol.U[n]) - lift(s_old, sol.U[n - 1])) / tau
        basis = np.eye(s_now.ndofs) if s_now is fine else prolongation(s_now, fine).toarray()
        deg = 4
        pts, wts = quadrature_points(fine.mesh, deg)
        dq = fine.values_at(dbar - plain, deg)
        pair = np.array([np.sum(dq * fine.values_at(basis[:, i], deg) * wts)
                         for i in range(basis.shape[1])])
        scale = np.sqrt(np.sum(fine.values_at(plain, deg) ** 2 * wts))
        assert np.abs(pair).max() <= 1e-10 * scale


@pytest.mark.parametrize("levels", [3, [2, 3, 3, 4, 2, 2]])
@pytest.mark.parametrize("mode", ["endpoint", "time_average"])
def test_discrete_equation_and_pointwise_form(levels, mode):
    prob = BenchmarkProblem(2, 0.5)
    part = TimePartition.uniform(0.5, 5)
    cfg = SchemeConfig(rhs_mode=mode, levels=levels)
    sol = run(prob.heat_problem(), cfg, part)
    from parabolic_apost.fespace import cross_mass, load_vector

    for n in range(1, 6):
        space, prev = sol.spaces[n], sol.spaces[n - 1]
        tau = part.step(n)
        t1 = space.mass() @ sol.U[n] / tau - cross_mass(space, prev) @ sol.U[n - 1] / tau
        t2 = space.stiffness(cfg.diffusion) @ sol.U[n]
        t3 = load_vector(space, fhat(prob.f, part, n, mode), cfg.quad_degree)
        scale = max(np.abs(t1).max(), np.abs(t2).max(), np.abs(t3).max())
        assert np.abs(t1 + t2 - t3).max() <= 10 * cfg.tol * scale
        r, s = pointwise_residual(sol, n)
        assert r <= 100 * cfg.tol * s + 1e-10


def test_unconditional_stability_without_source():
    u0 = lambda x, y: np.exp(-5 * (x * x + y * y)) * (1 + x)  # noqa: E731
    sol = run(HeatProblem(zero, u0), SchemeConfig(levels=3), TimePartition.uniform(2.0, 40))
    space = sol.spaces[0]
    norms = [np.sqrt(U @ (space.mass() @ U)) for U in sol.U]
    assert all(b <= a * (1 + 1e-14) for a, b in zip(norms, norms[1:]))


def test_time_average_source():
    part = TimePartition.uniform(1.0, 4)
    f = lambda x, y, t: t**7 + 0 * x  # noqa: E731
    avg = fhat(f, part, 2, "time_average")(np.zeros(1), np.zeros(1))[0]
    assert avg == pytest.approx((0.5**8 - 0.25**8) / 8 / 0.25, rel=1e-14)
    assert fhat(f, part, 2, "endpoint")(np.zeros(1), np.zeros(1))[0] == 0.5**7


def test_level_schedule_validation():
    with pytest.raises(ValueError):
        SchemeConfig(levels=[1, 2]).level_schedule(3)
    with pytest.raises(ValueError):
        SchemeConfig(rhs_mode="midpoint")


@pytest.mark.oracle
def test_benchmark_final_error_decreases_from_level3_to_level4(study_k1):
    errs = {r.level: r.errors[-1] for r in study_k1.results}
    assert errs[4] < errs[3]
    # recompute the level-3 final error independently of the study tables
    r3 = next(r for r in study_k1.results if r.level == 3)
    prob = BenchmarkProblem(1, 1.0)
    sol = run(prob.heat_problem(), SchemeConfig(rhs_mode="time_average", levels=3), r3.partition)
    assert l2_error_at_node(sol, sol.partition.N, prob.exact) == pytest.approx(errs[3], rel=1e-10)
