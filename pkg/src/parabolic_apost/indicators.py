"""Residuals and per-step error indicators for P1 discrete solutions.

Residual sign convention: for a P1 function ``W`` and each interior edge with
left triangle ``L``, right triangle ``R`` and unit normal ``nu`` pointing out
of ``L``, the jump is ``J = (A grad W|_L - A grad W|_R) . nu``.  With this
choice ``a(W, phi) = sum_E (J, phi)_E`` for continuous ``phi`` (the
elementwise operator vanishes on P1), so the inner and jump residuals of a
discrete solution are orthogonal to the discrete space.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .fespace import (DiffusionMatrix, discrete_elliptic_apply, element_gradients,
                      p1_weighted_norm)
from .mesh import ancestor_map, finer_coarser, interior_edge_sets, vertex_prolongation
from .quadrature import quadrature_points, time_rule, triangle_rule
from .timestepper import averaged_discrete_derivative, fhat

GAMMA_TIME_POINTS = 5


@dataclass(frozen=True)
class EstimatorConstants:
    C62: float = 1.0
    C102: float = 1.0
    C142: float = 1.0
    C_PF: float = math.sqrt(2.0) / math.pi
    alpha: float = 1.0
    half_factor_theta: bool = True

    def __post_init__(self):
        for name in ("C62", "C102", "C142", "C_PF", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ResidualData:
    """Inner residual as P1 vertex values and jump residual per interior edge."""

    mesh: object
    inner: np.ndarray
    jump: np.ndarray


@dataclass
class StepIndicators:
    n: int
    eps_n: float = 0.0
    eta_n: float = 0.0
    theta_n: float = 0.0
    theta_alt_n: float = 0.0
    gamma_n: float = 0.0
    mc_h2: float = 0.0
    mc_h1: float = 0.0
    beta_n: float = 0.0
    dtf_l1: float = 0.0

    def as_dict(self):
        return asdict(self)


def jumps(mesh, full_values, diff=None):
    """Normal flux jumps of a P1 function across the interior edges."""
    diff = diff or DiffusionMatrix()
    flux = element_gradients(mesh, full_values) @ diff.matrix.T
    nu = mesh.edge_normals()
    d = flux[mesh.interior_left] - flux[mesh.interior_right]
    return np.einsum("ed,ed->e", d, nu)


def edge_weighted_norm(mesh, values, h, power, index=None):
    """``|| h^power J ||_{L2(edges)}`` for edgewise constant ``J``."""
    lengths = mesh.edge_lengths[mesh.interior_edge_ids]
    if index is not None:
        values, h, lengths = values[index], h[index], lengths[index]
    return float(np.sqrt(np.sum(h ** (2 * power) * values**2 * lengths)))


def compute_residuals(sol, n, rhs=None):
    """Inner and jump residual of ``U^n``.

    For ``n >= 1`` the inner residual is ``-P^n fhat^n + dbar U^n`` (the
    elementwise operator of a P1 function is zero); for ``n = 0`` it is
    ``-A^0 U^0``.
    """
    space = sol.spaces[n]
    diff = sol.config.diffusion
    if n == 0:
        inner = -discrete_elliptic_apply(sol.U[0], space, diff).coefficients
    else:
        rhs = sol.load_proj[n] if rhs is None else rhs
        inner = averaged_discrete_derivative(sol, n).coefficients - rhs
    full_u = space.to_full(sol.U[n])
    return ResidualData(space.mesh, space.to_full(inner), jumps(space.mesh, full_u, diff))


def epsilon_n(res, consts):
    mesh = res.mesh
    h_edge = mesh.edge_lengths[mesh.interior_edge_ids]
    return (consts.C62 * p1_weighted_norm(mesh, res.inner, mesh.h**2)
            + consts.C102 * edge_weighted_norm(mesh, res.jump, h_edge, 1.5))


def _on_fine(full_values, mesh, fine):
    if mesh is fine:
        return np.asarray(full_values)
    return vertex_prolongation(mesh, fine) @ full_values


def _hhat_elements(fine, coarse):
    if fine is coarse:
        return fine.h
    return np.maximum(fine.h, coarse.h[ancestor_map(fine, coarse)])


def eta_n(sol, n, consts, edge_sets=None, residuals=None):
    """Space indicator from the backward differences of the residuals."""
    if n < 1:
        raise ValueError("eta_n needs n >= 1")
    s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
    tau = sol.partition.step(n)
    es = edge_sets or interior_edge_sets(s_now.mesh, s_old.mesh)
    fine, coarse = es.fine, es.coarse
    if residuals is not None:
        r_now, r_old = residuals[n], residuals[n - 1]
    else:
        r_now, r_old = compute_residuals(sol, n), compute_residuals(sol, n - 1)
    dR = (_on_fine(r_now.inner, s_now.mesh, fine) - _on_fine(r_old.inner, s_old.mesh, fine)) / tau
    if fine is coarse:
        dJ = (r_now.jump - r_old.jump) / tau
    else:
        u_now = _on_fine(s_now.to_full(sol.U[n]), s_now.mesh, fine)
        u_old = _on_fine(s_old.to_full(sol.U[n - 1]), s_old.mesh, fine)
        dJ = jumps(fine, u_now - u_old, sol.config.diffusion) / tau
    hhat = _hhat_elements(fine, coarse)
    value = consts.C62 * p1_weighted_norm(fine, dR, hhat**2)
    value += consts.C102 * edge_weighted_norm(fine, dJ, es.coarse_h, 1.5, es.hat_index)
    if len(es.check_index):
        value += consts.C142 * edge_weighted_norm(fine, dJ, es.coarse_h, 1.5, es.check_index)
    return value


def _theta_factor(consts):
    return 0.5 if consts.half_factor_theta else 1.0


def _difference_norm(v_now, s_now, v_old, s_old):
    fine, _ = finer_coarser(s_now.mesh, s_old.mesh)
    a = _on_fine(s_now.to_full(v_now), s_now.mesh, fine)
    b = _on_fine(s_old.to_full(v_old), s_old.mesh, fine)
    return p1_weighted_norm(fine, a - b)


def theta_n(sol, n, consts):
    """Time indicator through the pointwise form ``A^n U^n = P^n fhat^n - dbar U^n``."""
    if n < 1:
        raise ValueError("theta_n needs n >= 1")
    s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
    now = sol.load_proj[n] - averaged_discrete_derivative(sol, n).coefficients
    if n == 1:
        old = discrete_elliptic_apply(sol.U[0], s_old, sol.config.diffusion).coefficients
    else:
        old = sol.load_proj[n - 1] - averaged_discrete_derivative(sol, n - 1).coefficients
    return _theta_factor(consts) * _difference_norm(now, s_now, old, s_old)


def theta_direct(sol, n):
    """``|| A^{n-1} U^{n-1} - A^n U^n ||`` from two applications of the discrete operator."""
    diff = sol.config.diffusion
    s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
    now = discrete_elliptic_apply(sol.U[n], s_now, diff).coefficients
    old = discrete_elliptic_apply(sol.U[n - 1], s_old, diff).coefficients
    return _difference_norm(now, s_now, old, s_old)


def theta_alt_n(sol, n, eta_n_value):
    """Alternative time indicator ``||U^{n-1} - U^n|| + eta_n``."""
    return _difference_norm(sol.U[n], sol.spaces[n], sol.U[n - 1], sol.spaces[n - 1]) + eta_n_value


def _l2_of_values(mesh, values, degree, weights=None):
    _, wts = quadrature_points(mesh, degree)
    v2 = values**2
    if weights is not None:
        v2 = v2 * (np.asarray(weights) ** 2)[:, None]
    return float(np.sqrt(np.sum(v2 * wts)))


def gamma_n(f, n, partition, rhs_mode, mesh=None, degree=8, npoints=GAMMA_TIME_POINTS):
    """Data indicator: time integral over ``I_n`` of ``||fhat^n - f(t)||``."""
    if mesh is None:
        from .mesh import uniform_square_mesh

        mesh = uniform_square_mesh(4)
    pts, _ = quadrature_points(mesh, degree)
    x, y = pts[..., 0], pts[..., 1]
    target = np.broadcast_to(fhat(f, partition, n, rhs_mode)(x, y), x.shape)
    ts, ws = time_rule(partition.nodes[n - 1], partition.nodes[n], npoints)
    return float(sum(w * _l2_of_values(mesh, target - f(x, y, t), degree)
                     for t, w in zip(ts, ws)))


def dt_f_l1(dfdt, n, partition, mesh, degree=8, npoints=GAMMA_TIME_POINTS):
    """``|| d_t f ||_{L1(I_n; L2)}`` by Gauss quadrature in time."""
    pts, _ = quadrature_points(mesh, degree)
    x, y = pts[..., 0], pts[..., 1]
    ts, ws = time_rule(partition.nodes[n - 1], partition.nodes[n], npoints)
    return float(sum(w * _l2_of_values(mesh, np.broadcast_to(dfdt(x, y, t), x.shape), degree)
                     for t, w in zip(ts, ws)))


def beta_tilde(gammas, b, rhs_mode):
    """Global data indicator from ``gamma_1 .. gamma_N`` and ``b_1 .. b_N``."""
    gammas = np.asarray(gammas, dtype=float)
    if rhs_mode == "endpoint":
        return float(gammas.sum())
    if rhs_mode != "time_average":
        raise ValueError(f"unknown rhs mode {rhs_mode!r}")
    b = np.asarray(b, dtype=float)
    if len(b) < len(gammas):
        raise ValueError("need one b coefficient per gamma")
    return float(gammas[-1] + 2.0 * np.sqrt(np.sum(b[: len(gammas) - 1] * gammas[:-1] ** 2)))


@dataclass
class MeshChange:
    """Mesh change indicator sampled at quadrature points of the finer mesh."""

    mesh: object
    values: np.ndarray
    h: np.ndarray
    degree: int


def mesh_change_indicator(sol, n, f=None):
    """``(P^n - Id)(U^{n-1}/tau_n + fhat^n)`` and its ``h^2``, ``h`` and plain norms.

    The data part is included only when the source ``f`` is given.
    Returns ``(MeshChange, mc_h2, mc_h1, beta_n)``.
    """
    s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
    tau = sol.partition.step(n)
    degree = sol.config.quad_degree
    fine, coarse = finer_coarser(s_now.mesh, s_old.mesh)
    bary, _ = triangle_rule(degree)
    values = np.zeros((fine.num_triangles, len(bary)))
    if s_now.mesh is not fine:
        # P^n U^{n-1} differs from U^{n-1} only when the new mesh is coarser
        diff_full = (_on_fine(s_now.to_full(sol.prev_proj[n]), s_now.mesh, fine)
                     - s_old.to_full(sol.U[n - 1]))
        values += (diff_full[fine.triangles] @ bary.T) / tau
    if f is not None:
        pts, _ = quadrature_points(fine, degree)
        x, y = pts[..., 0], pts[..., 1]
        proj = _on_fine(s_now.to_full(sol.load_proj[n]), s_now.mesh, fine)
        raw = fhat(f, sol.partition, n, sol.config.rhs_mode)(x, y)
        values += proj[fine.triangles] @ bary.T - np.broadcast_to(raw, x.shape)
    h = s_now.mesh.h if s_now.mesh is fine else s_now.mesh.h[ancestor_map(fine, s_now.mesh)]
    data = MeshChange(fine, values, h, degree)
    return (data,
            _l2_of_values(fine, values, degree, h**2),
            _l2_of_values(fine, values, degree, h),
            _l2_of_values(fine, values, degree))


def compute_indicators(sol, consts, f=None, dfdt=None, mesh_data="static_split"):
    """All indicators for ``n = 0 .. N``.

    ``mesh_data`` controls the source part of the mesh change indicator:
    ``"full"`` always includes it, ``"static_split"`` drops it on steps
    without a mesh change (the source error is then tracked by ``gamma_n``),
    ``"none"`` never includes it.
    """
    part = sol.partition
    residuals = [compute_residuals(sol, n) for n in range(part.N + 1)]
    out = [StepIndicators(0, eps_n=epsilon_n(residuals[0], consts))]
    for n in range(1, part.N + 1):
        s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
        es = interior_edge_sets(s_now.mesh, s_old.mesh)
        eta = eta_n(sol, n, consts, es, residuals)
        ind = StepIndicators(n, eps_n=epsilon_n(residuals[n], consts), eta_n=eta)
        ind.theta_n = theta_n(sol, n, consts)
        ind.theta_alt_n = theta_alt_n(sol, n, eta)
        if f is not None:
            ind.gamma_n = gamma_n(f, n, part, sol.config.rhs_mode, s_now.mesh,
                                  sol.config.quad_degree)
        static = s_now is s_old
        use_f = f if (mesh_data == "full" or (mesh_data == "static_split" and not static)) else None
        if use_f is not None or not static:
            _, ind.mc_h2, ind.mc_h1, ind.beta_n = mesh_change_indicator(sol, n, use_f)
        if dfdt is not None:
            ind.dtf_l1 = dt_f_l1(dfdt, n, part, s_now.mesh, sol.config.quad_degree)
        out.append(ind)
    return out
