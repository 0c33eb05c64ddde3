"""Backward Euler - Galerkin time stepping on nested uniform meshes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fespace import (DEFAULT_TOL, DiffusionMatrix, DofVector, FeSpace, cross_mass,
                      discrete_elliptic_apply, l2_norm, l2_project, load_vector)
from .mesh import uniform_square_mesh
from .quadrature import time_rule

RHS_MODES = ("endpoint", "time_average")
INITIAL_MODES = ("interpolation", "l2_projection")
TIME_AVERAGE_POINTS = 4


@dataclass(frozen=True)
class TimePartition:
    """Nodes ``0 = t_0 < t_1 < ... < t_N = T``."""

    nodes: np.ndarray

    def __post_init__(self):
        t = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a partition needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("partitions start at t_0 = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("partition nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T, N):
        return cls(np.linspace(0.0, T, int(N) + 1))

    @classmethod
    def from_steps(cls, steps):
        return cls(np.concatenate([[0.0], np.cumsum(steps)]))

    @property
    def N(self):
        return len(self.nodes) - 1

    @property
    def T(self):
        return float(self.nodes[-1])

    @property
    def tau(self):
        """Steps ``tau_1 .. tau_N`` stored at indices ``0 .. N-1``."""
        return np.diff(self.nodes)

    def step(self, n):
        """``tau_n`` for ``1 <= n <= N``."""
        return float(self.nodes[n] - self.nodes[n - 1])

    def truncated(self, m):
        return TimePartition(self.nodes[: m + 1])


@dataclass
class HeatProblem:
    """Data of ``u_t - div(A grad u) = f``, ``u(0) = u0`` with zero boundary values.

    ``f(x, y, t)`` and ``u0(x, y)`` must accept numpy arrays.
    """

    f: Callable
    u0: Callable


@dataclass
class SchemeConfig:
    rhs_mode: str = "endpoint"
    initial_mode: str = "interpolation"
    levels: int | Sequence[int] = 3
    diffusion: DiffusionMatrix = field(default_factory=DiffusionMatrix)
    tol: float = DEFAULT_TOL
    backend: str = "cg"
    quad_degree: int = 8

    def __post_init__(self):
        if self.rhs_mode not in RHS_MODES:
            raise ValueError(f"rhs_mode must be one of {RHS_MODES}")
        if self.initial_mode not in INITIAL_MODES:
            raise ValueError(f"initial_mode must be one of {INITIAL_MODES}")
        if self.tol <= 0:
            raise ValueError("solver tolerance must be positive")

    def level_schedule(self, N):
        if np.isscalar(self.levels):
            return [int(self.levels)] * (N + 1)
        levels = [int(v) for v in self.levels]
        if len(levels) != N + 1:
            raise ValueError(f"mesh schedule has {len(levels)} entries, need {N + 1}")
        return levels


def fhat(f, partition, n, mode):
    """Time-discrete source for step ``n`` as a function of ``(x, y)``."""
    t0, t1 = partition.nodes[n - 1], partition.nodes[n]
    if mode == "endpoint":
        return lambda x, y: f(x, y, t1)
    ts, ws = time_rule(t0, t1, TIME_AVERAGE_POINTS)
    tau = t1 - t0

    def avg(x, y):
        return sum(w * f(x, y, t) for t, w in zip(ts, ws)) / tau

    return avg


@dataclass
class DiscreteSolution:
    """Trajectory ``U^0 .. U^N`` with the per-step projections needed later.

    ``load_proj[n]`` is ``P^n fhat^n`` and ``prev_proj[n]`` is ``P^n U^{n-1}``
    (both ``None`` at ``n = 0``).
    """

    partition: TimePartition
    spaces: list
    U: list
    load_proj: list
    prev_proj: list
    config: SchemeConfig

    def __len__(self):
        return len(self.U)

    def dofvector(self, n):
        return DofVector(self.spaces[n], self.U[n])


def make_spaces(levels, config):
    cache = {}
    out = []
    for lv in levels:
        if lv not in cache:
            cache[lv] = FeSpace(uniform_square_mesh(lv), tol=config.tol, backend=config.backend)
        out.append(cache[lv])
    return out


def initial_condition(u0, space, mode="interpolation", degree=8):
    """``U^0`` by nodal interpolation or L2 projection of ``u0``."""
    if mode == "interpolation":
        return space.interpolate(u0)
    if mode == "l2_projection":
        return l2_project(u0, space, degree)
    raise ValueError(f"unknown initial mode {mode!r}")


def _system_solver(space, tau, diff):
    def build():
        return (space.mass() / tau + space.stiffness(diff)).tocsr()

    return space.solver(("euler", tau, diff), build)


def backward_euler_step(prev, prev_space, space, tau, rhs_vector, diff=None):
    """Solve ``(M/tau + K) U = rhs + (U_prev, phi)/tau`` on ``space``."""
    if tau <= 0:
        raise ValueError("time step must be positive")
    diff = diff or DiffusionMatrix()
    prev = prev.coefficients if isinstance(prev, DofVector) else np.asarray(prev, dtype=float)
    pairing = cross_mass(space, prev_space) @ prev
    rhs = np.asarray(rhs_vector, dtype=float) + pairing / tau
    U = _system_solver(space, tau, diff).solve(rhs)
    return DofVector(space, U)


def run(problem, config, partition):
    """March the scheme over ``partition``; see :class:`DiscreteSolution`."""
    N = partition.N
    spaces = make_spaces(config.level_schedule(N), config)
    diff = config.diffusion
    U0 = initial_condition(problem.u0, spaces[0], config.initial_mode, config.quad_degree)
    U = [U0.coefficients]
    load_proj = [None]
    prev_proj = [None]
    for n in range(1, N + 1):
        space, prev_space = spaces[n], spaces[n - 1]
        tau = partition.step(n)
        load = load_vector(space, fhat(problem.f, partition, n, config.rhs_mode),
                           config.quad_degree)
        Un = backward_euler_step(U[-1], prev_space, space, tau, load, diff).coefficients
        msolve = space.mass_solver()
        load_proj.append(msolve.solve(load))
        if space is prev_space:
            prev_proj.append(U[-1].copy())
        else:
            prev_proj.append(msolve.solve(cross_mass(space, prev_space) @ U[-1]))
        U.append(Un)
    return DiscreteSolution(partition, spaces, U, load_proj, prev_proj, config)


def averaged_discrete_derivative(sol, n):
    """``(U^n - P^n U^{n-1}) / tau_n`` in the step-``n`` space."""
    if not 1 <= n <= sol.partition.N:
        raise IndexError("step index out of range")
    tau = sol.partition.step(n)
    return DofVector(sol.spaces[n], (sol.U[n] - sol.prev_proj[n]) / tau)


def elliptic_image(sol, n):
    """``A^n U^n`` computed directly from the stiffness and mass operators."""
    return discrete_elliptic_apply(sol.U[n], sol.spaces[n], sol.config.diffusion)


def pointwise_residual(sol, n):
    """Return ``(||dbar U^n + A^n U^n - P^n fhat^n||, ||P^n fhat^n||)``."""
    space = sol.spaces[n]
    r = (averaged_discrete_derivative(sol, n).coefficients
         + elliptic_image(sol, n).coefficients - sol.load_proj[n])
    return l2_norm(space, r), l2_norm(space, sol.load_proj[n])
