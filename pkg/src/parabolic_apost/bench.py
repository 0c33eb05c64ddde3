"""Benchmark heat problem, exact errors, EOCs and the convergence study driver."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accumulation import duality_coeffs, energy_coeffs, energy_rate
from .estimators import (EstimatorConfigError, EstimatorState, duality_max_total,
                         duality_total, effectivity_indices, energy_total)
from .fespace import DiffusionMatrix
from .indicators import EstimatorConstants, compute_indicators
from .mesh import mesh_size_max, uniform_square_mesh
from .quadrature import quadrature_points
from .timestepper import HeatProblem, SchemeConfig, TimePartition, run

STEP_COLUMNS = ("n", "t_n", "error_L2", "eps_n", "eta_n", "theta_n", "gamma_n", "beta_n",
                "duality_total", "duality_max_total", "energy_total",
                "inv_EI_duality", "inv_EI_max", "inv_EI_energy")
SUMMARY_COLUMNS = ("level", "h", "tau", "max_error", "EOC_error", "EOC_eps", "EOC_theta")


@dataclass(frozen=True)
class BenchmarkProblem:
    """``u = sin(kappa pi t) exp(-10 |x|^2)`` for the heat equation on [-1,1]^2."""

    kappa: int = 1
    T: float = 1.0

    def __post_init__(self):
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ValueError("kappa must be a positive integer")
        if not self.T > 0:
            raise ValueError("final time must be positive")

    def exact(self, x, y, t):
        return math.sin(self.kappa * math.pi * t) * np.exp(-10.0 * (x * x + y * y))

    def f(self, x, y, t):
        return exact_source(self.kappa)(x, y, t)

    def dfdt(self, x, y, t):
        k = self.kappa * math.pi
        r2 = x * x + y * y
        return np.exp(-10.0 * r2) * (-k * k * math.sin(k * t)
                                     + (40.0 - 400.0 * r2) * k * math.cos(k * t))

    def u0(self, x, y):
        return self.exact(x, y, 0.0)

    def heat_problem(self):
        return HeatProblem(f=self.f, u0=self.u0)

    def boundary_trace_max(self):
        """Largest |u| on the boundary, committed by imposing zero boundary values."""
        return math.exp(-10.0)


def exact_source(kappa):
    """Source of the benchmark for ``-Laplace``: ``e^{-10r^2}[k pi cos + (40 - 400 r^2) sin]``."""
    k = kappa * math.pi

    def f(x, y, t):
        r2 = x * x + y * y
        return np.exp(-10.0 * r2) * (k * math.cos(k * t) + (40.0 - 400.0 * r2) * math.sin(k * t))

    return f


def l2_error_at_node(sol, n, exact, degree=None):
    """``||U^n - u(t_n)||_{L2}`` by elementwise quadrature."""
    degree = degree or sol.config.quad_degree
    space = sol.spaces[n]
    pts, wts = quadrature_points(space.mesh, degree)
    t = sol.partition.nodes[n]
    diff = space.values_at(sol.U[n], degree) - exact(pts[..., 0], pts[..., 1], t)
    return float(np.sqrt(np.sum(diff * diff * wts)))


def node_errors(sol, exact, degree=None):
    return np.array([l2_error_at_node(sol, n, exact, degree) for n in range(len(sol.U))])


def midpoint_errors(sol, exact, degree=None):
    """Errors of the piecewise linear extension at the step midpoints (diagnostic)."""
    from .fespace import to_common
    from .mesh import finer_coarser

    degree = degree or sol.config.quad_degree
    out = []
    for n in range(1, len(sol.U)):
        s_now, s_old = sol.spaces[n], sol.spaces[n - 1]
        fine_mesh, _ = finer_coarser(s_now.mesh, s_old.mesh)
        fine = s_now if s_now.mesh is fine_mesh else s_old
        mid = 0.5 * (to_common(sol.U[n], s_now, fine) + to_common(sol.U[n - 1], s_old, fine))
        pts, wts = quadrature_points(fine.mesh, degree)
        t = 0.5 * (sol.partition.nodes[n] + sol.partition.nodes[n - 1])
        d = fine.values_at(mid, degree) - exact(pts[..., 0], pts[..., 1], t)
        out.append(float(np.sqrt(np.sum(d * d * wts))))
    return np.array(out)


def linf_l2_error(errors, m):
    """Maximum of the node errors ``0 .. m``."""
    return float(np.max(np.asarray(errors, dtype=float)[: m + 1]))


def eoc(values, h, i):
    """``ln(a(i+1)/a(i)) / ln(h(i+1)/h(i))``."""
    a0, a1 = float(values[i]), float(values[i + 1])
    if a0 <= 0 or a1 <= 0:
        raise ValueError("EOC needs positive values")
    if h[i] == h[i + 1]:
        raise ValueError("EOC needs distinct mesh sizes")
    return math.log(a1 / a0) / math.log(h[i + 1] / h[i])


@dataclass
class StudyConfig:
    kappa: int = 1
    T: float = 1.0
    levels: tuple = (2, 3, 4, 5)
    c_tau: float = 0.05
    rhs_mode: str = "time_average"
    initial_mode: str = "interpolation"
    consts: EstimatorConstants = field(default_factory=EstimatorConstants)
    quad_degree: int = 8
    tol: float = 1e-12
    backend: str = "cg"
    ei_modes: tuple = ("core",)

    def __post_init__(self):
        if not self.c_tau > 0:
            raise ValueError("c_tau must be positive")
        if not len(self.levels):
            raise ValueError("need at least one level")
        if list(self.levels) != sorted(set(self.levels)):
            raise ValueError("levels must be strictly increasing")

    @property
    def problem(self):
        return BenchmarkProblem(self.kappa, self.T)

    def partition(self, level):
        """Uniform steps with ``tau ~ c_tau * h`` adjusted so that ``N tau = T``."""
        h = mesh_size_max(uniform_square_mesh(level))
        N = max(2, math.ceil(self.T / (self.c_tau * h) - 1e-9))
        return TimePartition.uniform(self.T, N)

    def scheme(self, level):
        return SchemeConfig(rhs_mode=self.rhs_mode, initial_mode=self.initial_mode,
                            levels=level, diffusion=DiffusionMatrix(), tol=self.tol,
                            backend=self.backend, quad_degree=self.quad_degree)


@dataclass
class LevelResult:
    level: int
    h: float
    partition: TimePartition
    errors: np.ndarray
    indicators: list
    state: EstimatorState
    rows: dict

    @property
    def tau(self):
        return float(self.partition.tau[0])

    @property
    def max_error(self):
        return float(self.errors.max())

    def max_indicator(self, name):
        return max(getattr(ind, name) for ind in self.indicators[0 if name == "eps_n" else 1:])

    def inverse_ei(self, key, mode="core"):
        """Inverse effectivity index time series ``(t_n, value)`` for ``n >= 1``."""
        rows = self.rows[mode]
        t = np.array([r["t_n"] for r in rows[1:]])
        v = np.array([np.nan if r[f"inv_EI_{key}"] is None else r[f"inv_EI_{key}"]
                      for r in rows[1:]])
        return t, v


def step_rows(state, errors, mode):
    """One record per time node with the columns of :data:`STEP_COLUMNS`."""
    rows = []
    for n, ind in enumerate(state.indicators):
        row = {"n": n, "t_n": float(state.partition.nodes[n]), "error_L2": float(errors[n]),
               "eps_n": ind.eps_n, "eta_n": ind.eta_n, "theta_n": ind.theta_n,
               "gamma_n": ind.gamma_n, "beta_n": ind.beta_n,
               "duality_total": None, "duality_max_total": None,
               "energy_total": energy_total(state, n, "full"),
               "inv_EI_duality": None, "inv_EI_max": None, "inv_EI_energy": None}
        if n >= 1:
            row["duality_total"] = duality_total(state, n, "full")
            try:
                row["duality_max_total"] = duality_max_total(state, n, "full")
            except EstimatorConfigError:
                pass
            ei = effectivity_indices(state, errors, n, mode)
            for key in ("duality", "max", "energy"):
                row[f"inv_EI_{key}"] = ei[f"inv_EI_{key}"]
        rows.append(row)
    return rows


def run_level(config, level):
    problem = config.problem
    part = config.partition(level)
    sol = run(problem.heat_problem(), config.scheme(level), part)
    errors = node_errors(sol, problem.exact)
    inds = compute_indicators(sol, config.consts, f=problem.f, dfdt=problem.dfdt,
                              mesh_data="static_split")
    state = EstimatorState(inds, part, config.consts, initial_error=float(errors[0]),
                           rhs_mode=config.rhs_mode)
    rows = {mode: step_rows(state, errors, mode) for mode in config.ei_modes}
    return LevelResult(level, mesh_size_max(uniform_square_mesh(level)), part, errors,
                       inds, state, rows)


@dataclass
class ConvergenceStudy:
    config: StudyConfig
    results: list

    def summary_rows(self):
        h = [r.h for r in self.results]
        err = [r.max_error for r in self.results]
        eps = [r.max_indicator("eps_n") for r in self.results]
        theta = [r.max_indicator("theta_n") for r in self.results]
        rows = []
        for i, r in enumerate(self.results):
            row = {"level": r.level, "h": r.h, "tau": r.tau, "max_error": r.max_error,
                   "EOC_error": None, "EOC_eps": None, "EOC_theta": None}
            if i > 0:
                row["EOC_error"] = eoc(err, h, i - 1)
                row["EOC_eps"] = eoc(eps, h, i - 1)
                row["EOC_theta"] = eoc(theta, h, i - 1)
            rows.append(row)
        return rows


def run_study(config, workers=1):
    """Solve, estimate and measure every level of ``config``.

    Levels are independent; ``workers > 1`` runs them in separate processes.
    """
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_level, [config] * len(config.levels), config.levels))
    else:
        results = [run_level(config, lv) for lv in config.levels]
    return ConvergenceStudy(config, results)


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return ""
    return f"{float(v):.16e}"


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_value(row[c]) for c in columns) + "\n")


def write_study(study, outdir):
    """Write per-level step tables, the summary table and a short run report."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    for res in study.results:
        for mode, rows in res.rows.items():
            path = os.path.join(outdir, f"level{res.level}_{mode}.csv")
            write_csv(path, STEP_COLUMNS, rows)
            written.append(path)
    path = os.path.join(outdir, "summary.csv")
    write_csv(path, SUMMARY_COLUMNS, study.summary_rows())
    written.append(path)
    cfg = study.config
    path = os.path.join(outdir, "run_report.txt")
    with open(path, "w") as fh:
        fh.write(f"kappa = {cfg.kappa}\nT = {cfg.T!r}\nc_tau = {cfg.c_tau!r}\n")
        fh.write(f"rhs_mode = {cfg.rhs_mode}\ninitial_mode = {cfg.initial_mode}\n")
        fh.write(f"levels = {','.join(map(str, cfg.levels))}\n")
        fh.write(f"boundary_trace_max = {format_value(cfg.problem.boundary_trace_max())}\n")
    written.append(path)
    return written


def coefficient_rows(partition, a_rate):
    """Rows ``n, t_n, a_n, b_n, d_n`` for ``n = 1 .. N`` (``a`` shifted: ``a_{n-1}``).

    ``a_n`` is defined for ``n = 0 .. N-1`` and ``b_n, d_n`` for ``1 .. N``;
    each row ``n`` lists ``a_{n-1}`` so that the table has ``N`` rows.
    """
    c = duality_coeffs(partition)
    d = energy_coeffs(a_rate, partition)
    rows = []
    for n in range(1, partition.N + 1):
        rows.append({"n": n, "t_n": float(partition.nodes[n]), "a_n-1": float(c.a[n - 1]),
                     "b_n": float(c.b[n - 1]), "d_n": float(d[n - 1])})
    return rows, c, d


__all__ = ["BenchmarkProblem", "ConvergenceStudy", "LevelResult", "StudyConfig",
           "coefficient_rows", "energy_rate", "eoc", "exact_source", "l2_error_at_node",
           "linf_l2_error", "midpoint_errors", "node_errors", "run_level", "run_study",
           "step_rows", "write_study"]
