"""Quick invariant checks run by ``parabolic-apost selftest``."""

from __future__ import annotations

import math

import numpy as np

from .accumulation import EnergyAccumulator, duality_coeffs, energy_coeffs
from .fespace import DiffusionMatrix, FeSpace, discrete_elliptic_apply
from .indicators import EstimatorConstants, compute_indicators, compute_residuals
from .mesh import interior_edge_sets, uniform_square_mesh
from .timestepper import SchemeConfig, TimePartition, pointwise_residual, run


def _coefficient_identities():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(2, 200))
        part = TimePartition.from_steps(rng.uniform(0.01, 1.0, N))
        c = duality_coeffs(part)
        logr = math.log(part.T / part.tau[-1])
        worst = max(worst, abs(c.a.sum() - logr), abs(c.b.sum() - 0.25 * (0.5 + logr)))
        if c.b[-1] != 0.125 or np.any(c.a <= 0):
            return False, "b_N or positivity violated"
    return worst <= 1e-10, f"max identity defect {worst:.2e}"


def _energy_incremental():
    rng = np.random.default_rng(2)
    part = TimePartition.from_steps(rng.uniform(0.001, 0.1, 100))
    vals = rng.uniform(0, 1, (100, 4))
    acc = EnergyAccumulator(3.0).start(0.0)
    for k in range(100):
        acc.update(part.tau[k], eta=vals[k, 0], beta=vals[k, 1], gamma=vals[k, 2],
                   theta=vals[k, 3])
    batch = 2.0 * np.dot(vals.sum(axis=1), energy_coeffs(3.0, part))
    rel = abs(acc.e_one - batch) / batch
    return rel <= 1e-12, f"relative defect {rel:.2e}"


def _galerkin_consistency():
    space = FeSpace(uniform_square_mesh(3))
    diff = DiffusionMatrix()
    v = np.random.default_rng(3).standard_normal(space.ndofs)
    Av = discrete_elliptic_apply(v, space, diff).coefficients
    Kv = space.stiffness(diff) @ v
    defect = np.abs(space.mass() @ Av - Kv).max() / np.abs(Kv).max()
    return defect <= 1e-10, f"relative defect {defect:.2e}"


def _mesh_invariants():
    for level in range(5):
        m = uniform_square_mesh(level)
        if m.euler_characteristic() != 1:
            return False, f"Euler relation fails at level {level}"
    es = interior_edge_sets(uniform_square_mesh(1), uniform_square_mesh(0))
    ok = len(es.sigma_hat) == 2 and len(es.sigma_check_minus_hat) == 6
    return ok, "edge sets level 0 -> 1"


def _scheme_residual():
    from .bench import BenchmarkProblem

    prob = BenchmarkProblem(1, 0.2)
    part = TimePartition.uniform(0.2, 10)
    sol = run(prob.heat_problem(), SchemeConfig(levels=3), part)
    worst = 0.0
    for n in range(1, part.N + 1):
        r, scale = pointwise_residual(sol, n)
        worst = max(worst, r / (1e-8 * scale + 1e-10))
    inds = compute_indicators(sol, EstimatorConstants())
    neg = any(v < 0 for ind in inds for v in ind.as_dict().values())
    res = compute_residuals(sol, part.N)
    return worst <= 1.0 and not neg and res.jump.shape[0] > 0, f"residual ratio {worst:.2e}"


CHECKS = [
    ("duality coefficient identities", _coefficient_identities),
    ("energy incremental update", _energy_incremental),
    ("Galerkin consistency of A_h", _galerkin_consistency),
    ("mesh invariants", _mesh_invariants),
    ("scheme pointwise residual", _scheme_residual),
]


def run_selftest(out=print):
    failures = 0
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return failures
