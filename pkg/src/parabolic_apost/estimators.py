"""Duality and energy estimator totals and effectivity indices.

Two evaluation modes are offered.  ``"core"`` keeps only the
reconstruction, space and time indicators (the combinations used for the
effectivity study); ``"full"`` adds the initial error, data and mesh change
terms of the complete bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accumulation import (DualityCoefficients, EnergyAccumulator, duality_coeffs,
                           energy_coeffs, energy_rate)
from .indicators import EstimatorConstants, beta_tilde

MODES = ("core", "full")


class EstimatorConfigError(ValueError):
    """Estimator requested under data assumptions it does not support."""


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")


@dataclass
class EstimatorState:
    """Indicator history of one run plus the running energy sums."""

    indicators: list
    partition: object
    consts: EstimatorConstants = field(default_factory=EstimatorConstants)
    initial_error: float = 0.0
    rhs_mode: str = "endpoint"
    energy: EnergyAccumulator | None = None

    def __post_init__(self):
        if len(self.indicators) != self.partition.N + 1:
            raise ValueError("need one indicator record per time node")
        if self.energy is None:
            self.energy = EnergyAccumulator(self.a_rate).start(self.indicators[0].eps_n)
            for ind in self.indicators[1:]:
                self.energy.update(self.partition.step(ind.n), eps=ind.eps_n, eta=ind.eta_n,
                                   beta=ind.beta_n, gamma=ind.gamma_n, theta=ind.theta_n)

    @property
    def a_rate(self):
        return energy_rate(self.consts.alpha, self.consts.C_PF)

    def column(self, name, start=0, stop=None):
        stop = len(self.indicators) if stop is None else stop
        return np.array([getattr(ind, name) for ind in self.indicators[start:stop]])

    def duality_coefficients(self, m):
        """Weights for the horizon ``t_m``, rebuilt for every ``m``."""
        if m < 1:
            raise ValueError("need m >= 1")
        if m == 1:
            # the a_0 integral runs over the empty interval [0, t_0]
            return DualityCoefficients(np.zeros(1), np.array([0.125]))
        return duality_coeffs(self.partition.truncated(m))


def duality_total(state, m, mode="full"):
    """Duality bound at ``t_m``."""
    _check_mode(mode)
    c = state.duality_coefficients(m)
    eps = state.column("eps_n", 0, m)
    theta = state.column("theta_n", 1, m + 1)
    total = (math.sqrt(np.dot(c.a, eps**2)) + state.indicators[m].eta_n
             + math.sqrt(np.dot(c.b, theta**2)))
    if mode == "core":
        return total
    tau_m = state.partition.step(m)
    mc_h2 = state.column("mc_h2", 1, m)
    total += state.initial_error
    total += math.sqrt(tau_m / 2.0) * state.indicators[m].mc_h1
    total += math.sqrt(np.dot(c.b[: m - 1], mc_h2**2))
    total += beta_tilde(state.column("gamma_n", 1, m + 1), c.b, state.rhs_mode)
    return total


def duality_max_total(state, m, mode="full"):
    """Bound with maxima over time and a single logarithmic factor."""
    _check_mode(mode)
    theta_max = state.column("theta_n", 1, m + 1).max()
    if mode == "core":
        return theta_max + state.column("eps_n", 0, m).max() + state.indicators[m].eta_n
    if state.rhs_mode != "time_average":
        raise EstimatorConfigError("the max-form duality bound assumes time-averaged sources")
    t_m = state.partition.nodes[m]
    tau = state.partition.tau[:m]
    mc_h2 = state.column("mc_h2", 1, m)
    log_factor = math.sqrt(1.0 + math.log(t_m / tau[-1]))
    total = state.initial_error + math.sqrt(tau[-1] / 2.0) * state.indicators[m].mc_h1
    total += float(np.dot(tau, state.column("dtf_l1", 1, m + 1)))
    total += log_factor * (state.column("eps_n", 0, m + 1).max()
                           + 2.0 * (mc_h2.max() if len(mc_h2) else 0.0)
                           + 0.5 * theta_max)
    return total


def energy_batch(state, m):
    """``(E_inf, E_1, core_sum)`` at ``t_m`` evaluated from scratch."""
    eps = state.column("eps_n", 0, m + 1)
    if m == 0:
        return float(eps.max()), 0.0, 0.0
    d = energy_coeffs(state.a_rate, state.partition, m)
    s = (state.column("eta_n", 1, m + 1) + state.column("beta_n", 1, m + 1)
         + state.column("gamma_n", 1, m + 1) + state.column("theta_n", 1, m + 1))
    core = state.column("theta_n", 1, m + 1) + state.column("eta_n", 1, m + 1)
    return float(eps.max()), 2.0 * float(np.dot(s, d)), float(np.dot(core, d))


def energy_total(state, m, mode="full"):
    """Energy bound at ``t_m`` from the incrementally updated sums."""
    _check_mode(mode)
    if m == 0:
        e_inf, e_one, core = energy_batch(state, 0)
    else:
        e_inf, e_one, core = state.energy.history[m - 1]
    if mode == "core":
        return core + e_inf
    e_zero = state.initial_error + state.indicators[0].eps_n
    return e_zero + e_inf + e_one


def effectivity_indices(state, error_history, m, mode="core"):
    """Effectivity indices of the three estimators at ``t_m`` and their inverses.

    ``error_history`` holds ``||U^n - u(t_n)||`` for ``n = 0 .. >= m``; the
    denominator is its maximum up to ``m``.  A vanishing error yields
    ``None`` entries.
    """
    err = float(np.max(np.asarray(error_history[: m + 1], dtype=float)))
    try:
        max_total = duality_max_total(state, m, mode)
    except EstimatorConfigError:
        max_total = None
    totals = {
        "duality": duality_total(state, m, mode),
        "max": max_total,
        "energy": energy_total(state, m, mode),
    }
    out = {}
    for key, est in totals.items():
        ok = est is not None and err > 0
        out[f"EI_{key}"] = est / err if ok else None
        out[f"inv_EI_{key}"] = err / est if (ok and est > 0) else None
    return out
