"""Time-accumulation weights of the duality and energy estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_SERIES_CUTOFF = 1e-6


def lambda_fn(x):
    """``(1 + 1/x) log(1 + x)``, continuously extended by 1 at ``x = 0``.

    Defined for ``x > -1``.  Near zero the Taylor series
    ``1 + x/2 - x^2/6 + x^3/12 - ...`` (coefficients ``(-1)^(j+1)/(j(j+1))``)
    avoids cancellation.
    """
    x = float(x)
    if not x > -1.0 or not math.isfinite(x):
        raise ValueError(f"lambda_fn is defined for x > -1, got {x}")
    if abs(x) < _SERIES_CUTOFF:
        return 1.0 + x / 2.0 - x * x / 6.0 + x**3 / 12.0
    return (1.0 + 1.0 / x) * math.log1p(x)


@dataclass(frozen=True)
class DualityCoefficients:
    """``a`` holds ``a_0 .. a_{N-1}``; ``b`` holds ``b_1 .. b_N`` (index ``n-1``)."""

    a: np.ndarray
    b: np.ndarray


def duality_coeffs(partition):
    """Logarithmic weights ``a_n`` and ``b_n`` for the horizon ``T = t_N``."""
    t = np.asarray(partition.nodes, dtype=float)
    N = len(t) - 1
    if N < 2:
        raise ValueError("duality coefficients need N >= 2 steps")
    T = t[-1]
    tau = np.diff(t)  # tau[k] = tau_{k+1}
    rem = T - t  # rem[n] = T - t_n

    b = np.empty(N)
    # b_n = 1/4 log((T - t_{n-1}) / (T - t_n)) = 1/4 log1p(tau_n / (T - t_n))
    n = np.arange(1, N)
    b[:-1] = 0.25 * np.log1p(tau[n - 1] / rem[n])
    b[-1] = 0.125

    a = np.empty(N)
    a[0] = 1.0 - lambda_fn(-tau[0] / T)
    for k in range(1, N - 1):
        a[k] = lambda_fn(tau[k - 1] / rem[k]) - lambda_fn(-tau[k] / rem[k])
    a[N - 1] = lambda_fn(tau[N - 2] / tau[N - 1]) - 1.0
    return DualityCoefficients(a, b)


def energy_rate(alpha, c_pf):
    """Decay rate ``alpha / c0^2``."""
    return alpha / c_pf**2


def energy_coeff(n, m, a_rate, partition):
    """``d^m_n``: integral of ``exp(a (t - t_m))`` over ``I_n``."""
    if not 1 <= n <= m <= partition.N:
        raise ValueError(f"need 1 <= n <= m <= N, got n={n}, m={m}")
    if a_rate <= 0:
        raise ValueError("a_rate must be positive")
    t = partition.nodes
    tau_n = t[n] - t[n - 1]
    return math.exp(a_rate * (t[n] - t[m])) * (-math.expm1(-a_rate * tau_n)) / a_rate


def energy_coeffs(a_rate, partition, m=None):
    """``d^m_1 .. d^m_m`` (``m = N`` by default) as an array."""
    t = np.asarray(partition.nodes)
    m = partition.N if m is None else m
    tau = np.diff(t)[:m]
    return np.exp(a_rate * (t[1:m + 1] - t[m])) * (-np.expm1(-a_rate * tau)) / a_rate


@dataclass
class EnergyAccumulator:
    """Running energy estimator totals, advanced one step at a time.

    After ``m`` updates: ``e_inf = max(eps_0..eps_m)``,
    ``e_one = 2 sum_n (eta_n + beta_n + gamma_n + theta_n) d^m_n`` and
    ``ei_sum = sum_n (theta_n + eta_n) d^m_n``.
    Moving the horizon from ``t_{m-1}`` to ``t_m`` multiplies every old weight
    by ``exp(-a tau_m)``.
    """

    a_rate: float
    e_inf: float = 0.0
    e_one: float = 0.0
    ei_sum: float = 0.0
    m: int = 0
    history: list = field(default_factory=list)

    def start(self, eps0):
        self.e_inf = float(eps0)
        self.e_one = 0.0
        self.ei_sum = 0.0
        self.m = 0
        self.history = []
        return self

    def update(self, tau, eps=0.0, eta=0.0, beta=0.0, gamma=0.0, theta=0.0):
        decay = math.exp(-self.a_rate * tau)
        d_mm = -math.expm1(-self.a_rate * tau) / self.a_rate
        self.e_one = self.e_one * decay + 2.0 * d_mm * (eta + beta + gamma + theta)
        self.ei_sum = self.ei_sum * decay + d_mm * (theta + eta)
        self.e_inf = max(self.e_inf, eps)
        self.m += 1
        self.history.append((self.e_inf, self.e_one, self.ei_sum))
        return self


def energy_coeffs_update(state, tau, indicators):
    """Advance ``state`` by one step with a mapping of step indicators."""
    return state.update(tau, **indicators)
