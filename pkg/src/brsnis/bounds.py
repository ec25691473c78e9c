"""Closed-form bound evaluators for the recycled-pool and rolling estimators.

Everything here is a deterministic function of the weight constants omega
(sup w over lambda(w)) and kappa (lambda(w^2) over lambda(w)^2), the pool
size N, and the schedule (k, k0, delta).  The bounds hold for test functions
with sup norm at most 1; callers rescale by the declared sup bound when
comparing against empirical moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def mixing_rate(omega: float, n_candidates: int) -> float:
    """Uniform geometric rate (2 omega - 1) / (2 omega + N - 2).

    Strictly decreasing in N and inside (0, 1) for omega >= 1, N >= 2.
    """
    if not omega >= 1.0:
        raise ValueError("omega must be at least 1")
    if n_candidates < 2:
        raise ValueError("n_candidates must be at least 2")
    return (2.0 * omega - 1.0) / (2.0 * omega + n_candidates - 2.0)


def mixing_time(rate: float) -> int:
    """Smallest integer at least -ln 4 / ln rate, for rate in (0, 1)."""
    if not 0.0 < rate < 1.0:
        raise ValueError("rate must lie in (0, 1)")
    return max(1, math.ceil(-math.log(4.0) / math.log(rate)))


@dataclass(frozen=True)
class BoundConstants:
    """All derived constants for one (omega, kappa, N) configuration."""

    omega: float
    kappa: float
    n_candidates: int
    rate: float
    t_mix: int
    bias_const: float
    mse_consts: np.ndarray
    cov_consts: np.ndarray
    rolling_bias_const: float
    rolling_mse_consts: np.ndarray
    hpd_const: float

    def as_dict(self) -> dict:
        return {
            "omega": self.omega,
            "kappa": self.kappa,
            "N": self.n_candidates,
            "mixing_rate": self.rate,
            "mixing_time": self.t_mix,
            "bias_const": self.bias_const,
            "mse_consts": list(self.mse_consts),
            "cov_consts": list(self.cov_consts),
            "rolling_bias_const": self.rolling_bias_const,
            "rolling_mse_consts": list(self.rolling_mse_consts),
            "hpd_const": self.hpd_const,
        }


def bound_constants(omega: float, kappa: float, n_candidates: int) -> BoundConstants:
    """Derive every bound constant from (omega, kappa, N).

    bias_const = 4 (kappa + 1 + omega); mse_consts_i picks up 4 kappa for
    i in {0, 1} and 4 (1 + omega)^2 for i in {1, 2}; cov_consts_i is
    bias_const sqrt(mse_consts_i).  The rolling constants fold in the mixing
    time: rolling_bias_const = 4 T bias_const / 3 and rolling_mse_consts_i =
    mse_consts_{min(i+1, 2)} for i in {0, 2} plus (8/3) T cov_consts_i.
    The high-probability constant is 664 omega.
    """
    if not kappa >= 1.0:
        raise ValueError("kappa must be at least 1")
    rate = mixing_rate(omega, n_candidates)
    t_mix = mixing_time(rate)
    bias_const = 4.0 * (kappa + 1.0 + omega)
    mse_consts = np.array([
        4.0 * kappa,
        4.0 * (kappa + (1.0 + omega) ** 2),
        4.0 * (1.0 + omega) ** 2,
    ])
    cov_consts = bias_const * np.sqrt(mse_consts)
    rolling_bias_const = 4.0 * t_mix * bias_const / 3.0
    rolling_mse_consts = np.array([
        mse_consts[1] + (8.0 / 3.0) * t_mix * cov_consts[0],
        (8.0 / 3.0) * t_mix * cov_consts[1],
        mse_consts[2] + (8.0 / 3.0) * t_mix * cov_consts[2],
    ])
    return BoundConstants(
        omega=float(omega),
        kappa=float(kappa),
        n_candidates=int(n_candidates),
        rate=rate,
        t_mix=t_mix,
        bias_const=bias_const,
        mse_consts=mse_consts,
        cov_consts=cov_consts,
        rolling_bias_const=rolling_bias_const,
        rolling_mse_consts=rolling_mse_consts,
        hpd_const=664.0 * float(omega),
    )


def pool_bias_bound(consts: BoundConstants, n_iters: int) -> float:
    """Bias bound for the iteration-k recycled estimate from any start:
    bias_const (N - 1)^-1 rate^(k - 1)."""
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    n = consts.n_candidates
    return consts.bias_const / (n - 1) * consts.rate ** (n_iters - 1)


def pool_mse_bound(consts: BoundConstants) -> float:
    """MSE bound for any single recycled estimate:
    sum_i mse_consts_i (N - 1)^(-1 - i/2)."""
    n1 = consts.n_candidates - 1
    powers = n1 ** -(1.0 + np.arange(3) / 2.0)
    return float(consts.mse_consts @ powers)


def pool_cov_bound(consts: BoundConstants, lag: int) -> float:
    """Lag covariance bound:
    rate^(lag - 1) sum_i cov_consts_i (N - 1)^(-(3 - i/2)/2)."""
    if lag < 1:
        raise ValueError("lag must be at least 1")
    n1 = consts.n_candidates - 1
    powers = n1 ** -((3.0 - np.arange(3) / 2.0) / 2.0)
    return consts.rate ** (lag - 1) * float(consts.cov_consts @ powers)


def _kept_samples(consts: BoundConstants, burn_in: int, n_iters: int) -> int:
    if not 0 <= burn_in < n_iters:
        raise ValueError("burn_in must lie in [0, n_iters)")
    return (n_iters - burn_in) * (consts.n_candidates - 1)


def rolling_bias_bound(consts: BoundConstants, burn_in: int, n_iters: int) -> float:
    """Bias bound for the burn-in averaged estimator:
    rolling_bias_const (kept samples)^-1 4^(-k0 / T)."""
    kept = _kept_samples(consts, burn_in, n_iters)
    return consts.rolling_bias_const / kept * 4.0 ** (-burn_in / consts.t_mix)


def rolling_mse_bound(consts: BoundConstants, burn_in: int, n_iters: int) -> float:
    """MSE bound for the burn-in averaged estimator:
    4 kappa / kept + (rolling mse polynomial) / (kept sqrt(N - 1))."""
    kept = _kept_samples(consts, burn_in, n_iters)
    n1 = consts.n_candidates - 1
    poly = (consts.rolling_mse_consts[0]
            + consts.rolling_mse_consts[1] * n1 ** -0.25
            + consts.rolling_mse_consts[2] / n1)
    return 4.0 * consts.kappa / kept + poly / (kept * np.sqrt(n1))


def rolling_hpd_bound(consts: BoundConstants, delta: float, burn_in: int,
                      n_iters: int) -> float:
    """Deviation bound holding with probability at least 1 - delta:
    664 omega (kept samples)^(-1/2) sqrt(ln(4 / delta))."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    kept = _kept_samples(consts, burn_in, n_iters)
    return consts.hpd_const * kept ** -0.5 * math.sqrt(math.log(4.0 / delta))
