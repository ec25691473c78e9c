"""Weight normalization and the self-normalized importance sampling estimator.

All weight handling goes through max-shifted exponentiation so that only
relative log weights matter.  The estimator's closed-form bias, MSE and
high-probability bounds (valid for test functions bounded by 1) live here as
pure formula evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateWeightsError(ValueError):
    """All log weights are -inf: the sample carries no usable mass."""


@dataclass(frozen=True)
class WeightedSampleSet:
    """Cached log weights and test-function values for one sample batch.

    ``f_values`` may be ``(n,)`` for a scalar test function or ``(n, q)``
    for ``q`` functions sharing the same weights.
    """

    log_weights: np.ndarray
    f_values: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float).ravel()
        fv = np.asarray(self.f_values, dtype=float)
        if fv.ndim not in (1, 2):
            raise ValueError("f_values must be one- or two-dimensional")
        if lw.shape[0] < 1 or fv.shape[0] != lw.shape[0]:
            raise ValueError("log_weights and f_values must share a positive length")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "f_values", fv)


def normalize_weights(log_weights: np.ndarray) -> np.ndarray:
    """Normalize log weights to a probability vector.

    Entries of ``-inf`` contribute zero weight.  Raises
    ``DegenerateWeightsError`` when no entry is finite.
    """
    lw = np.asarray(log_weights, dtype=float).ravel()
    if lw.size == 0:
        raise DegenerateWeightsError("degenerate weights: empty input")
    m = np.max(lw)
    if not np.isfinite(m):
        raise DegenerateWeightsError("degenerate weights: all log weights are -inf")
    w = np.exp(lw - m)
    return w / w.sum()


def snis_estimate(sample_set: WeightedSampleSet) -> float | np.ndarray:
    """Self-normalized importance sampling estimate.

    Returns a float for scalar ``f_values`` and an array of per-column
    estimates for matrix-valued ``f_values``.  The weighted sum uses numpy's
    pairwise accumulation, keeping the floating error negligible against
    bias measurements even for very large sample counts.
    """
    weights = normalize_weights(sample_set.log_weights)
    fv = sample_set.f_values
    if fv.ndim == 1:
        return float(np.sum(weights * fv))
    return np.sum(weights[:, None] * fv, axis=0)


def snis_bias_bound(kappa: float, n_samples: int) -> float:
    """Closed-form bias bound 12 kappa / M for sup|f| <= 1."""
    _check_kappa_m(kappa, n_samples)
    return 12.0 * kappa / n_samples


def snis_mse_bound(kappa: float, n_samples: int) -> float:
    """Closed-form MSE bound 4 kappa / M for sup|f| <= 1."""
    _check_kappa_m(kappa, n_samples)
    return 4.0 * kappa / n_samples


def snis_hpd_bound(omega: float, n_samples: int, delta: float) -> float:
    """High-probability deviation bound 12 omega (M ln 2)^(-1/2) sqrt(ln(2/delta)).

    Holds with probability at least 1 - delta for sup|f| <= 1.
    """
    if not omega >= 1:
        raise ValueError("omega must be at least 1")
    if n_samples <= 1:
        raise ValueError("n_samples must exceed 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return 12.0 * omega * (n_samples * np.log(2.0)) ** -0.5 * np.sqrt(np.log(2.0 / delta))


def _check_kappa_m(kappa: float, n_samples: int):
    if not kappa >= 1:
        raise ValueError("kappa must be at least 1")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
