"""The iterated sampling-importance-resampling Markov kernel and chain runner.

One kernel step inserts the current state at a uniformly random slot of an
N-point candidate pool, fills the remaining slots with fresh proposal draws,
and selects the next state by one categorical draw over the normalized pool
weights.  Every pool also yields a recycled estimate: the self-normalized
estimate over all N candidates, which is what the rolling estimators
average.

Random-stream contract of one sequential step: insertion index, then N-1
proposal draws, then one selection uniform.  ``run_chains`` is a batched
runner that is distributionally equivalent but interleaves draws across
chains (one shared generator); it is the fast path for replicated studies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import ModelSpec, TestFunction
from .snis import WeightedSampleSet, normalize_weights, snis_estimate


@dataclass(frozen=True)
class WeightedPool:
    """One candidate pool: points, log weights, cached f values, state slot."""

    points: np.ndarray
    log_weights: np.ndarray
    f_values: np.ndarray
    insertion_index: int

    def __post_init__(self):
        n = len(self.points)
        if n < 2:
            raise ValueError("a pool needs at least 2 candidates")
        if len(self.log_weights) != n or len(self.f_values) != n:
            raise ValueError("pool arrays must share one length")
        if not 0 <= self.insertion_index < n:
            raise ValueError("insertion_index out of range")


@dataclass(frozen=True)
class ChainConfig:
    """Pool size, iteration count and the initial-state policy.

    ``init`` is ``"proposal"`` (one fresh proposal draw, the default cold
    start), ``"target"`` (requires the model's exact target sampler), or an
    explicit point.
    """

    n_candidates: int
    n_iters: int
    init: Union[str, np.ndarray] = "proposal"

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError("n_candidates must be at least 2")
        if self.n_iters < 1:
            raise ValueError("n_iters must be at least 1")
        if isinstance(self.init, str):
            if self.init not in ("proposal", "target"):
                raise ValueError("init must be 'proposal', 'target' or a point")
        else:
            object.__setattr__(self, "init", np.asarray(self.init, dtype=float))


@dataclass(frozen=True)
class ChainTrace:
    """States Y_0..Y_k, per-iteration recycled estimates, optional pools."""

    states: np.ndarray
    recycled_estimates: np.ndarray
    pools: Optional[list] = None


def categorical_draw(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector.

    Uses a single uniform u and returns the smallest index whose cumulative
    weight reaches u, which fixes the tie rule deterministically.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must form a probability vector")
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, rng.random(), side="left"))
    return min(idx, weights.size - 1)


def isir_step(model: ModelSpec, y: np.ndarray, f: TestFunction, n_candidates: int,
              rng: np.random.Generator,
              y_log_weight: Optional[float] = None,
              y_f_value: Optional[float] = None) -> tuple[np.ndarray, WeightedPool]:
    """One kernel step from state ``y``; returns the new state and the pool.

    ``y_log_weight``/``y_f_value`` short-circuit re-evaluating the carried
    state when the caller already holds its cached values.
    """
    new_y, _, pool = _step(model, y, f, n_candidates, rng, y_log_weight, y_f_value)
    return new_y, pool


def _step(model, y, f, n_candidates, rng, y_log_weight=None, y_f_value=None):
    y = np.asarray(y, dtype=float).ravel()
    slot = int(rng.integers(n_candidates))
    fresh = model.propose(rng, n_candidates - 1)
    if y_log_weight is None:
        y_log_weight = float(model.log_weight(y[None, :])[0])
    if y_f_value is None:
        y_f_value = f(y[None, :])[0]
    points = np.insert(fresh, slot, y, axis=0)
    log_weights = np.insert(model.log_weight(fresh), slot, y_log_weight)
    f_values = np.insert(f(fresh), slot, y_f_value, axis=0)
    selected = categorical_draw(normalize_weights(log_weights), rng)
    pool = WeightedPool(points=points, log_weights=log_weights,
                        f_values=f_values, insertion_index=slot)
    return points[selected], selected, pool


def _initial_state(model, cfg, rng):
    if isinstance(cfg.init, np.ndarray):
        return cfg.init.ravel().copy()
    if cfg.init == "target":
        if model.target_sample is None:
            raise ValueError("target-draw start requires model.target_sample")
        return model.target_sample(rng, 1)[0]
    return model.propose(rng, 1)[0]


def run_chain(model: ModelSpec, f: TestFunction, cfg: ChainConfig,
              rng: np.random.Generator, keep_pools: bool = False) -> ChainTrace:
    """Run one chain; recycled_estimates[l] is the pool-l SNIS estimate."""
    y = _initial_state(model, cfg, rng)
    y_lw = float(model.log_weight(y[None, :])[0])
    y_fv = f(y[None, :])[0]
    states = np.empty((cfg.n_iters + 1, model.dim))
    states[0] = y
    recycled = np.empty(cfg.n_iters)
    pools = [] if keep_pools else None
    for step in range(cfg.n_iters):
        y, selected, pool = _step(model, y, f, cfg.n_candidates, rng, y_lw, y_fv)
        y_lw = float(pool.log_weights[selected])
        y_fv = pool.f_values[selected]
        states[step + 1] = y
        recycled[step] = snis_estimate(WeightedSampleSet(pool.log_weights,
                                                         pool.f_values))
        if keep_pools:
            pools.append(pool)
    return ChainTrace(states=states, recycled_estimates=recycled, pools=pools)


@dataclass(frozen=True)
class BatchChains:
    """Lockstep chain ensemble: recycled estimates (chains, iters) and states."""

    recycled_estimates: np.ndarray
    states: Optional[np.ndarray] = None


def run_chains(model: ModelSpec, f: TestFunction, n_candidates: int, n_iters: int,
               n_chains: int, rng: np.random.Generator, init: str = "proposal",
               keep_states: bool = False) -> BatchChains:
    """Run many independent chains in lockstep off one shared generator.

    Per iteration the generator consumes all chains' proposal draws, then all
    selection uniforms; the insertion slot is not drawn because every output
    here (recycled estimates, selected states) is invariant to the pool
    layout.  Distributionally this matches ``run_chain`` per chain.
    """
    if init == "target":
        if model.target_sample is None:
            raise ValueError("target-draw start requires model.target_sample")
        y = model.target_sample(rng, n_chains)
    elif init == "proposal":
        y = model.propose(rng, n_chains)
    else:
        raise ValueError("init must be 'proposal' or 'target'")
    state_lw = model.log_weight(y)
    state_fv = f(y)
    m = n_candidates - 1
    recycled = np.empty((n_chains, n_iters))
    states = None
    if keep_states:
        states = np.empty((n_chains, n_iters + 1, model.dim))
        states[:, 0] = y
    for step in range(n_iters):
        fresh = model.propose(rng, n_chains * m)
        lw = model.log_weight(fresh).reshape(n_chains, m)
        fv = f(fresh).reshape(n_chains, m)
        shift = np.maximum(lw.max(axis=1), state_lw)
        w_fresh = np.exp(lw - shift[:, None])
        w_state = np.exp(state_lw - shift)
        total = w_fresh.sum(axis=1) + w_state
        recycled[:, step] = (w_state * state_fv +
                             (w_fresh * fv).sum(axis=1)) / total
        u = rng.random(n_chains) * total
        cum = np.cumsum(np.concatenate([w_state[:, None], w_fresh], axis=1), axis=1)
        pick = (cum < u[:, None]).sum(axis=1)
        moved = np.nonzero(pick > 0)[0]
        cols = pick[moved] - 1
        state_lw[moved] = lw[moved, cols]
        state_fv[moved] = fv[moved, cols]
        if keep_states:
            y = y.copy()
            y[moved] = fresh.reshape(n_chains, m, model.dim)[moved, cols]
            states[:, step + 1] = y
    return BatchChains(recycled_estimates=recycled, states=states)


@dataclass(frozen=True)
class KeyRelationResult:
    """Monte Carlo check of the one-step pool-mean identity."""

    empirical_mean: float
    closed_form: float
    z_score: float
    std_error: float


def key_relation_check(model: ModelSpec, f: TestFunction, y: np.ndarray,
                       n_candidates: int, replications: int,
                       rng: np.random.Generator,
                       mc_draws: int = 10 ** 6) -> KeyRelationResult:
    """Check E[u_N f] over pools from state ``y`` against its closed form.

    The unnormalized pool statistic u_N f = N^-1 sum_i w(x_i) f(x_i), with
    w taken as exp(log_weight) directly, has one-step conditional mean
    (1 - 1/N) lambda(w f) + (1/N) w(y) f(y).  Both sides are estimated by
    Monte Carlo (lambda(w f) from ``mc_draws`` fresh proposal points) and the
    z-score combines both standard errors.
    """
    if n_candidates < 2:
        raise ValueError("n_candidates must be at least 2")
    y = np.asarray(y, dtype=float).ravel()
    n = n_candidates
    wy_fy = float(np.exp(model.log_weight(y[None, :])[0]) * f(y[None, :])[0])

    fresh = model.propose(rng, replications * (n - 1))
    wf = np.exp(model.log_weight(fresh)) * f(fresh)
    pool_stats = (wy_fy + wf.reshape(replications, n - 1).sum(axis=1)) / n
    empirical = float(pool_stats.mean())
    emp_var = float(pool_stats.var(ddof=1)) / replications

    ref = model.propose(rng, mc_draws)
    wf_ref = np.exp(model.log_weight(ref)) * f(ref)
    lam_wf = float(wf_ref.mean())
    lam_var = float(wf_ref.var(ddof=1)) / mc_draws
    closed = (1.0 - 1.0 / n) * lam_wf + wy_fy / n

    se = float(np.sqrt(emp_var + (1.0 - 1.0 / n) ** 2 * lam_var))
    z = (empirical - closed) / se if se > 0 else 0.0
    return KeyRelationResult(empirical_mean=empirical, closed_form=closed,
                             z_score=float(z), std_error=se)
