"""Burn-in averaged estimators over recycled pool estimates, plus the
sample-reusing bootstrap wrapper.

The rolling estimator averages the per-iteration recycled estimates of a
chain after discarding a burn-in prefix.  The bootstrap wrapper re-runs the
selection dynamics over random permutations of one cached bank of proposal
samples, so after the bank is built it never touches the model again; the
chain state carries over from round to round, which lets the selection
dynamics keep mixing across rounds while each round contributes its
final-window average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .isir import ChainConfig, ChainTrace, run_chain
from .model import ModelSpec, TestFunction


@dataclass(frozen=True)
class RollingConfig:
    """Pool size N, iteration count k and burn-in k0 (0 <= k0 < k).

    ``budget`` is the number of fresh proposal samples consumed by the chain
    itself, (N - 1) k; ``kept_fraction`` is (k - k0) / k.
    """

    n_candidates: int
    n_iters: int
    burn_in: int

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError("n_candidates must be at least 2")
        if self.n_iters < 1:
            raise ValueError("n_iters must be at least 1")
        if not 0 <= self.burn_in < self.n_iters:
            raise ValueError("burn_in must lie in [0, n_iters)")

    @property
    def budget(self) -> int:
        return (self.n_candidates - 1) * self.n_iters

    @property
    def kept_fraction(self) -> float:
        return (self.n_iters - self.burn_in) / self.n_iters


def rolling_estimate(trace: ChainTrace, burn_in: int) -> float:
    """Mean of the recycled estimates after the burn-in prefix."""
    recycled = trace.recycled_estimates
    if not 0 <= burn_in < len(recycled):
        raise ValueError("burn_in must lie in [0, number of iterations)")
    return float(np.mean(recycled[burn_in:], axis=0))


def br_snis(model: ModelSpec, f: TestFunction, cfg: RollingConfig,
            rng: np.random.Generator) -> float:
    """Run a cold-start chain and return its burn-in averaged estimate.

    Consumes exactly cfg.budget proposal draws plus one initial draw.
    """
    trace = run_chain(model, f,
                      ChainConfig(cfg.n_candidates, cfg.n_iters, "proposal"), rng)
    return rolling_estimate(trace, cfg.burn_in)


# ---------------------------------------------------------------------------
# Bootstrap over a cached sample bank
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CachedSampleBank:
    """M cached proposal triples (point, log weight, f value) plus one
    reserved initial-state triple.

    ``f_values`` may be ``(M,)`` or ``(M, q)`` for q test functions sharing
    the weights.  Arrays are frozen after construction.
    """

    points: np.ndarray
    log_weights: np.ndarray
    f_values: np.ndarray
    initial_point: np.ndarray
    initial_log_weight: float
    initial_f_value: float | np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        lw = np.asarray(self.log_weights, dtype=float).ravel()
        fv = np.asarray(self.f_values, dtype=float)
        if len(pts) != len(lw) or len(fv) != len(lw):
            raise ValueError("bank arrays must share one length")
        for arr, name in ((pts, "points"), (lw, "log_weights"), (fv, "f_values")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return len(self.log_weights)


def build_sample_bank(model: ModelSpec, f: TestFunction, n_samples: int,
                      rng: np.random.Generator) -> CachedSampleBank:
    """Draw and cache n_samples proposal triples plus the reserved initial one."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    pts = model.propose(rng, n_samples)
    init = model.propose(rng, 1)
    return CachedSampleBank(
        points=pts,
        log_weights=model.log_weight(pts),
        f_values=f(pts),
        initial_point=init[0],
        initial_log_weight=float(model.log_weight(init)[0]),
        initial_f_value=f(init)[0],
    )


def bootstrap_br_snis(bank: CachedSampleBank, cfg: RollingConfig, rounds: int,
                      rng: np.random.Generator,
                      continue_chain: bool = True) -> float | np.ndarray:
    """Permutation-averaged replay of the selection dynamics over a bank.

    Each round draws a fresh uniform permutation of the M cached triples,
    partitions it into k segments of N - 1, and replays the chain: every
    iteration's pool is the segment plus the carried state, the recycled
    estimates past the burn-in are averaged into the round's value, and the
    next state is selected by one categorical draw on the cached weights.
    The returned value is the arithmetic mean over rounds.  No model
    evaluation happens here; everything runs off the cached triples.

    With ``continue_chain`` (the default) the state carries over between
    rounds so the selection dynamics keep mixing across the whole replay;
    the reserved triple seeds round one.  With ``continue_chain=False``
    every round restarts from the reserved triple.

    Random-stream contract per round: one permutation of M indices, then k
    selection uniforms.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    m_total = bank.size
    n, k, k0 = cfg.n_candidates, cfg.n_iters, cfg.burn_in
    if (n - 1) * k != m_total:
        raise ValueError(f"bank of size {m_total} does not match "
                         f"(N - 1) k = {(n - 1) * k}")
    multi = bank.f_values.ndim == 2
    # One global max shift keeps every exp() in [0, 1]; entries far below the
    # shift underflow to zero weight, which is the intended semantics.
    shift = max(float(bank.log_weights.max()), bank.initial_log_weight)
    bw = np.exp(bank.log_weights - shift)
    state_w = float(np.exp(bank.initial_log_weight - shift))
    state_f = bank.initial_f_value
    kept = k - k0
    round_means = np.empty((rounds, bank.f_values.shape[1])) if multi \
        else np.empty(rounds)
    for rnd in range(rounds):
        perm = rng.permutation(m_total)
        seg_w = bw[perm].reshape(k, n - 1)
        seg_f = bank.f_values[perm].reshape((k, n - 1, -1) if multi else (k, n - 1))
        cum = np.cumsum(seg_w, axis=1)
        us = rng.random(k)
        if not continue_chain:
            state_w = float(np.exp(bank.initial_log_weight - shift))
            state_f = bank.initial_f_value
        acc = 0.0
        for step in range(k):
            total = cum[step, -1] + state_w
            if step >= k0:
                acc = acc + (state_w * state_f + seg_w[step] @ seg_f[step]) / total
            u = us[step] * total
            if u > state_w:
                pick = min(int(np.searchsorted(cum[step], u - state_w,
                                               side="left")), n - 2)
                state_w = float(seg_w[step, pick])
                state_f = seg_f[step, pick]
        round_means[rnd] = acc / kept
    result = round_means.mean(axis=0)
    return result if multi else float(result)


def bootstrap_replay_batch(bank_log_weights: np.ndarray, bank_f_values: np.ndarray,
                           initial_log_weight: np.ndarray,
                           initial_f_value: np.ndarray,
                           n_candidates: int, burn_in: int, rounds: int,
                           rng: np.random.Generator,
                           continue_chain: bool = True,
                           single_precision: bool = False) -> np.ndarray:
    """Vectorized bootstrap replay across many replications at once.

    ``bank_log_weights``/``bank_f_values`` are ``(R, M)`` stacks of per-
    replication banks, the initial arrays are length R.  Returns the R
    bootstrap estimates.  Distributionally equivalent to per-replication
    ``bootstrap_br_snis`` calls; the shared generator consumes, per round,
    R row permutations then k batches of R selection uniforms.

    ``single_precision`` stores the shuffled weight/value pairs in 32-bit
    floats, halving the per-round shuffle traffic; use it when a relative
    error around 1e-7 per estimate is acceptable.
    """
    lw = np.asarray(bank_log_weights, dtype=float)
    fv = np.asarray(bank_f_values, dtype=float)
    n_rep, m_total = lw.shape
    n, k0 = n_candidates, burn_in
    if m_total % (n - 1):
        raise ValueError("bank size must be a multiple of N - 1")
    k = m_total // (n - 1)
    if not 0 <= k0 < k:
        raise ValueError("burn_in must lie in [0, k)")
    shift = np.maximum(lw.max(axis=1), initial_log_weight)
    # Weight/value pairs ride in one complex array so each round costs a
    # single shuffle pass instead of an index shuffle plus two gathers.
    paired = np.exp(lw - shift[:, None]) + 1j * fv
    if single_precision:
        paired = paired.astype(np.complex64)
    buffer = np.empty_like(paired)
    state_w = np.exp(np.asarray(initial_log_weight) - shift)
    state_f = np.asarray(initial_f_value, dtype=float).copy()
    rows = np.arange(n_rep)
    acc_rounds = np.zeros(n_rep)
    init_w, init_f = state_w.copy(), state_f.copy()
    for _ in range(rounds):
        rng.permuted(paired, axis=1, out=buffer)
        seg_w = buffer.real.reshape(n_rep, k, n - 1)
        seg_f = buffer.imag.reshape(n_rep, k, n - 1)
        sums = seg_w.sum(axis=2)
        us = rng.random((k, n_rep))
        if not continue_chain:
            state_w, state_f = init_w.copy(), init_f.copy()
        acc = np.zeros(n_rep)
        for step in range(k):
            w_step = seg_w[:, step, :]
            total = sums[:, step] + state_w
            if step >= k0:
                acc += (state_w * state_f +
                        np.einsum("ij,ij->i", w_step, seg_f[:, step, :])) / total
            cum = np.cumsum(w_step, axis=1)
            u = us[step] * total - state_w
            pick = np.minimum((cum < u[:, None]).sum(axis=1), n - 2)
            moved = u > 0
            state_w = np.where(moved, w_step[rows, pick], state_w)
            state_f = np.where(moved, seg_f[:, step, :][rows, pick], state_f)
        acc_rounds += acc / (k - k0)
    return acc_rounds / rounds
