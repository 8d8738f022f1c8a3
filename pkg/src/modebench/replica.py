"""Parallel tempering across a fixed log-spaced ladder of tempered
densities, with pairwise state swaps of alternating parity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anneal import GeometricPath
from .mala import ChainState, adapt_step, mala_step
from .numerics import (
    DensityOracle,
    GaussianParams,
    RngLike,
    RngStream,
    as_generator,
    gaussian_sample,
)


@dataclass(frozen=True)
class LadderConfig:
    """Ladder geometry and per-instance run lengths."""

    n_levels: int = 64  # number of intermediate steps; the ladder has n_levels + 1 chains
    epsilon: float = 1e-5
    swap_interval: int = 8
    n_warmup: int = 16384
    n_steps: int = 32768
    thinning: int = 8
    n_instances: int = 16
    lambda_init: float = 1e-2
    target_accept: float = 0.75
    adapt_rate: float = 0.05

    def __post_init__(self) -> None:
        # n_levels = 0 is the degenerate single-chain ladder (plain MCMC on
        # the target), useful as a reduction check.
        if self.n_levels < 0:
            raise ValueError("n_levels must be >= 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.swap_interval < 1 or self.thinning < 1 or self.n_instances < 1:
            raise ValueError("swap_interval, thinning and n_instances must be >= 1")
        if self.n_warmup < 0 or self.n_steps < 1:
            raise ValueError("need n_warmup >= 0 and n_steps >= 1")


def build_schedule(n_levels: int, epsilon: float) -> np.ndarray:
    """Log-spaced inverse temperatures 1 - epsilon^(k/K), k = 0..K.

    The formula leaves the last value at 1 - epsilon; it is forced to
    exactly 1 so the top chain targets the unnormalized density itself.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    k = np.arange(n_levels + 1, dtype=float)
    betas = 1.0 - epsilon ** (k / n_levels)
    betas[-1] = 1.0
    if not np.all(np.diff(betas) > 0):
        raise ValueError("schedule is not strictly increasing")
    return betas


def swap_probability(
    logp_k_at_xk: float,
    logp_k_at_xk1: float,
    logp_k1_at_xk: float,
    logp_k1_at_xk1: float,
) -> float:
    """Metropolis probability of exchanging the states of adjacent levels.

    Assembled in log space from the four tempered log-densities; non-finite
    inputs yield probability 0.
    """
    values = (logp_k_at_xk, logp_k_at_xk1, logp_k1_at_xk, logp_k1_at_xk1)
    if not all(math.isfinite(v) for v in values):
        return 0.0
    log_ratio = logp_k_at_xk1 + logp_k1_at_xk - logp_k_at_xk - logp_k1_at_xk1
    return math.exp(min(0.0, log_ratio))


@dataclass
class ReplicaState:
    """One instance of the ladder: a lockstep ensemble of chains (row k
    targets the tempered density at betas[k]) plus swap statistics."""

    chain: ChainState  # (K+1, d) ensemble
    betas: np.ndarray  # (K+1,) strictly increasing, 0 at the bottom, 1 at the top
    swap_attempts: np.ndarray | None = None  # (K,) per adjacent pair
    swap_accepts: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_pairs = self.betas.size - 1
        if self.swap_attempts is None:
            self.swap_attempts = np.zeros(n_pairs, dtype=int)
        if self.swap_accepts is None:
            self.swap_accepts = np.zeros(n_pairs, dtype=int)


def swap_sweep(
    state: ReplicaState, path: GeometricPath, parity: int, stream: RngLike
) -> ReplicaState:
    """Attempt independent swaps over the disjoint pairs of one parity.

    parity 0 selects pairs (0,1), (2,3), ...; parity 1 selects (1,2),
    (3,4), ....  A swap exchanges positions together with their cached
    log-densities and gradients, recombined per level afterwards; the
    multiset of positions across the ladder never changes.
    """
    if parity not in (0, 1):
        raise ValueError("parity must be 0 or 1")
    rng = as_generator(stream)
    betas = state.betas
    n_chains = betas.size
    firsts = np.arange(parity, n_chains - 1, 2)
    if firsts.size == 0:
        return state

    log_b, log_t, grad_b, grad_t = path.components_and_grads(state.chain.x)
    # log p_k(x) = (1-beta_k) log base(x) + beta_k log target(x); the swap
    # ratio reduces to (beta_{k+1} - beta_k) * (r_k - r_{k+1}) with
    # r = log target - log base.
    r = log_t - log_b
    log_ratio = (betas[firsts + 1] - betas[firsts]) * (r[firsts] - r[firsts + 1])
    finite = np.isfinite(r[firsts]) & np.isfinite(r[firsts + 1])
    do_swap = finite & (np.log(rng.random(firsts.size)) < log_ratio)

    state.swap_attempts[firsts] += 1
    if np.any(do_swap):
        lo = firsts[do_swap]
        hi = lo + 1
        for arr in (state.chain.x, log_b, log_t, grad_b, grad_t):
            arr[lo], arr[hi] = arr[hi].copy(), arr[lo].copy()
        state.swap_accepts[lo] += 1
        state.chain.log_gamma_x = (1.0 - betas) * log_b + betas * log_t
        state.chain.grad_x = (1.0 - betas)[:, None] * grad_b + betas[:, None] * grad_t
    return state


def run_re(
    oracle: DensityOracle,
    init: GaussianParams,
    config: LadderConfig,
    stream: RngStream,
    n_out: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Pooled top-level samples from independent parallel-tempering instances.

    Each instance advances all ladder levels in lockstep with the Langevin
    kernel (per-level step sizes adapt during warm-up, frozen afterwards)
    and attempts a swap sweep of alternating parity every swap_interval
    steps, during warm-up and sampling alike.  After warm-up the top chain
    is recorded with the configured thinning; instance pools are then
    uniformly subsampled without replacement down to n_out when requested.
    """
    path = GeometricPath(base=init, target=oracle)
    if config.n_levels == 0:
        betas = np.array([1.0])
    else:
        betas = build_schedule(config.n_levels, config.epsilon)
    ladder = path.ladder_oracle(betas)
    n_chains = betas.size

    pooled = []
    attempts = np.zeros(n_chains - 1, dtype=int)
    accepts = np.zeros(n_chains - 1, dtype=int)
    for instance in range(config.n_instances):
        rng = stream.child(instance).generator()
        positions = gaussian_sample(rng, init, n_chains)
        state = ReplicaState(
            chain=ChainState.from_positions(positions, ladder, config.lambda_init),
            betas=betas,
        )
        kept = np.empty((config.n_steps // config.thinning, positions.shape[1]))
        kept_count = 0
        sweep_index = 0
        for step in range(config.n_warmup + config.n_steps):
            state.chain, accepted = mala_step(state.chain, ladder, rng)
            if step < config.n_warmup:
                state.chain.lam = adapt_step(
                    state.chain.lam, accepted, config.target_accept, config.adapt_rate
                )
            if (step + 1) % config.swap_interval == 0:
                state = swap_sweep(state, path, sweep_index % 2, rng)
                sweep_index += 1
            post = step - config.n_warmup
            if post >= 0 and (post + 1) % config.thinning == 0:
                kept[kept_count] = state.chain.x[-1]
                kept_count += 1
        pooled.append(kept[:kept_count])
        attempts += state.swap_attempts
        accepts += state.swap_accepts

    samples = np.concatenate(pooled, axis=0)
    if n_out is not None and n_out < samples.shape[0]:
        idx = stream.generator().choice(samples.shape[0], size=n_out, replace=False)
        samples = samples[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(attempts > 0, accepts / np.maximum(attempts, 1), np.nan)
    diagnostics = {
        "betas": betas.tolist(),
        "swap_accept_rates": rates.tolist(),
        "n_pooled": int(sum(p.shape[0] for p in pooled)),
    }
    return samples, diagnostics
