"""Langevin proposal MCMC kernel with Metropolis-Hastings correction and
stochastic-approximation step-size adaptation.

The kernel operates on an ensemble of independent chains held in one
ChainState (leading axis = chains), which is how every consumer runs it:
standalone pools of chains, particle mutation, ladder levels, and the inner
chains of the diffusion sampler.  A single chain is the n=1 case.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import DensityOracle, RngLike, as_generator


@dataclass(frozen=True)
class MalaConfig:
    """Step-size policy for a Langevin chain."""

    lambda_init: float = 1e-4
    target_accept: float = 0.75
    adapt_rate: float = 0.05
    adapt: bool = True

    def __post_init__(self) -> None:
        if not self.lambda_init > 0:
            raise ValueError("lambda_init must be > 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not self.adapt_rate > 0:
            raise ValueError("adapt_rate must be > 0")


@dataclass
class ChainState:
    """Positions of an ensemble of chains plus per-chain cached log-density,
    gradient, and step size.  Caches always refer to the current positions."""

    x: np.ndarray  # (n, d)
    log_gamma_x: np.ndarray  # (n,)
    grad_x: np.ndarray  # (n, d)
    lam: np.ndarray  # (n,) step sizes, all > 0
    accept_count: int = 0
    step_count: int = 0
    nonfinite_proposals: int = 0

    @property
    def n_chains(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_positions(
        cls, x, oracle: DensityOracle, lambda_init: float
    ) -> "ChainState":
        """Initialize an ensemble at the given positions ((d,) or (n, d))."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        logp, grad = oracle.logpdf_and_grad(pts)
        lam = np.full(pts.shape[0], float(lambda_init))
        return cls(x=pts, log_gamma_x=np.asarray(logp, float), grad_x=grad, lam=lam)

    def refresh(self, oracle: DensityOracle) -> "ChainState":
        """Recompute caches under a (possibly different) target density."""
        logp, grad = oracle.logpdf_and_grad(self.x)
        return replace(self, log_gamma_x=np.asarray(logp, float), grad_x=grad)


def mala_log_accept(x, logp_x, grad_x, prop, logp_prop, grad_prop, lam):
    """Log Metropolis-Hastings ratio of the Langevin proposal, vectorized.

    The Gaussian transition normalizers cancel, leaving the difference of
    the two quadratic forms; min(1, exp(.)) of the result is the acceptance
    probability, which is exactly 1 when prop == x.
    """
    lam = np.asarray(lam, dtype=float)
    fwd = prop - x - lam[:, None] * grad_x
    rev = x - prop - lam[:, None] * grad_prop
    quad_fwd = np.sum(fwd * fwd, axis=1)
    quad_rev = np.sum(rev * rev, axis=1)
    return logp_prop - logp_x - (quad_rev - quad_fwd) / (4.0 * lam)


def mala_step(
    state: ChainState, oracle: DensityOracle, stream: RngLike
) -> tuple[ChainState, np.ndarray]:
    """One proposal/accept step for every chain in the ensemble.

    Non-finite proposal log-densities behave as probability-zero states and
    are rejected (counted in `nonfinite_proposals`).  Returns the new state
    and the per-chain boolean acceptance vector.
    """
    rng = as_generator(stream)
    lam = state.lam
    z = rng.standard_normal(state.x.shape)
    prop = state.x + lam[:, None] * state.grad_x + np.sqrt(2.0 * lam)[:, None] * z
    logp_prop, grad_prop = oracle.logpdf_and_grad(prop)
    logp_prop = np.asarray(logp_prop, dtype=float)

    finite = np.isfinite(logp_prop)
    log_ratio = np.where(
        finite,
        mala_log_accept(
            state.x, state.log_gamma_x, state.grad_x, prop, logp_prop, grad_prop, lam
        ),
        -np.inf,
    )
    accepted = np.log(rng.random(state.n_chains)) < log_ratio

    keep = accepted[:, None]
    new_state = ChainState(
        x=np.where(keep, prop, state.x),
        log_gamma_x=np.where(accepted, logp_prop, state.log_gamma_x),
        grad_x=np.where(keep, grad_prop, state.grad_x),
        lam=lam,
        accept_count=state.accept_count + int(np.count_nonzero(accepted)),
        step_count=state.step_count + state.n_chains,
        nonfinite_proposals=state.nonfinite_proposals + int(np.count_nonzero(~finite)),
    )
    return new_state, accepted


def adapt_step(lam, accepted, target_accept: float, adapt_rate: float):
    """Multiplicative step-size update on log lambda.

    `accepted` may be a boolean (single chain), a boolean vector (per-chain
    adaptation), or an acceptance fraction in [0, 1] (shared step size
    adapted on the ensemble's mean acceptance).
    """
    acc = np.asarray(accepted, dtype=float)
    return lam * np.exp(adapt_rate * (acc - target_accept))


def run_mala(
    init,
    oracle: DensityOracle,
    config: MalaConfig,
    n_warmup: int,
    n_samples: int,
    stream: RngLike,
) -> np.ndarray:
    """Single-chain run: adaptive warm-up, then a frozen-step trajectory.

    Returns the (n_samples, d) post-warm-up positions.
    """
    traj = run_mala_ensemble(
        np.atleast_2d(np.asarray(init, dtype=float)),
        oracle,
        config,
        n_warmup,
        n_samples,
        stream,
    )[0]
    return traj[0]


def run_mala_ensemble(
    inits,
    oracle: DensityOracle,
    config: MalaConfig,
    n_warmup: int,
    n_samples: int,
    stream: RngLike,
    shared_step: bool = False,
) -> tuple[np.ndarray, ChainState, dict]:
    """Run independent chains in lockstep from the given (m, d) initial points.

    Step sizes adapt during warm-up only (per chain, or on the ensemble's
    mean acceptance when shared_step is set) and are frozen afterwards so
    the recorded trajectory targets the invariant law.  Returns the
    (m, n_samples, d) trajectories, the final state, and diagnostics.
    """
    if n_warmup < 0 or n_samples < 1:
        raise ValueError("need n_warmup >= 0 and n_samples >= 1")
    rng = as_generator(stream)
    state = ChainState.from_positions(inits, oracle, config.lambda_init)
    warm_accepts = 0
    for _ in range(n_warmup):
        state, accepted = mala_step(state, oracle, rng)
        warm_accepts += int(np.count_nonzero(accepted))
        if config.adapt:
            signal = float(np.mean(accepted)) if shared_step else accepted
            state.lam = adapt_step(state.lam, signal, config.target_accept, config.adapt_rate)

    m = state.n_chains
    samples = np.empty((m, n_samples, state.dim))
    sample_accepts = 0
    for i in range(n_samples):
        state, accepted = mala_step(state, oracle, rng)
        sample_accepts += int(np.count_nonzero(accepted))
        samples[:, i, :] = state.x
    diagnostics = {
        "warmup_accept_rate": warm_accepts / (m * n_warmup) if n_warmup else None,
        "sampling_accept_rate": sample_accepts / (m * n_samples),
        "final_lambda_mean": float(np.mean(state.lam)),
        "nonfinite_proposals": state.nonfinite_proposals,
    }
    return samples, state, diagnostics
