"""Adaptive sequential Monte Carlo along the geometric path: effective
sample size control of the temperature increments (solved with Brent's
method), multinomial resampling, and Langevin mutation moves."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .anneal import GeometricPath
from .mala import ChainState, adapt_step, mala_step
from .numerics import (
    DensityOracle,
    GaussianParams,
    RngLike,
    as_generator,
    brent_root,
    effective_sample_size,
    gaussian_sample,
)


@dataclass(frozen=True)
class SmcConfig:
    """Particle count and tempering/mutation policy."""

    n_particles: int
    ess_threshold_alpha: float = 0.5
    max_steps: int = 512
    mutation_steps: int = 96
    lambda_init: float = 1e-2
    target_accept: float = 0.75
    adapt_rate: float = 0.05
    conditional_resampling: bool = False  # resample only when ESS < threshold

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 < self.ess_threshold_alpha < 1.0:
            raise ValueError("ess_threshold_alpha must lie in (0, 1)")
        if self.max_steps < 1 or self.mutation_steps < 0:
            raise ValueError("invalid step limits")


@dataclass
class ParticleSystem:
    """Weighted particle population at one inverse temperature."""

    positions: np.ndarray  # (N, d)
    log_weights: np.ndarray  # (N,) unnormalized
    beta: float
    lam: float  # current mutation step size, carried across levels

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights - np.max(self.log_weights)
        w = np.exp(lw)
        return w / np.sum(w)

    def ess(self) -> float:
        return ess(self.log_weights)


def ess(log_weights) -> float:
    """Effective sample size of unnormalized log weights, in [1, N]."""
    return effective_sample_size(log_weights)


def next_beta(log_ratio, beta: float, ess_min: float) -> float:
    """Largest admissible temperature increment under the ESS constraint.

    Incremental weights for a step of size delta are exp(delta * log_ratio).
    If the full jump to 1 keeps the ESS at or above ess_min, returns exactly
    1; otherwise returns beta + delta* where delta* solves ESS(delta) =
    ess_min on [0, 1 - beta] by bracketed root finding.
    """
    log_ratio = np.asarray(log_ratio, dtype=float)
    n = log_ratio.size
    if not beta < 1.0:
        raise ValueError("beta must be < 1")
    if not 1.0 <= ess_min < n:
        raise ValueError("ess_min must lie in [1, N)")
    gap = 1.0 - beta

    def ess_at(delta: float) -> float:
        return effective_sample_size(delta * log_ratio)

    if ess_at(gap) >= ess_min:
        return 1.0
    delta = brent_root(lambda d: ess_at(d) - ess_min, 0.0, gap, tol=1e-10)
    return beta + delta


def reweight(system: ParticleSystem, beta_prime: float, log_ratio) -> ParticleSystem:
    """Multiply weights by the density ratio of the new level to the old."""
    if beta_prime < system.beta:
        raise ValueError("temperature must be non-decreasing")
    increment = (beta_prime - system.beta) * np.asarray(log_ratio, dtype=float)
    return replace(
        system, log_weights=system.log_weights + increment, beta=beta_prime
    )


def resample_multinomial(system: ParticleSystem, stream: RngLike) -> ParticleSystem:
    """Replace the population by N i.i.d. categorical draws; uniform weights."""
    rng = as_generator(stream)
    w = system.normalized_weights()
    edges = np.cumsum(w)
    edges[-1] = 1.0  # guard the last bin against rounding
    idx = np.searchsorted(edges, rng.random(system.n), side="right")
    return replace(
        system,
        positions=system.positions[idx],
        log_weights=np.zeros(system.n),
    )


@dataclass
class SmcResult:
    positions: np.ndarray
    normalized_weights: np.ndarray
    tempering_path: list[float]
    complete: bool
    diagnostics: dict = field(default_factory=dict)


def run_smc(
    oracle: DensityOracle,
    init: GaussianParams,
    config: SmcConfig,
    stream: RngLike,
) -> SmcResult:
    """Full adaptive-tempering run from the base distribution to the target.

    Each level: solve for the next temperature, reweight, resample, then
    mutate every particle with `mutation_steps` Langevin moves targeting the
    new tempered density.  The mutation step size is shared by the
    population, adapted on the mean acceptance, and carried across levels.
    If the temperature has not reached 1 within max_steps the run returns
    flagged incomplete rather than aborting.
    """
    rng = as_generator(stream)
    path = GeometricPath(base=init, target=oracle)
    n = config.n_particles
    system = ParticleSystem(
        positions=gaussian_sample(rng, init, n),
        log_weights=np.zeros(n),
        beta=0.0,
        lam=config.lambda_init,
    )
    ess_min = config.ess_threshold_alpha * n
    betas = [0.0]
    ess_path: list[float] = []
    accept_path: list[float] = []

    while system.beta < 1.0 and len(betas) - 1 < config.max_steps:
        log_ratio = path.log_ratio(system.positions)
        beta_new = next_beta(log_ratio, system.beta, ess_min)
        if beta_new <= system.beta:
            break  # stalled increment; flagged incomplete below
        system = reweight(system, beta_new, log_ratio)
        ess_path.append(system.ess())
        if not config.conditional_resampling or system.ess() < ess_min:
            system = resample_multinomial(system, rng)

        tempered = path.at(system.beta)
        chain = ChainState.from_positions(system.positions, tempered, system.lam)
        accepts = 0
        for _ in range(config.mutation_steps):
            chain, accepted = mala_step(chain, tempered, rng)
            accepts += int(np.count_nonzero(accepted))
            system.lam = float(
                adapt_step(
                    system.lam,
                    float(np.mean(accepted)),
                    config.target_accept,
                    config.adapt_rate,
                )
            )
            chain.lam = np.full(n, system.lam)
        system.positions = chain.x
        betas.append(system.beta)
        if config.mutation_steps:
            accept_path.append(accepts / (n * config.mutation_steps))

    complete = system.beta >= 1.0
    return SmcResult(
        positions=system.positions,
        normalized_weights=system.normalized_weights(),
        tempering_path=betas,
        complete=complete,
        diagnostics={
            "ess_path": ess_path,
            "accept_path": accept_path,
            "final_lambda": system.lam,
            "n_levels": len(betas) - 1,
        },
    )
