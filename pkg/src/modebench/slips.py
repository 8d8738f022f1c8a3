"""Diffusion sampler driven by on-the-fly posterior-mean estimation:
Euler-Maruyama integration of the generative observation SDE, with the
drift estimated at each step by a short warm-started Langevin chain on the
tilted posterior."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .mala import ChainState, adapt_step, mala_step
from .numerics import DensityOracle, RngLike, RngStream, as_generator
from .target import MixtureTarget

DEFAULT_T0_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class SlipsConfig:
    """Observation-process and inner-chain settings.

    sigma = None selects the scale-matching default
    sqrt((||mean||^2 + sum of marginal variances) / d) at run time; t0 =
    None means the start time still has to be tuned (see tune_t0).
    """

    sigma: float | None = None
    t0: float | None = None
    t1: float = 0.99
    n_steps: int = 512
    inner_steps: int = 5
    inner_lambda_init: float = 1e-2
    target_accept: float = 0.75
    adapt_rate: float = 0.05
    t0_grid: tuple[float, ...] = DEFAULT_T0_GRID
    n_pilot: int = 128

    def __post_init__(self) -> None:
        if self.t0 is not None and not 0.0 < self.t0 < self.t1:
            raise ValueError("need 0 < t0 < t1")
        if not 0.0 < self.t1 < 1.0:
            raise ValueError("t1 must lie in (0, 1)")
        if self.n_steps < 1 or self.inner_steps < 0:
            raise ValueError("invalid step counts")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.inner_lambda_init > 0:
            raise ValueError("inner_lambda_init must be > 0")


def alpha_geom(t: float) -> tuple[float, float]:
    """Scale function sqrt(t / (1 - t)) of the observation process and its
    time derivative, valid on (0, 1)."""
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    alpha = math.sqrt(t / (1.0 - t))
    alpha_dot = 1.0 / (2.0 * math.sqrt(t) * (1.0 - t) ** 1.5)
    return alpha, alpha_dot


def posterior_logpdf_grad(
    oracle: DensityOracle, y, t: float, alpha: float, sigma: float, x
):
    """Tilted-posterior log-density log N(y; alpha x, sigma^2 t I) +
    log gamma(x) and its gradient in x.

    y may be a single point or one row per row of x.
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    pts = np.atleast_2d(x_arr)
    obs = np.atleast_2d(np.asarray(y, dtype=float))
    if obs.shape[1] != pts.shape[1]:
        raise ValueError("y and x dimensions disagree")
    noise_var = sigma * sigma * t
    d = pts.shape[1]
    resid = obs - alpha * pts
    log_lik = -0.5 * (
        d * math.log(2.0 * math.pi * noise_var) + np.sum(resid * resid, axis=1) / noise_var
    )
    log_prior, grad_prior = oracle.logpdf_and_grad(pts)
    logq = log_lik + np.asarray(log_prior, dtype=float)
    grad = (alpha / noise_var) * resid + grad_prior
    if single:
        return float(logq[0]), grad[0]
    return logq, grad


def posterior_oracle(
    oracle: DensityOracle, y, t: float, alpha: float, sigma: float
) -> DensityOracle:
    """Row-wise oracle for the tilted posterior at a fixed observation batch."""

    def logpdf_and_grad(x):
        return posterior_logpdf_grad(oracle, y, t, alpha, sigma, x)

    return DensityOracle(
        logpdf=lambda x: logpdf_and_grad(x)[0],
        grad=lambda x: logpdf_and_grad(x)[1],
        logpdf_and_grad=logpdf_and_grad,
    )


@dataclass
class ObservationState:
    """Current observation batch, time, and the persistent inner chain."""

    y: np.ndarray  # (n, d)
    t: float
    warm_chain: ChainState


def estimate_drift(
    oracle: DensityOracle,
    state: ObservationState,
    config: SlipsConfig,
    stream: RngLike,
) -> tuple[np.ndarray, ChainState]:
    """Posterior-mean estimate at the current (y, t) by inner Langevin moves.

    The warm chain's caches are refreshed against the posterior at the
    current time and observation, advanced `inner_steps` steps (step sizes
    keep adapting), and the running mean of the visited states is returned
    together with the persistent chain.  With inner_steps = 0 the current
    chain position is returned unchanged.
    """
    sigma = config.sigma
    if sigma is None:
        raise ValueError("config.sigma must be resolved before drift estimation")
    alpha, _ = alpha_geom(state.t)
    post = posterior_oracle(oracle, state.y, state.t, alpha, sigma)
    chain = state.warm_chain.refresh(post)
    if config.inner_steps == 0:
        return chain.x.copy(), chain
    rng = as_generator(stream)
    total = np.zeros_like(chain.x)
    for _ in range(config.inner_steps):
        chain, accepted = mala_step(chain, post, rng)
        chain.lam = adapt_step(chain.lam, accepted, config.target_accept, config.adapt_rate)
        total += chain.x
    return total / config.inner_steps, chain


def init_observation(
    moments: tuple[np.ndarray, np.ndarray],
    t0: float,
    sigma: float,
    stream: RngLike,
    n: int = 1,
) -> np.ndarray:
    """Draws of the observation at the start time under a Gaussian
    moment-matched surrogate of the target: N(alpha(t0) m, alpha(t0)^2
    diag(V) + sigma^2 t0 I).  Returns an (n, d) array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mean, var = moments
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    alpha0, _ = alpha_geom(t0)
    rng = as_generator(stream)
    std = np.sqrt(alpha0 * alpha0 * var + sigma * sigma * t0)
    return alpha0 * mean + rng.standard_normal((int(n), mean.size)) * std


def default_sigma(moments: tuple[np.ndarray, np.ndarray]) -> float:
    """Scale-matching observation noise: the root mean square size of the
    target, sqrt((||mean||^2 + sum of marginal variances) / d)."""
    mean, var = moments
    mean = np.asarray(mean, dtype=float)
    return math.sqrt((float(mean @ mean) + float(np.sum(var))) / mean.size)


def _surrogate_posterior_mean(
    moments: tuple[np.ndarray, np.ndarray], y: np.ndarray, t: float, sigma: float
) -> np.ndarray:
    """Posterior mean under the Gaussian surrogate prior; used to seed the
    inner chain at a sensible scale."""
    mean, var = moments
    alpha, _ = alpha_geom(t)
    lik_prec = alpha * alpha / (sigma * sigma * t)
    prec = 1.0 / np.asarray(var, dtype=float) + lik_prec
    return (np.asarray(mean, dtype=float) / var + (alpha / (sigma * sigma * t)) * y) / prec


def run_slips(
    oracle: DensityOracle,
    moments: tuple[np.ndarray, np.ndarray],
    config: SlipsConfig,
    stream: RngLike,
    n_trajectories: int = 1,
) -> tuple[np.ndarray, dict]:
    """Simulate the generative SDE and return rescaled terminal samples.

    Trajectories advance in lockstep on the uniform time grid over
    [t0, t1]: at each step the drift is estimated by the persistent inner
    chain, then y <- y + alpha_dot(t) u dt + sigma sqrt(dt) z.  The output
    is y(t1) / alpha(t1), one row per trajectory.
    """
    if config.t0 is None:
        raise ValueError("config.t0 is unset; tune it or set it explicitly")
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    sigma = config.sigma if config.sigma is not None else default_sigma(moments)
    rng = as_generator(stream)
    t0, t1 = config.t0, config.t1

    y = init_observation(moments, t0, sigma, rng, n=n_trajectories)
    x0 = _surrogate_posterior_mean(moments, y, t0, sigma)
    alpha0, _ = alpha_geom(t0)
    post0 = posterior_oracle(oracle, y, t0, alpha0, sigma)
    state = ObservationState(
        y=y, t=t0, warm_chain=ChainState.from_positions(x0, post0, config.inner_lambda_init)
    )

    resolved = replace(config, sigma=sigma)
    dt = (t1 - t0) / config.n_steps
    sqrt_dt = math.sqrt(dt)
    for k in range(config.n_steps):
        state.t = t0 + k * dt
        u, chain = estimate_drift(oracle, state, resolved, rng)
        _, alpha_dot = alpha_geom(state.t)
        noise = rng.standard_normal(state.y.shape)
        state.y = state.y + alpha_dot * u * dt + sigma * sqrt_dt * noise
        state.warm_chain = chain

    alpha1, _ = alpha_geom(t1)
    samples = state.y / alpha1
    diagnostics = {
        "sigma": sigma,
        "t0": t0,
        "t1": t1,
        "inner_accept_rate": (
            state.warm_chain.accept_count / state.warm_chain.step_count
            if state.warm_chain.step_count
            else None
        ),
        "final_inner_lambda_mean": float(np.mean(state.warm_chain.lam)),
    }
    return samples, diagnostics


def tune_t0(
    target: MixtureTarget,
    candidate_grid,
    pilot_config: SlipsConfig,
    stream: RngStream,
    oracle_w1: float | None = None,
) -> tuple[float, dict]:
    """Pick the start time whose pilot mode-weight estimate is closest to
    the ground truth (privileged: consults the exact sampler).

    Ties break to the smallest candidate.  Returns the winner and a
    diagnostics dict with per-candidate pilot errors.
    """
    candidates = sorted(float(c) for c in candidate_grid)
    if not candidates:
        raise ValueError("candidate grid is empty")
    if any(not 0.0 < c < pilot_config.t1 for c in candidates):
        raise ValueError("candidates must lie in (0, t1)")
    if oracle_w1 is None:
        oracle_w1 = target.true_mode_weight(1_000_000, stream.child(0))[0]
    oracle = target.oracle()
    moments = target.moments()
    errors = []
    for i, cand in enumerate(candidates):
        cfg = replace(pilot_config, t0=cand)
        samples, _ = run_slips(
            oracle, moments, cfg, stream.child(1 + i), n_trajectories=pilot_config.n_pilot
        )
        estimate = float(np.mean(target.mode_of(samples) == 1))
        errors.append(abs(estimate - oracle_w1))
    best = int(np.argmin(errors))  # argmin takes the first of ties; grid is sorted
    return candidates[best], {
        "candidates": candidates,
        "pilot_errors": errors,
        "oracle_w1": oracle_w1,
    }
