"""Direct estimators: self-normalized importance sampling with a
moment-matched Gaussian proposal, and diagonal-Gaussian variational
inference by reparameterized stochastic gradients on the exclusive KL."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.special

from .errors import DegenerateWeightsError
from .numerics import (
    DensityOracle,
    GaussianParams,
    RngLike,
    as_generator,
    effective_sample_size,
    gaussian_logpdf,
    gaussian_sample,
)


@dataclass(frozen=True)
class ISResult:
    """One self-normalized importance-sampling estimate."""

    estimate: float
    normalized_weights: np.ndarray
    weight_ess: float
    samples: np.ndarray  # the proposal draws behind the estimate


def fit_gaussian_mle(samples) -> GaussianParams:
    """Unrestricted Gaussian maximum likelihood fit (divisor n covariance).

    A covariance that fails to factor is regularized once by adding
    (1e-8 * trace / d) to the diagonal, with a warning.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be an (n, d) matrix")
    n, d = x.shape
    if n <= d:
        raise ValueError(f"need more samples ({n}) than dimensions ({d})")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    try:
        return GaussianParams.full(mean, cov)
    except np.linalg.LinAlgError:
        eps = 1e-8 * max(np.trace(cov), np.finfo(float).tiny) / d
        warnings.warn(
            f"sample covariance is rank deficient; regularizing with {eps:g} * I",
            RuntimeWarning,
            stacklevel=2,
        )
        return GaussianParams.full(mean, cov + eps * np.eye(d))


def is_estimate(
    oracle: DensityOracle,
    proposal: GaussianParams,
    f,
    n: int,
    stream: RngLike,
) -> ISResult:
    """Self-normalized importance estimate of E[f] under the target.

    `f` maps an (n, d) sample matrix to (n,) values.  The estimate is the
    ratio sum(w f) / sum(w) over normalized weights, so f == 1 returns
    exactly 1 and the result is invariant to constant shifts of the target
    log-density.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    x = gaussian_sample(stream, proposal, n)
    log_w = np.asarray(oracle.logpdf(x), dtype=float) - gaussian_logpdf(x, proposal)
    if not np.any(np.isfinite(log_w)):
        raise DegenerateWeightsError("every importance weight vanished")
    weight_ess = effective_sample_size(log_w)
    w = np.exp(log_w - scipy.special.logsumexp(log_w))
    fx = np.asarray(f(x), dtype=float)
    estimate = float(np.sum(w * fx) / np.sum(w))
    return ISResult(
        estimate=estimate, normalized_weights=w, weight_ess=weight_ess, samples=x
    )


@dataclass
class ViParams:
    """Diagonal Gaussian variational parameters: mean and log standard
    deviations (optimizing in log scale keeps the variances positive)."""

    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.mu.shape != self.rho.shape or self.mu.ndim != 1:
            raise ValueError("mu and rho must be 1-d vectors of equal length")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.rho))):
            raise ValueError("variational parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mu.size

    def to_gaussian(self) -> GaussianParams:
        return GaussianParams.diagonal(self.mu, np.exp(2.0 * self.rho))

    def entropy(self) -> float:
        return 0.5 * self.dim * (1.0 + math.log(2.0 * math.pi)) + float(np.sum(self.rho))


def vi_loss_and_grad(
    params: ViParams, oracle: DensityOracle, batch_size: int, stream: RngLike
) -> tuple[float, np.ndarray, np.ndarray]:
    """Monte Carlo exclusive-KL loss and its reparameterization gradients.

    With x = mu + exp(rho) * z, the loss is -entropy - mean(log gamma(x));
    the entropy term is analytic, so only the cross term is stochastic:
    grad_mu = -mean(grad log gamma(x)) and
    grad_rho_i = -1 - mean(grad log gamma(x)_i * exp(rho_i) * z_i).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = as_generator(stream)
    z = rng.standard_normal((int(batch_size), params.dim))
    scale = np.exp(params.rho)
    x = params.mu + scale * z
    logp, grad = oracle.logpdf_and_grad(x)
    loss = -params.entropy() - float(np.mean(logp))
    grad_mu = -np.mean(grad, axis=0)
    grad_rho = -1.0 - np.mean(grad * scale * z, axis=0)
    return loss, grad_mu, grad_rho


def vi_optimize(
    oracle: DensityOracle,
    init: ViParams,
    stream: RngLike,
    iters: int = 2048,
    batch_size: int = 2048,
    learning_rate: float = 1e-2,
) -> tuple[ViParams, dict]:
    """Adam-driven stochastic minimization of the exclusive KL.

    Returns the final parameters and a diagnostics dict with the loss
    trace.  Aborts with RuntimeError if the loss turns non-finite.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    rng = as_generator(stream)
    theta = np.concatenate([init.mu, init.rho])
    d = init.dim
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    losses = []
    for step in range(1, iters + 1):
        params = ViParams(mu=theta[:d], rho=theta[d:])
        loss, g_mu, g_rho = vi_loss_and_grad(params, oracle, batch_size, rng)
        if not math.isfinite(loss):
            raise RuntimeError(f"variational loss became non-finite at iteration {step}")
        losses.append(loss)
        g = np.concatenate([g_mu, g_rho])
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        theta = theta - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    final = ViParams(mu=theta[:d], rho=theta[d:])
    return final, {"loss_trace": losses}
