"""Geometric density interpolation between a tractable Gaussian base and an
unnormalized target, shared by the sequential and parallel annealing samplers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    DensityOracle,
    GaussianParams,
    gaussian_logpdf,
    gaussian_logpdf_and_grad,
)


@dataclass(frozen=True)
class GeometricPath:
    """The bridge family p_beta proportional to base^(1-beta) * target^beta.

    beta = 0 recovers the base density exactly and beta = 1 the target.
    """

    base: GaussianParams
    target: DensityOracle

    def components_and_grads(self, x):
        """Base/target log-densities and gradients at x, evaluated together."""
        log_b, grad_b = gaussian_logpdf_and_grad(x, self.base)
        log_t, grad_t = self.target.logpdf_and_grad(x)
        return np.asarray(log_b, float), np.asarray(log_t, float), grad_b, grad_t

    def log_ratio(self, x) -> np.ndarray:
        """log target - log base at each point; the tempering direction."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.target.logpdf(pts), float) - np.asarray(
            gaussian_logpdf(pts, self.base), float
        )

    def at(self, beta: float) -> DensityOracle:
        """Oracle for the tempered density at a fixed inverse temperature."""
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

        def logpdf_and_grad(x):
            log_b, log_t, grad_b, grad_t = self.components_and_grads(x)
            logp = (1.0 - beta) * log_b + beta * log_t
            grad = (1.0 - beta) * grad_b + beta * grad_t
            return logp, grad

        return DensityOracle(
            logpdf=lambda x: logpdf_and_grad(x)[0],
            grad=lambda x: logpdf_and_grad(x)[1],
            logpdf_and_grad=logpdf_and_grad,
        )

    def ladder_oracle(self, betas: np.ndarray) -> DensityOracle:
        """Row-wise tempered oracle: row k of the input is evaluated under
        beta_k, which lets a whole ladder of chains advance in lockstep."""
        betas = np.asarray(betas, dtype=float)

        def logpdf_and_grad(x):
            if x.shape[0] != betas.size:
                raise ValueError("row count must match the ladder size")
            log_b, log_t, grad_b, grad_t = self.components_and_grads(x)
            logp = (1.0 - betas) * log_b + betas * log_t
            grad = (1.0 - betas)[:, None] * grad_b + betas[:, None] * grad_t
            return logp, grad

        return DensityOracle(
            logpdf=lambda x: logpdf_and_grad(x)[0],
            grad=lambda x: logpdf_and_grad(x)[1],
            logpdf_and_grad=logpdf_and_grad,
        )
