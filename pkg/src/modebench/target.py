"""Bi-modal Gaussian mixture target family: construction, mode partition,
analytic moments, privileged exact samplers, and the analytic posterior-mean
oracle for noisy linear observations of the target."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from .numerics import (
    LOG_2PI,
    DensityOracle,
    GaussianParams,
    RngLike,
    as_generator,
    gaussian_logpdf,
)

DEFAULT_FIRST_WEIGHT = 2.0 / 3.0


@dataclass(frozen=True)
class TargetSpec:
    """Parameters of the benchmark mixture: dimension, mode half-separation,
    first-mode weight, and the marginal-variance range."""

    d: int
    a: float
    w: float = DEFAULT_FIRST_WEIGHT
    sigma_min_sq: float = 0.01
    sigma_max_sq: float = 0.2

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if not self.a > 0:
            raise ValueError("mode half-separation a must be > 0")
        if not 0.0 < self.w < 1.0:
            raise ValueError("first-mode weight w must lie in (0, 1)")
        if not 0.0 < self.sigma_min_sq <= self.sigma_max_sq:
            raise ValueError("require 0 < sigma_min_sq <= sigma_max_sq")


@dataclass(frozen=True)
class MixtureTarget:
    """Two-component Gaussian mixture with diagonal covariances.

    Instances are normally built via `build_target`; tests may construct
    degenerate variants directly (e.g. coincident means or equal
    covariances).  Immutable and safe for concurrent use.
    """

    mu1: np.ndarray
    mu2: np.ndarray
    sigma1: np.ndarray  # per-coordinate variances of the first component
    sigma2: np.ndarray
    log_w1: float
    log_w2: float
    spec: TargetSpec | None = None

    def __post_init__(self) -> None:
        for name in ("mu1", "mu2", "sigma1", "sigma2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = self.mu1.size
        if not (self.mu2.size == self.sigma1.size == self.sigma2.size == d):
            raise ValueError("component parameter lengths disagree")
        if not (np.all(self.sigma1 > 0) and np.all(self.sigma2 > 0)):
            raise ValueError("component variances must be strictly positive")

    @property
    def d(self) -> int:
        return self.mu1.size

    def _points(self, x) -> tuple[np.ndarray, bool]:
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise ValueError(f"expected dimension {self.d}, got shape {np.shape(x)}")
        return pts, single

    def _component_logpdfs(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unweighted log N(x; mu_k, Sigma_k) for both components, (n,) each."""
        out = []
        for mu, var in ((self.mu1, self.sigma1), (self.mu2, self.sigma2)):
            c = pts - mu
            quad = np.sum(c * c / var, axis=1)
            out.append(-0.5 * (self.d * LOG_2PI + np.sum(np.log(var)) + quad))
        return out[0], out[1]

    def log_gamma(self, x):
        """Log of the mixture density; finite for all finite x."""
        pts, single = self._points(x)
        lq1, lq2 = self._component_logpdfs(pts)
        stacked = np.stack([self.log_w1 + lq1, self.log_w2 + lq2])
        out = scipy.special.logsumexp(stacked, axis=0)
        return float(out[0]) if single else out

    def log_gamma_and_grad(self, x):
        """Mixture log-density and its exact gradient.

        The gradient is the responsibility-weighted sum of component
        gradients Sigma_k^{-1} (mu_k - x), with responsibilities formed in
        log space so far tails stay finite.
        """
        pts, single = self._points(x)
        lq1, lq2 = self._component_logpdfs(pts)
        weighted = np.stack([self.log_w1 + lq1, self.log_w2 + lq2])
        logz = scipy.special.logsumexp(weighted, axis=0)
        resp = np.exp(weighted - logz)  # (2, n)
        g1 = (self.mu1 - pts) / self.sigma1
        g2 = (self.mu2 - pts) / self.sigma2
        grad = resp[0][:, None] * g1 + resp[1][:, None] * g2
        if single:
            return float(logz[0]), grad[0]
        return logz, grad

    def grad_log_gamma(self, x):
        return self.log_gamma_and_grad(x)[1]

    def oracle(self) -> DensityOracle:
        """The (log gamma, grad log gamma) interface handed to samplers.

        Everything else on this class (exact sampling, moments, the
        partition, the posterior mean) is privileged evaluation-side
        machinery that samplers must not see.
        """
        return DensityOracle(
            logpdf=self.log_gamma,
            grad=self.grad_log_gamma,
            logpdf_and_grad=self.log_gamma_and_grad,
        )

    def mode_of(self, x):
        """Partition label: 1 where q1(x) > q2(x) strictly, else 2."""
        pts, single = self._points(x)
        lq1, lq2 = self._component_logpdfs(pts)
        labels = np.where(lq1 > lq2, 1, 2)
        return int(labels[0]) if single else labels

    def _mixture_sample(self, n: int, stream: RngLike, first_weight: float) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = as_generator(stream)
        pick_first = rng.random(int(n)) < first_weight
        z = rng.standard_normal((int(n), self.d))
        x1 = self.mu1 + z * np.sqrt(self.sigma1)
        x2 = self.mu2 + z * np.sqrt(self.sigma2)
        return np.where(pick_first[:, None], x1, x2)

    def exact_sample(self, n: int, stream: RngLike) -> np.ndarray:
        """Privileged i.i.d. draws from the mixture (oracle use only)."""
        return self._mixture_sample(n, stream, math.exp(self.log_w1))

    def equilibrated_sample(self, n: int, stream: RngLike) -> np.ndarray:
        """Draws from the same components with weights forced to (1/2, 1/2)."""
        return self._mixture_sample(n, stream, 0.5)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact mean and per-coordinate marginal variances of the mixture."""
        w1 = math.exp(self.log_w1)
        w2 = math.exp(self.log_w2)
        mean = w1 * self.mu1 + w2 * self.mu2
        var = w1 * (self.sigma1 + (self.mu1 - mean) ** 2) + w2 * (
            self.sigma2 + (self.mu2 - mean) ** 2
        )
        return mean, var

    def moment_params(self) -> GaussianParams:
        """Moment-matched diagonal Gaussian N(mean, marginal variances)."""
        mean, var = self.moments()
        return GaussianParams.diagonal(mean, var)

    def true_mode_weight(
        self, n_oracle: int, stream: RngLike, chunk_size: int = 1_000_000
    ) -> tuple[float, float]:
        """Monte Carlo estimate of the first-mode weight with its standard error.

        Weights are normalized to sum to one across the two partition
        elements, so this is simply the fraction of exact draws in the
        first element.
        """
        n_oracle = int(n_oracle)
        if n_oracle < 10_000:
            raise ValueError("n_oracle must be >= 10^4")
        rng = as_generator(stream)
        hits = 0
        remaining = n_oracle
        while remaining > 0:
            m = min(chunk_size, remaining)
            x = self.exact_sample(m, rng)
            hits += int(np.count_nonzero(self.mode_of(x) == 1))
            remaining -= m
        p = hits / n_oracle
        se = math.sqrt(max(p * (1.0 - p), 0.0) / n_oracle)
        return p, se

    def posterior_mean_oracle(self, y, t: float, alpha: float, sigma: float):
        """Exact E[X | Y = y] for the observation Y = alpha X + sigma W_t.

        Closed form for the Gaussian-mixture prior: per component, combine
        prior precision with the likelihood precision alpha^2/(sigma^2 t);
        mix the component posterior means with weights proportional to
        w_k N(y; alpha mu_k, alpha^2 Sigma_k + sigma^2 t I), in log space.
        """
        if not t > 0:
            raise ValueError("t must be > 0")
        if not (alpha > 0 and sigma > 0):
            raise ValueError("alpha and sigma must be > 0")
        pts, single = self._points(y)
        lik_prec = alpha * alpha / (sigma * sigma * t)
        log_weights = []
        cond_means = []
        for log_w, mu, var in (
            (self.log_w1, self.mu1, self.sigma1),
            (self.log_w2, self.mu2, self.sigma2),
        ):
            marg = GaussianParams.diagonal(alpha * mu, alpha * alpha * var + sigma * sigma * t)
            log_weights.append(log_w + gaussian_logpdf(pts, marg))
            prec = 1.0 / var + lik_prec
            cond_means.append((mu / var + (alpha / (sigma * sigma * t)) * pts) / prec)
        stacked = np.stack(log_weights)  # (2, n)
        resp = np.exp(stacked - scipy.special.logsumexp(stacked, axis=0))
        out = resp[0][:, None] * cond_means[0] + resp[1][:, None] * cond_means[1]
        return out[0] if single else out


def build_target(spec: TargetSpec) -> MixtureTarget:
    """Construct the benchmark mixture from its spec.

    The first component's variances ramp linearly from near sigma_min_sq to
    sigma_max_sq across coordinates; the second component uses the same
    values in reversed coordinate order, so each component is wide exactly
    where the other is narrow.
    """
    i = np.arange(1, spec.d + 1, dtype=float)
    sigma1 = (i / spec.d) * spec.sigma_max_sq + ((spec.d - i) / spec.d) * spec.sigma_min_sq
    sigma2 = sigma1[::-1].copy()
    ones = np.ones(spec.d)
    return MixtureTarget(
        mu1=-spec.a * ones,
        mu2=spec.a * ones,
        sigma1=sigma1,
        sigma2=sigma2,
        log_w1=math.log(spec.w),
        log_w2=math.log1p(-spec.w),
        spec=spec,
    )
