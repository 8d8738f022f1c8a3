"""Deterministic random streams, stable log-space helpers, bracketed root
finding, and multivariate Gaussian kernels shared by all samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.special
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import brentq

from .errors import BracketError, DegenerateWeightsError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (master_seed, path).

    The stream's output is a pure function of the master seed and the index
    path; streams with distinct paths are statistically independent.  A
    stream is value-like: `generator()` always returns a fresh generator in
    the same initial state, so consuming sibling streams in any order never
    changes what an individual stream produces.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        path = tuple(int(i) for i in self.path)
        if any(i < 0 for i in path):
            raise ValueError("stream path entries must be non-negative integers")
        object.__setattr__(self, "path", path)

    def child(self, *indices: int) -> "RngStream":
        """Derive a sub-stream by extending the path."""
        return RngStream(self.master_seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Fresh counter-based generator in this stream's initial state."""
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(stream: RngLike) -> np.random.Generator:
    """Accept either an RngStream or an already-live numpy Generator.

    Run-level entry points derive one generator per call and thread it
    through their inner loops, so repeated kernel invocations inside a run
    draw fresh randomness while the run as a whole stays replayable.
    """
    if isinstance(stream, RngStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RngStream or numpy Generator, got {type(stream)!r}")


def logsumexp(values) -> float:
    """log(sum(exp(values))) for a non-empty vector, stable under shifts.

    Entries may be -inf (treated as absent) but at least one must be finite;
    +inf and NaN are rejected.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("logsumexp expects a non-empty 1-d vector")
    if np.any(np.isposinf(v)) or np.any(np.isnan(v)):
        raise ValueError("logsumexp entries must lie in [-inf, +inf)")
    if not np.any(np.isfinite(v)):
        raise ValueError("logsumexp requires at least one finite entry")
    return float(scipy.special.logsumexp(v))


def effective_sample_size(log_weights) -> float:
    """(sum w)^2 / sum(w^2) of unnormalized log weights, computed in log space.

    Lies in [1, n]; invariant to adding a constant to every log weight.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("expected a non-empty 1-d vector of log weights")
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all log weights are -inf")
    ess = math.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw))
    return float(min(max(ess, 1.0), lw.size))


def brent_root(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10
) -> float:
    """Root of a continuous scalar function on a sign-changing bracket.

    Returns x with |f(x)| <= tol or final bracket width <= tol; every
    evaluation stays inside [lo, hi].  Raises BracketError when
    f(lo) * f(hi) > 0 and ValueError on non-finite function values.
    """
    if not (lo < hi):
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def checked(x: float) -> float:
        value = f(x)
        if not np.isfinite(value):
            raise ValueError(f"non-finite function value {value} at x={x}")
        return value

    f_lo = checked(lo)
    f_hi = checked(hi)
    if abs(f_lo) <= tol and f_lo * f_hi <= 0:
        return float(lo)
    if abs(f_hi) <= tol and f_lo * f_hi <= 0:
        return float(hi)
    if f_lo * f_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")
    return float(brentq(checked, lo, hi, xtol=tol))


@dataclass(frozen=True)
class GaussianParams:
    """A multivariate normal given by its mean and either a diagonal
    covariance (vector of variances) or a dense covariance held as its
    lower-triangular Cholesky factor, computed once at construction."""

    mean: np.ndarray
    variances: np.ndarray | None = None
    chol: np.ndarray | None = None

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1:
            raise ValueError("mean must be a 1-d vector")
        object.__setattr__(self, "mean", mean)
        if (self.variances is None) == (self.chol is None):
            raise ValueError("provide exactly one of variances or chol")
        if self.variances is not None:
            var = np.asarray(self.variances, dtype=float)
            if var.shape != mean.shape:
                raise ValueError("variances must match the mean's length")
            if not np.all(var > 0):
                raise ValueError("all variances must be strictly positive")
            object.__setattr__(self, "variances", var)
        else:
            chol = np.asarray(self.chol, dtype=float)
            d = mean.size
            if chol.shape != (d, d):
                raise ValueError("chol must be a (d, d) lower-triangular factor")
            if not np.all(np.diag(chol) > 0):
                raise ValueError("chol must have a strictly positive diagonal")
            object.__setattr__(self, "chol", chol)

    @classmethod
    def diagonal(cls, mean, variances) -> "GaussianParams":
        return cls(mean=np.asarray(mean, dtype=float), variances=variances)

    @classmethod
    def full(cls, mean, covariance) -> "GaussianParams":
        """Factor a dense SPD covariance once and keep the factor."""
        cov = np.asarray(covariance, dtype=float)
        return cls(mean=np.asarray(mean, dtype=float), chol=cholesky(cov, lower=True))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_det_cov(self) -> float:
        if self.variances is not None:
            return float(np.sum(np.log(self.variances)))
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {np.shape(x)}")
    return pts, single


def gaussian_logpdf(x, params: GaussianParams):
    """Exact log-density of the multivariate normal at x ((d,) or (n, d))."""
    pts, single = _as_points(x, params.dim)
    centered = pts - params.mean
    if params.variances is not None:
        quad = np.sum(centered * centered / params.variances, axis=1)
    else:
        u = solve_triangular(params.chol, centered.T, lower=True)
        quad = np.sum(u * u, axis=0)
    out = -0.5 * (params.dim * LOG_2PI + params.log_det_cov() + quad)
    return float(out[0]) if single else out


def gaussian_logpdf_and_grad(x, params: GaussianParams):
    """Log-density and its gradient Sigma^{-1} (mean - x) at x."""
    pts, single = _as_points(x, params.dim)
    centered = pts - params.mean
    if params.variances is not None:
        scaled = centered / params.variances
        quad = np.sum(centered * scaled, axis=1)
        grad = -scaled
    else:
        u = solve_triangular(params.chol, centered.T, lower=True)
        quad = np.sum(u * u, axis=0)
        grad = -solve_triangular(params.chol.T, u, lower=False).T
    logp = -0.5 * (params.dim * LOG_2PI + params.log_det_cov() + quad)
    if single:
        return float(logp[0]), grad[0]
    return logp, grad


def gaussian_sample(stream: RngLike, params: GaussianParams, n: int) -> np.ndarray:
    """n i.i.d. draws, reproducible given (stream, params, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(stream)
    z = rng.standard_normal((int(n), params.dim))
    if params.variances is not None:
        return params.mean + z * np.sqrt(params.variances)
    return params.mean + z @ params.chol.T


@dataclass(frozen=True)
class DensityOracle:
    """Black-box unnormalized log-density with gradient.

    This is the only interface samplers receive.  All callables are
    vectorized: they accept an (n, d) array and return (n,) / (n, d).
    """

    logpdf: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    logpdf_and_grad: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

    @classmethod
    def from_gaussian(cls, params: GaussianParams) -> "DensityOracle":
        return cls(
            logpdf=lambda x: gaussian_logpdf(x, params),
            grad=lambda x: gaussian_logpdf_and_grad(x, params)[1],
            logpdf_and_grad=lambda x: gaussian_logpdf_and_grad(x, params),
        )
