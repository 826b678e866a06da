"""Closed-form Gaussian primitives.

Densities, forward KL divergence, the moment-matching merge and the pairwise
merge cost used by greedy mixture reduction. Every object here is immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))
KL_CLAMP = 1e-12
SYMMETRY_RTOL = 1e-9


class NotPositiveDefiniteError(ValueError):
    pass


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_covariance(cov: np.ndarray) -> np.ndarray:
    """Return the lower Cholesky factor of ``cov`` or raise.

    Works on a single matrix or a stack of matrices.
    """
    if cov.ndim < 2 or cov.shape[-1] != cov.shape[-2]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefiniteError("covariance has non-finite entries")
    asym = np.abs(cov - np.swapaxes(cov, -1, -2)).max(axis=(-1, -2))
    scale = np.abs(cov).max(axis=(-1, -2))
    if np.any(asym > SYMMETRY_RTOL * np.maximum(scale, 1.0)):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class Gaussian:
    """d-dimensional normal density with SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean dimension {mean.size}"
            )
        chol = check_covariance(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        self.__dict__["chol"] = chol

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def chol(self) -> np.ndarray:  # set eagerly in __post_init__
        return np.linalg.cholesky(self.cov)

    @cached_property
    def logdet(self) -> float:
        return float(2.0 * np.log(np.diag(self.chol)).sum())

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Apply the inverse covariance to ``b``."""
        return cho_solve((self.chol, True), b)

    def mahalanobis2(self, x: np.ndarray) -> float:
        r = solve_triangular(self.chol, np.asarray(x, dtype=float) - self.mean, lower=True)
        return float(r @ r)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.chol.T

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class WeightedGaussian:
    weight: float
    component: Gaussian

    def __post_init__(self):
        if not self.weight >= 0.0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")


def _same_dim(a: Gaussian, b: Gaussian) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def log_density(x, g: Gaussian) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != g.dim:
        raise ValueError(f"dimension mismatch: point has {x.size}, Gaussian has {g.dim}")
    return -0.5 * (g.dim * LOG_2PI + g.logdet + g.mahalanobis2(x))


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """Forward KL divergence KL(p || q) between two Gaussians.

    Tiny negative values caused by rounding are clamped to zero.
    """
    _same_dim(p, q)
    diff = p.mean - q.mean
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    a = solve_triangular(q.chol, p.chol, lower=True)
    r = solve_triangular(q.chol, diff, lower=True)
    terms = ((a * a).sum(), r @ r, -p.dim, q.logdet - p.logdet)
    val = 0.5 * sum(terms)
    if val < 0.0:
        scale = max(1.0, sum(abs(t) for t in terms))
        if val < -KL_CLAMP * scale:
            raise FloatingPointError(f"negative KL divergence {val}")
        return 0.0
    return float(val)


def moment_match(parts: Sequence[WeightedGaussian]) -> Gaussian:
    """KL barycenter of a weighted set of Gaussians (moment-preserving merge)."""
    if len(parts) == 0:
        raise ValueError("cannot merge an empty set of components")
    d = parts[0].component.dim
    for p in parts[1:]:
        _same_dim(parts[0].component, p.component)
    w = np.array([p.weight for p in parts], dtype=float)
    total = w.sum()
    if not total > 0.0:
        raise ValueError("total weight must be positive")
    if len(parts) == 1:
        return parts[0].component
    means = np.stack([p.component.mean for p in parts])
    covs = np.stack([p.component.cov for p in parts])
    mu = w @ means / total
    dev = means - mu
    cov = (np.einsum("i,ijk->jk", w, covs) + np.einsum("i,ij,ik->jk", w, dev, dev)) / total
    return Gaussian(mu.reshape(d), symmetrize(cov))


def merge_cost(a: WeightedGaussian, b: WeightedGaussian) -> float:
    """Weighted KL cost of replacing ``a`` and ``b`` by their barycenter."""
    _same_dim(a.component, b.component)
    if a.weight + b.weight == 0.0:
        return 0.0
    bary = moment_match([a, b])
    return a.weight * kl_divergence(a.component, bary) + b.weight * kl_divergence(
        b.component, bary
    )


def batch_merge_costs(wa, mua, cova, lda, wb, mub, covb, ldb) -> np.ndarray:
    """Merge costs for aligned (or broadcastable) stacks of weighted components.

    For a moment-matched merge the trace and quadratic terms of the two KL
    divergences add up to exactly ``(wa + wb) * d``, leaving only log
    determinants: ``B = 0.5 * (W log|S| - wa log|Sa| - wb log|Sb|)``.
    """
    wa = np.asarray(wa, dtype=float)
    wb = np.asarray(wb, dtype=float)
    total = wa + wb
    safe = np.where(total > 0.0, total, 1.0)
    a = (wa / safe)[..., None, None]
    b = (wb / safe)[..., None, None]
    diff = mub - mua
    merged = a * cova + b * covb + a * b * diff[..., :, None] * diff[..., None, :]
    ld = np.linalg.slogdet(merged)[1]
    cost = 0.5 * (total * ld - wa * lda - wb * ldb)
    cost = np.where(total > 0.0, cost, 0.0)
    return np.maximum(cost, 0.0)
