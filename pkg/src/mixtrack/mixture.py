"""Gaussian mixtures stored as stacked arrays, plus the JSON corpus format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mixtrack.gaussian import (
    Gaussian,
    WeightedGaussian,
    check_covariance,
    kl_divergence,
    moment_match,
    symmetrize,
)

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of ``n`` Gaussians sharing dimension ``d``.

    ``weights`` has shape (n,), ``means`` (n, d) and ``covs`` (n, d, d).
    Weights are only required to sum to one when ``normalized`` is set.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        cov = np.array(self.covs, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if cov.ndim == 1:
            cov = cov[:, None, None]
        n = w.size
        if n < 1:
            raise ValueError("a mixture needs at least one component")
        if mu.shape[0] != n or cov.shape[0] != n:
            raise ValueError("weights, means and covs disagree on the number of components")
        d = mu.shape[1]
        if cov.shape[1:] != (d, d):
            raise ValueError(f"covariance stack shape {cov.shape} does not match dimension {d}")
        if np.any(~np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        if self.normalized and abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        check_covariance(cov)
        for a in (w, mu, cov):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)

    @classmethod
    def from_components(cls, weights: Sequence[float], components: Iterable[Gaussian], normalized=True):
        comps = list(components)
        return cls(
            np.asarray(weights, dtype=float),
            np.stack([c.mean for c in comps]),
            np.stack([c.cov for c in comps]),
            normalized=normalized,
        )

    @classmethod
    def single(cls, g: Gaussian) -> "GaussianMixture":
        return cls(np.ones(1), g.mean[None], g.cov[None])

    def __len__(self):
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[Gaussian]:
        return [Gaussian(m, c) for m, c in zip(self.means, self.covs)]

    def weighted(self) -> list[WeightedGaussian]:
        return [WeightedGaussian(float(w), g) for w, g in zip(self.weights, self.components)]

    def logdets(self) -> np.ndarray:
        return np.linalg.slogdet(self.covs)[1]

    def subset(self, idx, renormalize: bool = True) -> "GaussianMixture":
        """Keep components ``idx`` (in the given order)."""
        idx = np.asarray(idx, dtype=int)
        w = self.weights[idx]
        if renormalize:
            w = w / w.sum()
        return GaussianMixture(w, self.means[idx], self.covs[idx], normalized=renormalize)

    def renormalized(self) -> "GaussianMixture":
        return GaussianMixture(self.weights / self.weights.sum(), self.means, self.covs)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Log density at each row of ``x`` (shape (m, d))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        chol = np.linalg.cholesky(self.covs)
        half_logdet = np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        diff = x[None, :, :] - self.means[:, None, :]
        # solve L r = diff for every component
        r = np.linalg.solve(chol[:, None], diff[..., None])[..., 0]
        maha = (r * r).sum(axis=-1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        terms = logw[:, None] - 0.5 * (self.dim * np.log(2 * np.pi) + maha) - half_logdet[:, None]
        top = terms.max(axis=0)
        return top + np.log(np.exp(terms - top).sum(axis=0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.weights / self.weights.sum()
        labels = rng.choice(len(self), size=size, p=p)
        chol = np.linalg.cholesky(self.covs)
        z = rng.standard_normal((size, self.dim))
        return self.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "components": [
                {"mean": m.tolist(), "cov": c.tolist()} for m, c in zip(self.means, self.covs)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        try:
            dim = int(data["dim"])
            weights = data["weights"]
            comps = data["components"]
            means = np.array([c["mean"] for c in comps], dtype=float)
            covs = np.array([c["cov"] for c in comps], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed mixture record: {exc}") from exc
        if means.ndim != 2 or means.shape[1] != dim:
            raise ValueError(f"component means do not have dimension {dim}")
        if len(weights) != len(comps):
            raise ValueError("weights and components differ in length")
        return cls(np.asarray(weights, dtype=float), means, covs)


def load_mixture(path) -> GaussianMixture:
    with open(path) as fh:
        return GaussianMixture.from_dict(json.load(fh))


def save_mixture(p: GaussianMixture, path) -> None:
    Path(path).write_text(json.dumps(p.to_dict(), indent=2))


def moments_of_arrays(w: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    total = w.sum()
    mean = w @ mu / total
    dev = mu - mean
    c = (np.einsum("i,ijk->jk", w, cov) + np.einsum("i,ij,ik->jk", w, dev, dev)) / total
    return mean, symmetrize(c)


def mixture_moments(p: GaussianMixture) -> Gaussian:
    """Mean and covariance of the whole mixture, as a single Gaussian."""
    if len(p) == 1:
        return Gaussian(p.means[0], p.covs[0])
    return Gaussian(*moments_of_arrays(p.weights, p.means, p.covs))


def barycenter_cost(p: GaussianMixture) -> float:
    """Weight-normalized KL cost of collapsing ``p`` into its global barycenter."""
    if len(p) == 1:
        return 0.0
    bary = mixture_moments(p)
    kl = np.array([kl_divergence(g, bary) for g in p.components])
    return float(p.weights @ kl / p.weights.sum())


__all__ = [
    "GaussianMixture",
    "barycenter_cost",
    "load_mixture",
    "mixture_moments",
    "moments_of_arrays",
    "save_mixture",
]
