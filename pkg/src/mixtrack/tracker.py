"""Single-target multiple hypothesis tracker with Gaussian-mixture posteriors.

The posterior is a ``GaussianMixture`` over (px, py, vx, vy). Each step
predicts every hypothesis, spawns one missed-detection child and one child
per gated measurement, normalizes, and hands the result to a reduction
pipeline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from mixtrack.gaussian import Gaussian, symmetrize
from mixtrack.mixture import GaussianMixture, mixture_moments
from mixtrack.reduction import ReductionPipeline, apply_pipeline
from mixtrack.scenario import Scan, cv_matrices

PosteriorState = GaussianMixture


def gate_threshold(p_gate: float) -> float:
    """Chi-square quantile with 2 degrees of freedom, in closed form."""
    if not 0.0 < p_gate < 1.0:
        raise ValueError(f"gating probability must lie in (0, 1), got {p_gate}")
    return -2.0 * np.log1p(-p_gate)


@dataclass(frozen=True, eq=False)
class TrackerConfig:
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    p_detect: float
    p_gate: float
    clutter_density: float  # false alarms per m^2
    pipeline: ReductionPipeline = field(default_factory=ReductionPipeline)

    def __post_init__(self):
        for name in ("F", "Q", "H", "R"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError(f"detection probability must lie in [0, 1], got {self.p_detect}")
        gate_threshold(self.p_gate)
        if self.clutter_density < 0:
            raise ValueError("clutter density must be nonnegative")
        np.linalg.cholesky(self.R)
        if np.linalg.eigvalsh(symmetrize(self.Q)).min() < -1e-12 * max(1.0, np.abs(self.Q).max()):
            raise ValueError("process noise covariance must be positive semidefinite")

    @classmethod
    def constant_velocity(
        cls,
        q_var: float = 9.0,
        r_var: float = 70.0,
        dt: float = 1.0,
        p_detect: float = 0.9,
        p_gate: float = 0.999,
        clutter_density: float = 0.0,
        pipeline: Optional[ReductionPipeline] = None,
    ) -> "TrackerConfig":
        F, G, H = cv_matrices(dt)
        return cls(
            F, q_var * G @ G.T, H, r_var * np.eye(2), p_detect, p_gate, clutter_density,
            pipeline or ReductionPipeline(),
        )

    @property
    def g2(self) -> float:
        return gate_threshold(self.p_gate)

    def with_pipeline(self, pipeline: ReductionPipeline) -> "TrackerConfig":
        return TrackerConfig(self.F, self.Q, self.H, self.R, self.p_detect, self.p_gate, self.clutter_density, pipeline)


def predict(post: GaussianMixture, cfg: TrackerConfig) -> GaussianMixture:
    means = post.means @ cfg.F.T
    covs = symmetrize(cfg.F @ post.covs @ cfg.F.T + cfg.Q)
    return GaussianMixture(post.weights, means, covs, normalized=post.normalized)


def _innovation_terms(prior: GaussianMixture, cfg: TrackerConfig):
    zhat = prior.means @ cfg.H.T
    S = symmetrize(cfg.H @ prior.covs @ cfg.H.T + cfg.R)
    try:
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    return zhat, S, S_inv


def _mahalanobis2(points: np.ndarray, zhat: np.ndarray, S_inv: np.ndarray) -> np.ndarray:
    """Squared distances, shape (n_components, n_points)."""
    r = points[None, :, :] - zhat[:, None, :]
    return np.einsum("nmi,nij,nmj->nm", r, S_inv, r)


def gate(component: Gaussian, scan: Scan, cfg: TrackerConfig) -> np.ndarray:
    """Indices of the measurements inside the component's validation gate."""
    if len(scan) == 0:
        return np.zeros(0, dtype=int)
    prior = GaussianMixture.single(component)
    zhat, _, S_inv = _innovation_terms(prior, cfg)
    d2 = _mahalanobis2(scan.measurements, zhat, S_inv)[0]
    return np.flatnonzero(d2 <= cfg.g2)


@dataclass
class Expansion:
    """Normalized children of one measurement update, before reduction."""

    mixture: GaussianMixture
    gated: np.ndarray  # gated measurement count per prior component


def expand(prior: GaussianMixture, scan: Scan, cfg: TrackerConfig) -> Expansion:
    """All association hypotheses for one scan, normalized to the simplex.

    Children are ordered by parent, the miss child first and then detection
    children in measurement order.
    """
    n, d = len(prior), prior.dim
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.weights)
        log_miss = np.log((1.0 - cfg.p_detect * cfg.p_gate) * cfg.clutter_density)
        log_pd = np.log(cfg.p_detect)

    z = scan.measurements.reshape(-1, 2)
    if z.shape[0]:
        zhat, S, S_inv = _innovation_terms(prior, cfg)
        d2 = _mahalanobis2(z, zhat, S_inv)
        parent, meas = np.nonzero(d2 <= cfg.g2)
    else:
        parent = meas = np.zeros(0, dtype=int)
    gated = np.bincount(parent, minlength=n)

    child_w = [log_w + log_miss]
    child_mu = [prior.means]
    child_cov = [prior.covs]
    if parent.size:
        _, logdet_S = np.linalg.slogdet(S)
        K = prior.covs @ cfg.H.T @ S_inv  # (n, d, 2)
        P_upd = symmetrize(prior.covs - K @ S @ np.swapaxes(K, 1, 2))
        innov = z[meas] - zhat[parent]
        child_w.append(
            log_w[parent] + log_pd
            - 0.5 * (2.0 * np.log(2.0 * np.pi) + logdet_S[parent] + d2[parent, meas])
        )
        child_mu.append(prior.means[parent] + np.einsum("kij,kj->ki", K[parent], innov))
        child_cov.append(P_upd[parent])
    lw = np.concatenate(child_w)
    mu = np.concatenate(child_mu).reshape(-1, d)
    cov = np.concatenate(child_cov).reshape(-1, d, d)
    rank = np.concatenate([np.zeros(n, dtype=int), meas + 1])
    owner = np.concatenate([np.arange(n), parent])
    order = np.lexsort((rank, owner))

    total = logsumexp(lw)
    if np.isfinite(total):
        w = np.exp(lw - total)
    else:
        # every child has zero likelihood (no clutter and nothing gated)
        w = np.concatenate([prior.weights / prior.weights.sum(), np.zeros(parent.size)])
    w = w / w.sum()
    return Expansion(GaussianMixture(w[order], mu[order], cov[order]), gated)


def update(prior: GaussianMixture, scan: Scan, cfg: TrackerConfig) -> GaussianMixture:
    return apply_pipeline(expand(prior, scan, cfg).mixture, cfg.pipeline)[0]


def mmse_estimate(post: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    g = mixture_moments(post)
    return np.array(g.mean), np.array(g.cov)


def is_track_lost(prior: GaussianMixture, truth: np.ndarray, cfg: TrackerConfig) -> bool:
    """True when the true position lies outside every hypothesis gate."""
    zhat, _, S_inv = _innovation_terms(prior, cfg)
    d2 = _mahalanobis2((cfg.H @ np.asarray(truth, dtype=float))[None, :], zhat, S_inv)[:, 0]
    return bool(np.all(d2 > cfg.g2))


@dataclass
class StepRecord:
    step: int
    n_pre: int
    n_post: int
    avg_gated: float
    estimate: np.ndarray
    lost: bool
    seconds: float


@dataclass
class TrackResult:
    estimates: np.ndarray  # (K, 4), steps 1..K
    lost_steps: np.ndarray  # (K,) bool
    n_post: np.ndarray
    n_pre: np.ndarray
    avg_gated: np.ndarray
    seconds: np.ndarray

    @property
    def lost(self) -> bool:
        return bool(self.lost_steps.any())

    @property
    def first_loss(self) -> Optional[int]:
        hits = np.flatnonzero(self.lost_steps)
        return int(hits[0]) + 1 if hits.size else None

    def records(self) -> list[StepRecord]:
        return [
            StepRecord(k + 1, int(self.n_pre[k]), int(self.n_post[k]), float(self.avg_gated[k]),
                       self.estimates[k], bool(self.lost_steps[k]), float(self.seconds[k]))
            for k in range(self.estimates.shape[0])
        ]


def initial_posterior(x0, r_var: float, vel_var: float = 100.0) -> GaussianMixture:
    cov = np.diag([r_var, r_var, vel_var, vel_var])
    return GaussianMixture(np.ones(1), np.asarray(x0, dtype=float)[None], cov[None])


def track(prior0: GaussianMixture, scans: list[Scan], truth: np.ndarray, cfg: TrackerConfig) -> TrackResult:
    """Run the tracker over ``scans``; ``truth[k]`` is the state at scan k+1.

    Only predict, expand and reduce are timed. Lost runs keep going to the
    last scan.
    """
    K = len(scans)
    est = np.empty((K, prior0.dim))
    lost = np.zeros(K, dtype=bool)
    n_post = np.zeros(K, dtype=int)
    n_pre = np.zeros(K, dtype=int)
    avg_gated = np.zeros(K)
    seconds = np.zeros(K)
    post = prior0
    for k, scan in enumerate(scans):
        t0 = time.perf_counter()
        prior = predict(post, cfg)
        exp = expand(prior, scan, cfg)
        post, _ = apply_pipeline(exp.mixture, cfg.pipeline)
        seconds[k] = time.perf_counter() - t0
        lost[k] = is_track_lost(prior, truth[k], cfg)
        est[k] = mixture_moments(post).mean
        n_pre[k] = len(exp.mixture)
        n_post[k] = len(post)
        avg_gated[k] = exp.gated.mean()
    return TrackResult(est, lost, n_post, n_pre, avg_gated, seconds)
