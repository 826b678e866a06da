import numpy as np
import pytest

from mixtrack.gaussian import Gaussian
from mixtrack.mixture import GaussianMixture


def random_spd(rng, d, scale=1.0, jitter=0.1):
    a = rng.normal(size=(d, d)) * scale
    return a @ a.T + jitter * scale**2 * np.eye(d)


def random_gaussian(rng, d, spread=3.0):
    return Gaussian(rng.normal(size=d) * spread, random_spd(rng, d))


def random_mixture(rng, n, d, spread=3.0):
    w = rng.random(n) + 0.05
    covs = np.stack([random_spd(rng, d) for _ in range(n)])
    return GaussianMixture(w / w.sum(), rng.normal(size=(n, d)) * spread, covs)


def replay_merge(p: GaussianMixture, i: int, j: int) -> GaussianMixture:
    """Apply one moment-matched merge the slow way: new component at i, j removed."""
    w = p.weights[i] + p.weights[j]
    mu = (p.weights[i] * p.means[i] + p.weights[j] * p.means[j]) / w
    di, dj = p.means[i] - mu, p.means[j] - mu
    cov = (p.weights[i] * (p.covs[i] + np.outer(di, di)) + p.weights[j] * (p.covs[j] + np.outer(dj, dj))) / w
    cov = 0.5 * (cov + cov.T)
    keep = [k for k in range(len(p)) if k != j]
    weights, means, covs = p.weights.copy(), p.means.copy(), p.covs.copy()
    weights[i], means[i], covs[i] = w, mu, cov
    return GaussianMixture(weights[keep], means[keep], covs[keep], normalized=p.normalized)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# (criterion number, passed, detail) lines filled by test_acceptance
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
