"""Mixture reduction: capping, pruning, greedy KL merging and pipelines.

Greedy merging keeps a table of pairwise merge costs. After a merge the two
rows are dropped and only the costs against the new barycenter are
recomputed, so each merge is O(n) cost evaluations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from mixtrack.gaussian import batch_merge_costs, symmetrize
from mixtrack.mixture import GaussianMixture, moments_of_arrays

# below this barycenter cost the mixture is treated as a set of identical components
DEGENERATE_COST = 1e-12
# relative slack on the loss threshold; L~ reaches exactly 1 only up to rounding
LOSS_RTOL = 1e-9


@dataclass(frozen=True)
class MergeStep:
    m: int  # mixture order before the merge
    pair: tuple[int, int]  # positions in the order-m mixture, i < j
    cost: float  # minimum pairwise merge cost at this order
    loss: float  # cumulative normalized loss including this merge
    committed: bool = True


@dataclass
class ReductionTrace:
    barycenter_cost: float = 0.0
    steps: list[MergeStep] = field(default_factory=list)

    @property
    def merges(self) -> list[MergeStep]:
        return [s for s in self.steps if s.committed]

    @property
    def losses(self) -> list[float]:
        return [s.loss for s in self.merges]

    @property
    def final_loss(self) -> float:
        merges = self.merges
        return merges[-1].loss if merges else 0.0


def _batch_kl_to(mu: np.ndarray, cov: np.ndarray, target_mu: np.ndarray, target_cov: np.ndarray) -> np.ndarray:
    """KL(N(mu_i, cov_i) || target) for every row i."""
    d = target_mu.size
    chol = np.linalg.cholesky(target_cov)
    inv = np.linalg.inv(chol)
    tinv = inv.T @ inv
    diff = mu - target_mu
    trace = np.einsum("jk,ikj->i", tinv, cov)
    quad = np.einsum("ij,jk,ik->i", diff, tinv, diff)
    target_logdet = 2.0 * np.log(np.diag(chol)).sum()
    logdets = np.linalg.slogdet(cov)[1]
    kl = 0.5 * (trace + quad - d + target_logdet - logdets)
    return np.maximum(kl, 0.0)


def _barycenter_cost(w: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> float:
    if w.size == 1:
        return 0.0
    mean, c = moments_of_arrays(w, mu, cov)
    return float(w @ _batch_kl_to(mu, cov, mean, c) / w.sum())


class _MergeTable:
    """Slots hold the live components; merged components reuse the lower slot."""

    def __init__(self, w: np.ndarray, mu: np.ndarray, cov: np.ndarray):
        self.w = np.array(w, dtype=float)
        self.mu = np.array(mu, dtype=float)
        self.cov = np.array(cov, dtype=float)
        self.logdet = np.linalg.slogdet(self.cov)[1]
        n = self.w.size
        self.alive = np.ones(n, dtype=bool)
        self.cost = np.full((n, n), np.inf)
        if n > 1:
            iu, ju = np.triu_indices(n, 1)
            self.cost[iu, ju] = batch_merge_costs(
                self.w[iu], self.mu[iu], self.cov[iu], self.logdet[iu],
                self.w[ju], self.mu[ju], self.cov[ju], self.logdet[ju],
            )

    @property
    def size(self) -> int:
        return int(self.alive.sum())

    def best(self) -> tuple[int, int, float]:
        # row-major argmin returns the lexicographically smallest slot pair on ties
        flat = int(np.argmin(self.cost))
        i, j = divmod(flat, self.cost.shape[1])
        return i, j, float(self.cost[i, j])

    def position(self, slot: int) -> int:
        return int(self.alive[:slot].sum())

    def merge(self, i: int, j: int) -> None:
        wi, wj = self.w[i], self.w[j]
        total = wi + wj
        a, b = (0.5, 0.5) if total == 0.0 else (wi / total, wj / total)
        diff = self.mu[j] - self.mu[i]
        self.mu[i] = a * self.mu[i] + b * self.mu[j]
        self.cov[i] = symmetrize(a * self.cov[i] + b * self.cov[j] + a * b * np.outer(diff, diff))
        self.w[i] = total
        self.logdet[i] = np.linalg.slogdet(self.cov[i])[1]
        self.alive[j] = False
        self.cost[j, :] = np.inf
        self.cost[:, j] = np.inf
        others = np.flatnonzero(self.alive)
        others = others[others != i]
        if others.size:
            c = batch_merge_costs(
                self.w[i], self.mu[i], self.cov[i], self.logdet[i],
                self.w[others], self.mu[others], self.cov[others], self.logdet[others],
            )
            lo = others < i
            self.cost[others[lo], i] = c[lo]
            self.cost[i, others[~lo]] = c[~lo]

    def mixture(self) -> GaussianMixture:
        idx = np.flatnonzero(self.alive)
        w = self.w[idx]
        return GaussianMixture(w / w.sum(), self.mu[idx], self.cov[idx])


def _normalized_loss(cum: float, c: float, total_weight: float) -> float:
    if c < DEGENERATE_COST:
        return 0.0
    return cum / (c * total_weight)


def runnalls_reduce(p: GaussianMixture, n_b: int) -> tuple[GaussianMixture, ReductionTrace]:
    """Greedily merge the cheapest pair until at most ``n_b`` components remain."""
    if n_b < 1:
        raise ValueError(f"target size must be at least 1, got {n_b}")
    if len(p) <= n_b:
        return p if p.normalized else p.renormalized(), ReductionTrace()
    total = float(p.weights.sum())
    c = _barycenter_cost(p.weights, p.means, p.covs)
    trace = ReductionTrace(barycenter_cost=c)
    table = _MergeTable(p.weights, p.means, p.covs)
    cum = 0.0
    m = len(p)
    while m > n_b:
        i, j, cost = table.best()
        pair = (table.position(i), table.position(j))
        table.merge(i, j)
        cum += cost
        trace.steps.append(MergeStep(m, pair, cost, _normalized_loss(cum, c, total)))
        m -= 1
    return table.mixture(), trace


def adaptive_reduce(
    p: GaussianMixture, alpha: float, floor: Optional[int] = None
) -> tuple[GaussianMixture, ReductionTrace]:
    """Greedy merging that stops once the normalized cumulative loss would exceed ``alpha``.

    With ``floor`` set, merging carries on past the loss threshold until at
    most ``floor`` components are left.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if floor is not None and floor < 1:
        raise ValueError(f"floor must be at least 1, got {floor}")
    total = float(p.weights.sum())
    c = _barycenter_cost(p.weights, p.means, p.covs)
    trace = ReductionTrace(barycenter_cost=c)
    if len(p) == 1:
        return p if p.normalized else p.renormalized(), trace
    degenerate = c < DEGENERATE_COST
    budget = alpha * c * total * (1.0 + LOSS_RTOL)
    table = _MergeTable(p.weights, p.means, p.covs)
    cum = 0.0
    m = len(p)
    while m > 1:
        i, j, cost = table.best()
        tentative = cum + cost
        over_cap = floor is not None and m > floor
        if degenerate:
            accept = floor is None or over_cap
        else:
            accept = tentative <= budget or over_cap
        pair = (table.position(i), table.position(j))
        loss = _normalized_loss(tentative, c, total)
        if not accept:
            trace.steps.append(MergeStep(m, pair, cost, loss, committed=False))
            break
        table.merge(i, j)
        cum = tentative
        trace.steps.append(MergeStep(m, pair, cost, loss))
        m -= 1
    return table.mixture(), trace


def cap(p: GaussianMixture, n_b: int) -> GaussianMixture:
    """Keep the ``n_b`` heaviest components (lowest index wins ties)."""
    if n_b < 1:
        raise ValueError(f"cap size must be at least 1, got {n_b}")
    if len(p) <= n_b:
        return p
    keep = np.sort(np.argsort(-p.weights, kind="stable")[:n_b])
    return p.subset(keep)


def _prune(p: GaussianMixture, keep: np.ndarray) -> GaussianMixture:
    if keep.all():
        return p if p.normalized else p.renormalized()
    if not keep.any():
        return p.subset([int(np.argmax(p.weights))])
    return p.subset(np.flatnonzero(keep))


def standard_prune(p: GaussianMixture, gamma: float) -> GaussianMixture:
    """Drop components whose weight is below ``gamma``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"pruning threshold must lie in [0, 1), got {gamma}")
    return _prune(p, p.weights >= gamma)


def normalized_weights(p: GaussianMixture) -> np.ndarray:
    """w_i / sqrt(det(cov_i))."""
    return p.weights * np.exp(-0.5 * p.logdets())


def nw_prune(p: GaussianMixture, gamma: float) -> GaussianMixture:
    """Drop components whose determinant-normalized weight is below ``gamma``."""
    if gamma < 0.0:
        raise ValueError(f"threshold must be nonnegative, got {gamma}")
    return _prune(p, normalized_weights(p) >= gamma)


@dataclass(frozen=True)
class Capping:
    n_b: int


@dataclass(frozen=True)
class Runnalls:
    n_b: int


@dataclass(frozen=True)
class Adaptive:
    alpha: float
    floor: Optional[int] = None


Reducer = Union[Capping, Runnalls, Adaptive]


@dataclass(frozen=True)
class ReductionPipeline:
    """Standard pruning, then a reducer, then normalized-weight pruning.

    ``None`` disables a stage.
    """

    reducer: Optional[Reducer] = None
    sp_threshold: Optional[float] = None
    nwp_threshold: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.sp_threshold is not None and not 0.0 <= self.sp_threshold < 1.0:
            raise ValueError(f"SP threshold must lie in [0, 1), got {self.sp_threshold}")
        if self.nwp_threshold is not None and self.nwp_threshold < 0.0:
            raise ValueError(f"NWP threshold must be nonnegative, got {self.nwp_threshold}")
        r = self.reducer
        if isinstance(r, (Capping, Runnalls)) and r.n_b < 1:
            raise ValueError(f"n_b must be at least 1, got {r.n_b}")
        if isinstance(r, Adaptive):
            if not 0.0 <= r.alpha <= 1.0:
                raise ValueError(f"alpha must lie in [0, 1], got {r.alpha}")
            if r.floor is not None and r.floor < 1:
                raise ValueError(f"floor must be at least 1, got {r.floor}")

    @property
    def max_components(self) -> Optional[int]:
        r = self.reducer
        if isinstance(r, (Capping, Runnalls)):
            return r.n_b
        if isinstance(r, Adaptive):
            return r.floor
        return None


def apply_pipeline(p: GaussianMixture, pl: ReductionPipeline) -> tuple[GaussianMixture, ReductionTrace]:
    trace = ReductionTrace()
    if pl.sp_threshold is not None:
        p = standard_prune(p, pl.sp_threshold)
    r = pl.reducer
    if isinstance(r, Capping):
        p = cap(p, r.n_b)
    elif isinstance(r, Runnalls):
        p, trace = runnalls_reduce(p, r.n_b)
    elif isinstance(r, Adaptive):
        p, trace = adaptive_reduce(p, r.alpha, r.floor)
    if pl.nwp_threshold is not None:
        p = nw_prune(p, pl.nwp_threshold)
    if not p.normalized:
        p = p.renormalized()
    return p, trace


_SCHEME_RE = re.compile(r"^(capping|runnalls|adaptive)-(\d+)$")


def parse_scheme(name: str, sp: Optional[float] = 5e-4, nwp: Optional[float] = 1e-10, alpha: float = 0.05) -> ReductionPipeline:
    """Build a pipeline from a name such as ``runnalls-30``.

    Capping schemes are capping alone; Runnalls and adaptive schemes are
    wrapped in SP and NWP, and ``adaptive-n`` caps the adaptive descent at n.
    """
    match = _SCHEME_RE.match(name.strip().lower())
    if not match:
        raise ValueError(f"unknown reduction scheme {name!r}")
    kind, n = match.group(1), int(match.group(2))
    if kind == "capping":
        return ReductionPipeline(Capping(n), name=name)
    if kind == "runnalls":
        return ReductionPipeline(Runnalls(n), sp, nwp, name=name)
    return ReductionPipeline(Adaptive(alpha, floor=n), sp, nwp, name=name)
