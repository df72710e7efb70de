"""Laplace-mechanism edge privacy.

The edge-existence query over a graph's node-pair table has sensitivity 1, so
adding Laplace(0, 1/epsilon) noise to every pair value yields an epsilon-DP
release of the adjacency structure. Released weights are raw (unclamped)
reals; any clamping happens downstream as post-processing, which cannot
weaken the guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import GraphInstance, adjacency

DEFAULT_RATIO_SLACK = 1.2
MIN_BIN_COUNT = 100


@dataclass(frozen=True)
class PrivacyBudget:
    """Budget epsilon for the edge query, whose sensitivity is fixed at 1."""

    epsilon: float
    sensitivity: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if not (math.isfinite(self.sensitivity) and self.sensitivity > 0):
            raise ValueError(f"sensitivity must be finite and > 0, got {self.sensitivity}")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


@dataclass
class EdgeTable:
    """Tabular form of a graph: one row per unordered node pair, value 0/1."""

    rows: list[tuple[tuple[int, int], int]]


@dataclass
class PerturbedView:
    """Noised symmetric weight matrix released for one graph."""

    weights: np.ndarray
    epsilon_used: float
    source_id: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights contain non-finite entries")
        if not np.array_equal(w, w.T):
            raise ValueError("weights must be symmetric")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("weights must have a zero diagonal")
        self.weights = w


def graph_to_table(g: GraphInstance) -> EdgeTable:
    """Convert a graph to its node-pair/connectivity table, keys sorted."""
    rows = []
    for i in range(g.num_nodes):
        for j in range(i + 1, g.num_nodes):
            rows.append(((i, j), 1 if (i, j) in g.edges else 0))
    return EdgeTable(rows=rows)


def _open_uniform(rng, size=None) -> np.ndarray | float:
    # Generators return [0, 1); nudge an exact 0 into the open interval so the
    # inverse CDF below stays finite.
    u = rng.random(size)
    tiny = np.nextafter(0.0, 1.0)
    if size is None:
        return tiny if u == 0.0 else u
    return np.maximum(u, tiny)


def laplace_icdf(u, scale: float):
    """Inverse CDF of Laplace(0, scale) evaluated at u in (0, 1)."""
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    c = np.asarray(u, dtype=np.float64) - 0.5
    x = -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return x if x.ndim else float(x)


def laplace_sample(scale: float, rng, size=None):
    """Draw from Laplace(0, scale) via inverse CDF, one uniform per sample."""
    return laplace_icdf(_open_uniform(rng, size), scale)


def perturb(g: GraphInstance, budget: PrivacyBudget, rng) -> PerturbedView:
    """Release the adjacency with i.i.d. Laplace noise per unordered pair.

    Each pair (i, j), i < j gets one draw, mirrored to (j, i); the diagonal is
    not a table row and stays 0.
    """
    p = g.num_nodes
    w = adjacency(g)
    iu, ju = np.triu_indices(p, k=1)
    if iu.size:
        noise = laplace_sample(budget.scale, rng, size=iu.size)
        w[iu, ju] += noise
        w[ju, iu] = w[iu, ju]
    return PerturbedView(weights=w, epsilon_used=budget.epsilon, source_id=g.id)


def make_views(
    g: GraphInstance, eps0: float, eps1: float, rng
) -> tuple[PerturbedView, PerturbedView]:
    """Two independent noised views of the same graph, possibly at different budgets."""
    sub0, sub1 = rng.spawn(2)
    v0 = perturb(g, PrivacyBudget(eps0), sub0)
    v1 = perturb(g, PrivacyBudget(eps1), sub1)
    return v0, v1


def adjacent(g1: GraphInstance, g2: GraphInstance) -> bool:
    """True iff the graphs share a node set and differ by exactly one edge."""
    if g1.num_nodes != g2.num_nodes:
        return False
    return len(g1.edges.symmetric_difference(g2.edges)) == 1


@dataclass
class DpRatioReport:
    """Outcome of the empirical output-distribution ratio check."""

    epsilon: float
    n_samples: int
    n_bins: int
    bin_range: tuple[float, float]
    differing_pair: tuple[int, int]
    max_ratio: float
    bound: float
    n_checked_bins: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_samples": self.n_samples,
            "n_bins": self.n_bins,
            "bin_range": list(self.bin_range),
            "differing_pair": list(self.differing_pair),
            "max_ratio": self.max_ratio,
            "bound": self.bound,
            "n_checked_bins": self.n_checked_bins,
            "passed": self.passed,
        }


def dp_ratio_check(
    g1: GraphInstance,
    g2: GraphInstance,
    epsilon: float,
    rng,
    n_samples: int = 1_000_000,
    n_bins: int = 40,
    bin_range: tuple[float, float] = (-5.0, 6.0),
    slack: float = DEFAULT_RATIO_SLACK,
) -> DpRatioReport:
    """Empirically check the privacy ratio on two adjacent graphs.

    Perturbs the one differing pair's value n_samples times for each graph,
    histograms the released values over shared bins, and compares the worst
    probability ratio over bins populated (count >= 100) on both sides against
    e^epsilon times a Monte-Carlo slack factor.
    """
    if not adjacent(g1, g2):
        raise ValueError("graphs are not adjacent (must differ by exactly one edge)")
    budget = PrivacyBudget(epsilon)
    pair = next(iter(g1.edges.symmetric_difference(g2.edges)))
    a1 = 1.0 if pair in g1.edges else 0.0
    a2 = 1.0 if pair in g2.edges else 0.0
    s1 = a1 + laplace_sample(budget.scale, rng, size=n_samples)
    s2 = a2 + laplace_sample(budget.scale, rng, size=n_samples)
    h1, _ = np.histogram(s1, bins=n_bins, range=bin_range)
    h2, _ = np.histogram(s2, bins=n_bins, range=bin_range)
    populated = (h1 >= MIN_BIN_COUNT) & (h2 >= MIN_BIN_COUNT)
    if populated.any():
        c1 = h1[populated].astype(np.float64)
        c2 = h2[populated].astype(np.float64)
        max_ratio = float(np.max(np.maximum(c1 / c2, c2 / c1)))
    else:
        max_ratio = float("nan")
    bound = math.exp(epsilon) * slack
    passed = bool(populated.any()) and max_ratio <= bound
    return DpRatioReport(
        epsilon=epsilon,
        n_samples=n_samples,
        n_bins=n_bins,
        bin_range=bin_range,
        differing_pair=pair,
        max_ratio=max_ratio,
        bound=bound,
        n_checked_bins=int(populated.sum()),
        passed=passed,
    )


def budget_report(epochs: int, eps0: float, eps1: float) -> float:
    """Cumulative per-graph budget under additive composition: epochs * (eps0 + eps1).

    Reported for bookkeeping only; nothing is enforced.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if eps0 <= 0 or eps1 <= 0:
        raise ValueError("budgets must be > 0")
    return epochs * (eps0 + eps1)
