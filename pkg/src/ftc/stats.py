"""Rank statistics: two-sided rank-sum test and chance-corrected agreement.

The rank-sum implementation uses midranks for ties, a normal approximation
with tie-corrected variance and continuity correction for the p-value, and
reports the common-language effect size

    rho = U_a / (n_a * n_b) = P(a > b) + 0.5 * P(a == b)

so rho near 1 means group a stochastically dominates group b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RankSumResult:
    u_statistic: float
    z_score: float
    p_value: float
    rho: float
    n_a: int
    n_b: int


def _normal_sf(z: float) -> float:
    # survival function of the standard normal
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def rank_sum(a: Sequence[float], b: Sequence[float]) -> RankSumResult:
    """Two-sided rank-sum test between two independent samples.

    Degenerate pooled data (every value tied) collapses to p = 1 and
    rho = 0.5 rather than dividing by zero.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("rank_sum requires two non-empty groups")
    n_a, n_b = len(a), len(b)
    pooled = np.concatenate([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    if np.isnan(pooled).any():
        raise ValueError("rank_sum input contains NaN")
    n = n_a + n_b

    # midranks
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(n, dtype=float)
    sorted_vals = pooled[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # 1-based midrank
        i = j + 1

    rank_sum_a = float(ranks[:n_a].sum())
    u_a = rank_sum_a - n_a * (n_a + 1) / 2.0
    rho = u_a / (n_a * n_b)

    mean_u = n_a * n_b / 2.0
    _, tie_counts = np.unique(sorted_vals, return_counts=True)
    tie_term = float(((tie_counts**3) - tie_counts).sum())
    variance = (n_a * n_b / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return RankSumResult(u_a, 0.0, 1.0, rho, n_a, n_b)

    diff = u_a - mean_u
    # continuity correction pulls the statistic half a step toward the mean
    if diff > 0.5:
        z = (diff - 0.5) / math.sqrt(variance)
    elif diff < -0.5:
        z = (diff + 0.5) / math.sqrt(variance)
    else:
        z = 0.0
    p = min(1.0, 2.0 * _normal_sf(abs(z)))
    return RankSumResult(u_a, z, p, rho, n_a, n_b)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    category_marginals: tuple[float, ...]


def fleiss_kappa(
    ratings: Sequence[Sequence[int]], raters_per_item: int
) -> KappaResult:
    """Chance-corrected agreement over an items x categories count table.

    Every row must sum to raters_per_item. Unanimous tables score 1.0 even
    when expected agreement is also 1 (single used category); observed
    agreement exactly at chance scores 0.0.
    """
    if raters_per_item < 2:
        raise ValueError("raters_per_item must be >= 2")
    table = np.asarray(ratings, dtype=float)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("ratings must be a non-empty 2-d count table")
    if (table < 0).any():
        raise ValueError("ratings counts must be non-negative")
    row_sums = table.sum(axis=1)
    if not np.all(row_sums == raters_per_item):
        bad = int(np.argmax(row_sums != raters_per_item))
        raise ValueError(
            f"row {bad} sums to {row_sums[bad]:g}, expected {raters_per_item}"
        )
    n_items = table.shape[0]
    r = raters_per_item

    p_i = ((table**2).sum(axis=1) - r) / (r * (r - 1))
    p_bar = float(p_i.mean())
    marginals = table.sum(axis=0) / (n_items * r)
    p_e = float((marginals**2).sum())

    if math.isclose(p_e, 1.0):
        # all raters in one category everywhere: perfect agreement
        kappa = 1.0
    elif math.isclose(p_bar, p_e):
        kappa = 0.0
    else:
        kappa = (p_bar - p_e) / (1.0 - p_e)
    return KappaResult(kappa, tuple(float(m) for m in marginals))
