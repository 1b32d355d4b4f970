"""Chance level, class distinctiveness and rank-based significance tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .riemann import matrix_log

__all__ = [
    "StatsError", "chance_level", "class_distinctiveness", "wilcoxon_signed_rank",
    "signed_rank_statistic", "rank_sum_pvalue", "BootstrapSummary", "bootstrap_compare",
    "EXACT_MAX_N",
]

EXACT_MAX_N = 25


class StatsError(ValueError):
    pass


def chance_level(n_test_total: int, alpha: float = 0.05) -> float:
    """Smallest accuracy ``a`` with ``P(Binomial(n, 1/2) >= a n) <= alpha`` (capped at 1).

    >>> round(chance_level(180, 0.05), 3)
    0.561
    """
    if not 0 < alpha < 1:
        raise StatsError(f"alpha must be in (0, 1), got {alpha}")
    n = int(n_test_total)
    if n < 1:
        raise StatsError("need at least one test trial")
    # P(X >= k) = sf(k - 1); search near the quantile, then settle exactly
    k = int(sps.binom.ppf(1.0 - alpha, n, 0.5)) + 1
    while k > 0 and sps.binom.sf(k - 2, n, 0.5) <= alpha:
        k -= 1
    while sps.binom.sf(k - 1, n, 0.5) > alpha:
        k += 1
    return min(k / n, 1.0)


def class_distinctiveness(covs_a, covs_b) -> float:
    """Log-Euclidean distance between class means over the mean within-class spread.

    ``delta(M_a, M_b) / (0.5 * (s_a + s_b))`` where ``s_i`` is the mean distance
    of class-``i`` trials to their log-Euclidean mean. Returns ``inf`` when both
    classes have zero spread but distinct means, and 0 when the means coincide.
    """
    covs_a = np.asarray(covs_a, dtype=np.float64)
    covs_b = np.asarray(covs_b, dtype=np.float64)
    if covs_a.shape[0] < 2 or covs_b.shape[0] < 2:
        raise StatsError("class distinctiveness needs at least 2 trials per class")
    logs_a, logs_b = matrix_log(covs_a), matrix_log(covs_b)
    center_a, center_b = logs_a.mean(axis=0), logs_b.mean(axis=0)
    between = np.linalg.norm(center_a - center_b)
    spread_a = np.linalg.norm(logs_a - center_a, axis=(1, 2)).mean()
    spread_b = np.linalg.norm(logs_b - center_b, axis=(1, 2)).mean()
    within = 0.5 * (spread_a + spread_b)
    if within == 0:
        return 0.0 if between == 0 else float("inf")
    return float(between / within)


def _average_ranks(values):
    return sps.rankdata(values, method="average")


def signed_rank_statistic(x, y):
    """Non-zero differences, their average ranks and the positive rank sum."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d = d[d != 0]
    ranks = _average_ranks(np.abs(d))
    return d, ranks, float(ranks[d > 0].sum())


def _exact_distribution(ranks):
    """Null distribution of twice the positive rank sum, as counts over 2^n signs."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. The
    null distribution is enumerated exactly for up to 25 non-zero
    differences; above that a normal approximation with tie and continuity
    corrections is used. All-zero differences give ``p = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError(f"paired samples must be 1-D of equal length, got {x.shape} and {y.shape}")
    d, ranks, t_plus = signed_rank_statistic(x, y)
    n = d.size
    if n == 0:
        return 1.0
    if n <= EXACT_MAX_N:
        counts = _exact_distribution(ranks)
        t2 = int(round(2 * t_plus))
        total = counts.sum()
        lower = counts[:t2 + 1].sum() / total
        upper = counts[t2:].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(t_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    return float(min(1.0, 2.0 * sps.norm.sf(z)))


def rank_sum_pvalue(a, b) -> float:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney U) p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.all(np.concatenate([a, b]) == a[0]):
        return 1.0
    return float(sps.mannwhitneyu(a, b, alternative="two-sided", method="auto").pvalue)


@dataclass(frozen=True)
class BootstrapSummary:
    reps: int
    subset_size: int
    fraction_significant: float
    median_p: float
    alpha: float = 0.05


def bootstrap_compare(group_a, group_b, reps: int = 1000, subset_size: int | None = None,
                      seed: int = 0, alpha: float = 0.05) -> BootstrapSummary:
    """Repeated rank-sum tests of a random subset of ``group_a`` against ``group_b``.

    Each repetition draws ``subset_size`` subjects from ``group_a`` without
    replacement (default: ``len(group_b)``).
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if reps < 1:
        raise StatsError(f"reps must be >= 1, got {reps}")
    if b.size < 1:
        raise StatsError("group B is empty")
    if subset_size is None:
        subset_size = min(b.size, a.size)
    if not 1 <= subset_size <= a.size:
        raise StatsError(f"subset size {subset_size} not in 1..{a.size}")
    rng = np.random.default_rng(seed)
    pvals = np.empty(reps)
    for r in range(reps):
        pick = rng.choice(a.size, size=subset_size, replace=False)
        pvals[r] = rank_sum_pvalue(a[pick], b)
    return BootstrapSummary(reps, subset_size, float(np.mean(pvals < alpha)), float(np.median(pvals)), alpha)
