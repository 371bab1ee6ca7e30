"""Nonparametric tests: KS normality, Aligned Friedman ranks, Wilcoxon.

All functions are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as sps


class DegenerateSample(ValueError):
    pass


class AllTies(ValueError):
    pass


def ks_normality(sample):
    """KS distance to a normal fitted by sample mean/stdev, asymptotic p-value.

    The p-value uses the plain Kolmogorov limit distribution, which is
    conservative when the parameters are estimated from the sample.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 5:
        raise ValueError("need at least 5 observations")
    sd = x.std(ddof=1)
    if sd == 0:
        raise DegenerateSample("sample has zero variance")
    cdf = special.ndtr((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n))
    p = float(sps.kstwobign.sf(np.sqrt(n) * d))
    return float(d), p


@dataclass(frozen=True)
class ResultMatrix:
    methods: list[str]
    blocks: list[str]
    values: np.ndarray  # blocks x methods

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.blocks), len(self.methods)):
            raise ValueError("values must be blocks x methods")
        if len(self.methods) < 2 or len(self.blocks) < 2:
            raise ValueError("need at least 2 methods and 2 blocks")
        if np.isnan(v).any():
            raise ValueError("result matrix has missing cells")


@dataclass(frozen=True)
class Ranking:
    order: list[tuple[str, float]]  # best first, (method, mean aligned rank)
    statistic: float
    p_value: float
    rank_sums: dict[str, float]


def aligned_ranks(values: np.ndarray) -> np.ndarray:
    """Global average ranks of block-mean-aligned observations (1 = smallest)."""
    v = np.asarray(values, dtype=float)
    aligned = v - v.mean(axis=1, keepdims=True)
    return sps.rankdata(aligned.ravel(), method="average").reshape(v.shape)


def aligned_friedman(matrix: ResultMatrix, direction: str = "higher_is_better") -> Ranking:
    """Aligned Friedman ranking (Hodges-Lehmann alignment).

    Larger aligned values get larger ranks, so for ``higher_is_better`` the
    best method has the largest mean rank and is listed first.
    """
    if direction not in ("higher_is_better", "lower_is_better"):
        raise ValueError(f"bad direction {direction!r}")
    ranks = aligned_ranks(matrix.values)
    n, k = ranks.shape
    r_j = ranks.sum(axis=0)
    r_i = ranks.sum(axis=1)
    num = (k - 1) * (np.sum(r_j**2) - (k * n**2 / 4.0) * (k * n + 1) ** 2)
    den = (k * n * (k * n + 1) * (2 * k * n + 1)) / 6.0 - np.sum(r_i**2) / k
    if den <= 0:
        stat, p = 0.0, 1.0
    else:
        stat = float(num / den)
        p = float(sps.chi2.sf(stat, k - 1))
    mean_rank = ranks.mean(axis=0)
    sign = -1.0 if direction == "higher_is_better" else 1.0
    idx = sorted(range(k), key=lambda j: (sign * mean_rank[j], j))
    return Ranking(
        order=[(matrix.methods[j], float(mean_rank[j])) for j in idx],
        statistic=stat,
        p_value=min(1.0, max(0.0, p)),
        rank_sums={m: float(r_j[j]) for j, m in enumerate(matrix.methods)},
    )


def _exact_signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign assignments whose doubled W+ equals s."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided", exact_max_n: int = 20):
    """Signed-rank test on ``a - b``; returns ``(W+, p)``.

    Zero differences are dropped and tied magnitudes get average ranks.
    ``alternative="greater"`` tests whether ``a`` tends to exceed ``b``.
    The null distribution is enumerated exactly up to ``exact_max_n``
    non-zero pairs and approximated by a normal (tie-corrected) beyond.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("samples must have equal length")
    if a.size < 6:
        raise ValueError("need at least 6 pairs")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise AllTies("every pair is tied")
    n = d.size
    ranks = sps.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())

    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        counts = _exact_signed_rank_counts(doubled)
        total = 2**n
        w2 = int(round(2 * w_plus))
        p_ge = float(sum(counts[w2:])) / total
        p_le = float(sum(counts[: w2 + 1])) / total
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
        sd = np.sqrt(var)
        p_ge = float(sps.norm.sf((w_plus - mu - 0.5) / sd))
        p_le = float(sps.norm.cdf((w_plus - mu + 0.5) / sd))

    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    elif alternative == "two-sided":
        p = min(1.0, 2.0 * min(p_ge, p_le))
    else:
        raise ValueError(f"bad alternative {alternative!r}")
    return w_plus, p
