"""Gaussian conditional-independence tests on piled time-series data.

The test statistic is the likelihood ratio computed as if piled rows were
independent; serial dependence inflates its null distribution, so the
statistic is divided by a long-run-variance ratio ``lambda_hat`` before
comparison with chi-square(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import chi2

from .data import DataError, PiledMatrix, SufficientStats, _segment_order
from .graph import Dag, d_separated


class SingularityError(DataError):
    """Covariance submatrix too ill-conditioned to invert."""


class InfiniteStatisticError(DataError):
    """Perfect collinearity: |partial correlation| = 1."""


CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class CiHypothesis:
    """Null hypothesis: node a independent of node b given separator S."""

    a: int
    b: int
    S: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "S", frozenset(self.S))
        if self.a == self.b:
            raise ValueError("endpoints must differ")
        if self.a in self.S or self.b in self.S:
            raise ValueError("endpoints may not appear in the separator")


@dataclass
class CiTestResult:
    g2: float
    lambda_hat: float
    p_value: float
    independent: bool
    partial_corr: float
    n_effective: int


@dataclass
class CiTestConfig:
    alpha: float = 0.01
    rescale: bool = True
    bandwidth: int | None = None  # None = automatic rule
    lambda_floor: float = 0.1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.bandwidth is not None and self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        if self.lambda_floor <= 0:
            raise ValueError("lambda_floor must be positive")


def default_bandwidth(N: int, q: int) -> int:
    """Bartlett lag truncation: at least the model lag, else 4(N/100)^(2/9)."""
    return max(q, int(4 * (N / 100.0) ** (2.0 / 9.0)))


# ---------------------------------------------------------------------------
# statistic pieces

def _canonical(h: CiHypothesis) -> tuple[int, int, tuple[int, ...]]:
    a, b = (h.a, h.b) if h.a <= h.b else (h.b, h.a)
    return a, b, tuple(sorted(h.S))


def partial_correlation(stats: SufficientStats, h: CiHypothesis) -> float:
    """Sample partial correlation r_{ab.S} from the covariance matrix."""
    a, b, S = _canonical(h)
    idx = [a, b, *S]
    sub = stats.covariance[np.ix_(idx, idx)]
    if not np.all(np.isfinite(sub)) or np.linalg.cond(sub) > CONDITION_LIMIT:
        raise SingularityError(f"singular covariance submatrix on nodes {idx}")
    prec = np.linalg.inv(sub)
    r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
    return float(min(1.0, max(-1.0, r)))


def clrt_statistic(stats: SufficientStats, h: CiHypothesis) -> float:
    """G^2 = -N log(1 - r^2), the piled-data likelihood ratio statistic."""
    r = partial_correlation(stats, h)
    if 1.0 - r * r <= 0.0:
        raise InfiniteStatisticError(
            f"perfect collinearity between nodes {h.a} and {h.b} given {sorted(h.S)}")
    return float(-stats.N * math.log1p(-r * r))


def _standardized_residuals(pm: PiledMatrix, col: int, S: tuple[int, ...],
                            means: np.ndarray) -> np.ndarray:
    y = pm.data[:, col] - means[col]
    if S:
        X = pm.data[:, list(S)] - means[list(S)]
        beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < len(S):
            raise SingularityError(f"collinear conditioning columns {list(S)}")
        y = y - X @ beta
    return y


def estimate_lambda(pm: PiledMatrix, h: CiHypothesis, cfg: CiTestConfig,
                    stats: SufficientStats | None = None) -> float:
    """Serial-dependence rescale factor: long-run over i.i.d. variance.

    The score proxy is the product of standardized residuals of columns a
    and b after regressing each on S over the centered piled data.  Its
    long-run variance is estimated by AR(1) prewhitening followed by a
    Bartlett-kernel estimate on the whitened series; plain truncated
    kernels underestimate the long-run variance badly at the moderate
    bandwidths the automatic rule picks.  All lag products are formed
    within replicate segments only.
    """
    N = pm.N
    if N < 10:
        raise DataError(f"need at least 10 piled rows to estimate lambda, got {N}")
    a, b, S = _canonical(h)
    if stats is not None:
        means = stats.means
    else:
        means = pm.data.mean(axis=0)
    e_a = _standardized_residuals(pm, a, S, means)
    e_b = _standardized_residuals(pm, b, S, means)
    s_a = math.sqrt(float(e_a @ e_a) / N)
    s_b = math.sqrt(float(e_b @ e_b) / N)
    if s_a == 0.0 or s_b == 0.0:
        raise DataError(f"zero residual variance for node {a if s_a == 0.0 else b}")
    u = (e_a / s_a) * (e_b / s_b)

    L = cfg.bandwidth if cfg.bandwidth is not None else default_bandwidth(N, pm.q)
    order = _segment_order(pm)
    segs = []
    start = 0
    for n in pm.segment_lengths:
        segs.append(u[start:start + n])
        start += n

    ubar = 0.0
    for i in order:
        ubar += float(segs[i].sum())
    ubar /= N

    var_u = 0.0
    num = den = 0.0  # AR(1) prewhitening fit, within-segment products only
    for i in order:
        d = segs[i] - ubar
        var_u += float(d @ d)
        if len(d) > 1:
            num += float(d[1:] @ d[:-1])
            den += float(d[:-1] @ d[:-1])
    var_u /= N
    if var_u <= 0.0:
        raise DataError("degenerate score variance")
    rho = 0.0 if den == 0.0 else max(-0.97, min(0.97, num / den))

    gammas = np.zeros(L + 1)
    n_white = 0
    for i in order:
        d = segs[i] - ubar
        v = d[1:] - rho * d[:-1] if len(d) > 1 else d
        n_white += len(v)
        top = min(L, len(v) - 1)
        for l in range(top + 1):
            gammas[l] += float(v[: len(v) - l] @ v[l:])
    gammas /= n_white
    lrv_white = gammas[0]
    for l in range(1, L + 1):
        lrv_white += 2.0 * (1.0 - l / (L + 1.0)) * gammas[l]
    lrv = lrv_white / (1.0 - rho) ** 2
    return float(max(cfg.lambda_floor, lrv / var_u))


def ci_test(pm: PiledMatrix, stats: SufficientStats, h: CiHypothesis,
            cfg: CiTestConfig) -> CiTestResult:
    """Full conditional-independence test with optional rescaling."""
    r = partial_correlation(stats, h)
    if 1.0 - r * r <= 0.0:
        raise InfiniteStatisticError(
            f"perfect collinearity between nodes {h.a} and {h.b} given {sorted(h.S)}")
    g2 = float(-stats.N * math.log1p(-r * r))
    lam = estimate_lambda(pm, h, cfg, stats) if cfg.rescale else 1.0
    p = float(chi2.sf(g2 / lam, 1))
    return CiTestResult(g2=g2, lambda_hat=lam, p_value=p,
                        independent=p >= cfg.alpha, partial_corr=r,
                        n_effective=stats.N)


# ---------------------------------------------------------------------------
# tester objects used by the search algorithms

class ClrtTester:
    """Memoizing CI tester bound to one piled dataset."""

    def __init__(self, pm: PiledMatrix, cfg: CiTestConfig | None = None,
                 stats: SufficientStats | None = None):
        from .data import sufficient_stats
        self.pm = pm
        self.cfg = cfg or CiTestConfig()
        self.stats = stats if stats is not None else sufficient_stats(pm, center=True)
        self.calls = 0
        self._cache: dict[tuple, CiTestResult] = {}

    @property
    def node_count(self) -> int:
        return self.pm.data.shape[1]

    def test(self, a: int, b: int, S: Iterable[int]) -> CiTestResult:
        key = _canonical(CiHypothesis(a, b, frozenset(S)))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        res = ci_test(self.pm, self.stats, CiHypothesis(*key[:2], frozenset(key[2])), self.cfg)
        self._cache[key] = res
        return res


class OracleCiTester:
    """d-separation oracle posing as a CI tester (faithfulness assumed)."""

    def __init__(self, dag: Dag):
        self.dag = dag
        self.calls = 0
        self._cache: dict[tuple, bool] = {}

    @property
    def node_count(self) -> int:
        return self.dag.node_count

    def test(self, a: int, b: int, S: Iterable[int]) -> CiTestResult:
        S = frozenset(S)
        aa, bb = (a, b) if a <= b else (b, a)
        key = (aa, bb, S)
        indep = self._cache.get(key)
        if indep is None:
            self.calls += 1
            indep = d_separated(self.dag, aa, bb, S)
            self._cache[key] = indep
        return CiTestResult(g2=0.0 if indep else math.inf, lambda_hat=1.0,
                            p_value=1.0 if indep else 0.0, independent=indep,
                            partial_corr=0.0, n_effective=0)

    def has_separator(self, a: int, b: int, pool: Iterable[int]) -> bool:
        """Whether any subset of ``pool`` d-separates a and b.

        Some subset of pool works if and only if the canonical candidate,
        pool restricted to ancestors of {a, b}, works.
        """
        anc = self.dag.ancestor_masks()
        amask = anc[a] | anc[b]
        Z = frozenset(v for v in pool if v not in (a, b) and (amask >> v) & 1)
        return self.test(a, b, Z).independent

    def find_separator(self, a: int, b: int, pool: Iterable[int]) -> frozenset[int] | None:
        """A small d-separator of a and b inside ``pool``, or None.

        Starts from the canonical ancestral candidate and greedily drops
        redundant members; the result is a valid separator whenever one
        exists within pool.
        """
        anc = self.dag.ancestor_masks()
        amask = anc[a] | anc[b]
        Z = {v for v in pool if v not in (a, b) and (amask >> v) & 1}
        if not self.test(a, b, frozenset(Z)).independent:
            return None
        for z in sorted(Z, reverse=True):
            if self.test(a, b, frozenset(Z - {z})).independent:
                Z.discard(z)
        return frozenset(Z)
