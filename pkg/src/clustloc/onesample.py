"""One-sample location inference for cluster-correlated multivariate data.

The statistic for a hypothesized center (zero, after shifting) is the
quadratic form

    Q2 = (1/n) t' M^{-1} t,    t = sum_i w_i T_i,
    M  = (1/n) sum_clusters s_c s_c',   s_c = sum_{i in c} w_i T_i,

where T_i is an odd score of observation i.  M is consistent for the
covariance of n^{-1/2} t whenever clusters are independent, whatever the
dependence inside each cluster, so Q2 is asymptotically chi-squared with
p degrees of freedom under the null.  The sign-change test replaces the
chi-squared reference with the distribution of Q2 over independent
per-cluster sign flips of the cluster score sums, which is exact when
the null distribution is symmetric about the center.

Estimation inverts the test: the location estimate solves
sum_i w_i T(y_i - mu) = 0, and its covariance (on the sqrt(n) scale) is
the sandwich A^{-1} M A^{-1} with A the empirical score derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .design import Design, check_weights, exhaustive_sign_flips, sign_flips
from .location import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    symmetrized_pair_cloud,
    weighted_geometric_median,
)
from .numerics import RandomStream, chi2_tail, invert_psd, pinv_psd
from .scores import ODD_SCORE_KINDS, a_hat, spatial_signed_ranks, spatial_signs

__all__ = [
    "TestResult",
    "ResamplingResult",
    "LocationEstimate",
    "BCEstimates",
    "cluster_sums",
    "one_sample_test",
    "sign_change_pvalue",
    "estimate_location",
    "estimate_bc",
]

# Condition number of the score-derivative estimate beyond which the
# reported covariance is marked unreliable instead of being refused.
ILL_CONDITIONED = 1e10

_FLIP_CHUNK = 1 << 15


@dataclass(frozen=True)
class TestResult:
    """Outcome of a quadratic-form location test."""

    statistic: float
    df: int
    p_asymptotic: float
    kind: str
    n: int
    middle_matrix: np.ndarray = field(repr=False)
    weights_used: np.ndarray = field(repr=False)
    rank_deficient: bool = False
    cross_term_dropped: bool = False
    p_resampling: float | None = None
    resampling: "ResamplingResult | None" = None

    def with_resampling(self, resampling: "ResamplingResult") -> "TestResult":
        return replace(
            self, p_resampling=resampling.p_value, resampling=resampling
        )


@dataclass(frozen=True)
class ResamplingResult:
    """A resampling p-value together with how it was obtained."""

    p_value: float
    method: str
    draws: int
    exceed_count: int
    exhaustive: bool
    statistic: float


@dataclass(frozen=True)
class LocationEstimate:
    """A score-based location estimate with its large-sample covariance.

    ``covariance`` is for the sqrt(n)-scaled estimate; divide by n for
    confidence ellipsoids of the center itself.
    """

    mu_hat: np.ndarray
    covariance: np.ndarray = field(repr=False)
    kind: str = "sign"
    n: int = 0
    weights_used: np.ndarray = field(default=None, repr=False)
    iterations: int = 0
    converged: bool = True
    residual: float = 0.0
    a_condition: float = 1.0
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class BCEstimates:
    """Empirical score covariance pieces and weight design constants."""

    b_hat: np.ndarray
    c_hat: np.ndarray
    d_b: float
    d_c: float
    has_within_pairs: bool


def cluster_sums(
    values: np.ndarray, design: Design, weights: np.ndarray | None = None
) -> np.ndarray:
    """Per-cluster sums of (optionally weighted) rows, a d x p matrix."""
    values = np.asarray(values, dtype=float)
    if weights is not None:
        values = values * np.asarray(weights, dtype=float)[:, None]
    out = np.empty((design.d, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(
            design.cluster_index, weights=values[:, j], minlength=design.d
        )
    return out


def _null_scores(y: np.ndarray, kind: str) -> np.ndarray:
    if kind not in ODD_SCORE_KINDS:
        raise ValueError(
            f"one-sample inference needs an odd score kind, got {kind!r}"
        )
    if kind == "identity":
        return y
    if kind == "sign":
        return spatial_signs(y)
    return spatial_signed_ranks(y)


def _prepare(y, design, weights, kind):
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n:
        raise ValueError(
            f"data has {y.shape[0]} rows but design describes {design.n}"
        )
    w = check_weights(weights, design)
    s = cluster_sums(_null_scores(y, kind), design, w)
    middle = (s.T @ s) / design.n
    middle = 0.5 * (middle + middle.T)
    return y, w, s, middle


def one_sample_test(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
) -> TestResult:
    """Test that the data are centered at zero, against a chi2(p) reference.

    Scores are evaluated at the null without any centering; shift the data
    first to test another center.  A singular middle matrix falls back to
    a pseudo-inverse and is flagged.
    """
    y, w, s, middle = _prepare(y, design, weights, kind)
    minv, rank_deficient = invert_psd(middle)
    total = s.sum(axis=0)
    stat = max(float(total @ minv @ total) / design.n, 0.0)
    df = y.shape[1]
    return TestResult(
        statistic=stat,
        df=df,
        p_asymptotic=chi2_tail(stat, df),
        kind=kind,
        n=design.n,
        middle_matrix=middle,
        weights_used=w,
        rank_deficient=rank_deficient,
    )


def _flip_statistics(
    flips: np.ndarray, s: np.ndarray, minv: np.ndarray, n: int
) -> np.ndarray:
    """Q2 for each row of per-cluster signs, chunked to bound memory."""
    out = np.empty(flips.shape[0])
    for start in range(0, flips.shape[0], _FLIP_CHUNK):
        part = flips[start : start + _FLIP_CHUNK].astype(float)
        v = part @ s
        out[start : start + part.shape[0]] = np.einsum(
            "rp,pq,rq->r", v, minv, v
        )
    return out / n


def sign_change_pvalue(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    *,
    reps: int = 9999,
    stream: RandomStream | np.random.Generator | int = 0,
    exhaustive: bool | None = None,
) -> ResamplingResult:
    """Reference the statistic against per-cluster sign flips.

    Every flip leaves the middle matrix unchanged, so it is factorized
    once and all replicate statistics come from one pass over the
    precomputed cluster score sums.  Exhaustive mode (chosen by default
    whenever 2^d <= reps and d <= 20) enumerates the half-orbit with the
    first cluster unflipped and doubles the count, which makes the exact
    tie between a flip pattern and its global negation structural; the
    observed statistic is one of the enumerated rows, so p >= 2/2^d.
    Sampled mode uses the add-one rule (1 + count) / (reps + 1).
    """
    y, w, s, middle = _prepare(y, design, weights, kind)
    minv, _ = invert_psd(middle)
    n, d = design.n, design.d
    reps = int(reps)
    if reps < 1:
        raise ValueError("need at least one replication")
    if exhaustive is None:
        exhaustive = d <= 20 and (1 << d) <= reps
    if exhaustive:
        if d == 1:
            observed = float(_flip_statistics(np.ones((1, 1), np.int8), s, minv, n)[0])
            return ResamplingResult(
                p_value=1.0,
                method="sign-change",
                draws=2,
                exceed_count=2,
                exhaustive=True,
                statistic=observed,
            )
        half = exhaustive_sign_flips(d - 1)
        flips = np.concatenate(
            [np.ones((half.shape[0], 1), np.int8), half], axis=1
        )
        stats = _flip_statistics(flips, s, minv, n)
        ones_row = int(np.flatnonzero(np.all(flips == 1, axis=1))[0])
        observed = float(stats[ones_row])
        count = 2 * int(np.count_nonzero(stats >= observed))
        return ResamplingResult(
            p_value=count / float(1 << d),
            method="sign-change",
            draws=1 << d,
            exceed_count=count,
            exhaustive=True,
            statistic=observed,
        )
    observed = float(_flip_statistics(np.ones((1, d), np.int8), s, minv, n)[0])
    flips = sign_flips(d, reps, stream)
    stats = _flip_statistics(flips, s, minv, n)
    count = int(np.count_nonzero(stats >= observed))
    return ResamplingResult(
        p_value=(1 + count) / (reps + 1),
        method="sign-change",
        draws=reps,
        exceed_count=count,
        exhaustive=False,
        statistic=observed,
    )


def estimate_location(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    *,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LocationEstimate:
    """Solve sum_i w_i T(y_i - mu) = 0 and attach a sandwich covariance.

    identity kind: the weighted mean, in closed form.  sign kind: the
    weighted spatial median (damped fixed-point iteration).  signed-rank
    kind: the weighted one-sample Hodges-Lehmann estimate, the spatial
    median of the n(n+1)/2 pairwise midpoints (y_i + y_j)/2 carrying
    weights w_i w_j.  The covariance of sqrt(n)(mu_hat - mu) is
    A^{-1} M A^{-1} with M the cluster-sum middle matrix of the residual
    scores; an ill-conditioned A degrades to a pseudo-inverse and is
    noted rather than refused.
    """
    y = np.asarray(y, dtype=float)
    if kind not in ODD_SCORE_KINDS:
        raise ValueError(f"estimation needs an odd score kind, got {kind!r}")
    w = check_weights(weights, design)
    n = design.n
    notes: list[str] = []
    if kind == "identity":
        mu = (w[:, None] * y).sum(axis=0) / n
        gap = (w[:, None] * (y - mu)).sum(axis=0)
        iterations, converged, residual = 0, True, float(np.linalg.norm(gap))
    else:
        if kind == "sign":
            points, cloud_w = y, w
        else:
            points, cloud_w = symmetrized_pair_cloud(y, w)
        sol = weighted_geometric_median(
            points, cloud_w, tol=tol, max_iter=max_iter, init=init
        )
        mu = sol.point
        iterations, converged, residual = (
            sol.iterations,
            sol.converged,
            sol.residual,
        )
    residuals = y - mu
    t_hat = _null_scores(residuals, kind)
    s = cluster_sums(t_hat, design, w)
    middle = (s.T @ s) / n
    a = a_hat(residuals, design, kind)
    if kind == "signed-rank":
        # a_hat averages the hat matrix at pair midpoints (e_i + e_j)/2,
        # which is twice the derivative of the signed-rank score (the hat
        # matrix scales as 1/||v||).  Halve it so the sandwich matches the
        # sampling covariance of sqrt(n) (mu_hat - mu).
        a = 0.5 * a
    a_condition = float(np.linalg.cond(a))
    if not np.isfinite(a_condition) or a_condition > ILL_CONDITIONED:
        notes.append("ill-conditioned score derivative; covariance unreliable")
        a_inv = pinv_psd(a)
    else:
        a_inv = np.linalg.inv(a)
    cov = a_inv @ middle @ a_inv.T
    cov = 0.5 * (cov + cov.T)
    return LocationEstimate(
        mu_hat=mu,
        covariance=cov,
        kind=kind,
        n=n,
        weights_used=w,
        iterations=iterations,
        converged=converged,
        residual=residual,
        a_condition=a_condition,
        notes=tuple(notes),
    )


def estimate_bc(
    score_matrix: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
) -> BCEstimates:
    """Empirical marginal and within-cluster score covariances.

    B = T'T/n.  C averages cross products over the k = sum m(m-1) ordered
    within-cluster pairs, computed through the cluster-sum identity
    sum_c (s_c s_c' - sum_{i in c} T_i T_i') rather than an O(n^2) pass.
    D_B = sum w_i^2 / n and D_C pairs weights the same way C pairs scores.
    Designs with only singleton clusters have no within pairs; C is left
    at zero and flagged.
    """
    t = np.asarray(score_matrix, dtype=float)
    w = check_weights(weights, design)
    n = design.n
    p = t.shape[1]
    gram = t.T @ t
    b = gram / n
    b = 0.5 * (b + b.T)
    k = design.k
    if k > 0:
        u = cluster_sums(t, design)
        c = (u.T @ u - gram) / k
        c = 0.5 * (c + c.T)
    else:
        c = np.zeros((p, p))
    d_b = float(w @ w) / n
    per_cluster = np.bincount(design.cluster_index, weights=w, minlength=design.d)
    d_c = (float(per_cluster @ per_cluster) - float(w @ w)) / n
    return BCEstimates(
        b_hat=b, c_hat=c, d_b=d_b, d_c=d_c, has_within_pairs=k > 0
    )
