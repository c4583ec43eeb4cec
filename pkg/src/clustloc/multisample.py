"""Several-sample location inference for cluster-correlated data.

The c-sample statistic stacks the per-group sums of weighted
inner-centered scores (last group dropped) into

    T~ = n^{-1/2} vec(T' W X H),

and references the quadratic form Q2 = T~' M^{-1} T~ against chi-squared
with p(c-1) degrees of freedom, where the middle matrix

    M = (H' X0' W^2 X0 H / n) (x) (T'T / n)
      + (H' X0' W (ZZ' - I) W X0 H / n) (x) (T'(ZZ' - I)T / k)

pairs weighted group-contrast design factors with marginal and
within-cluster score covariances ((x) is the Kronecker product, X0 the
weighted-mean-centered group membership matrix).  Designs without any
within-cluster pair (all singletons) drop the second term.

The permutation test recomputes the statistic over group relabelings
that preserve the design's cluster-by-group structure; scores never
depend on the labels (centering is pooled), so the score matrix is
computed once and every replicate only reaggregates it.

Estimation works per group (each group is a one-sample problem) and per
pair of groups, where the covariance of a difference decomposes into a
marginal part and a within-cluster part whose weights are the gamma
constants below.  All covariances reported here are for the
sqrt(n)-scaled quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import (
    Design,
    check_weights,
    exhaustive_within_cluster_relabelings,
    permutations,
)
from .errors import DesignError, EstimationError
from .location import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    paired_difference_cloud,
    weighted_geometric_median,
)
from .numerics import RandomStream, chi2_tail, invert_psd, pinv_psd
from .onesample import (
    ILL_CONDITIONED,
    BCEstimates,
    LocationEstimate,
    ResamplingResult,
    TestResult,
    cluster_sums,
    estimate_bc,
    estimate_location,
)
from .scores import a_hat, centered_scores, spatial_ranks, spatial_signs

__all__ = [
    "GroupEstimates",
    "PairwiseDifference",
    "DesignLimits",
    "c_sample_test",
    "permutation_pvalue",
    "group_centers",
    "group_differences",
    "pairwise_difference",
    "design_limits",
]

PAIRWISE_KINDS = ("identity", "sign", "rank")

# Per-group marginal score scatter traces further apart than this ratio
# mark the two-sample covariance estimate as the more reliable one.
HETEROGENEITY_RATIO = 2.0


@dataclass(frozen=True)
class PairwiseDifference:
    """A group location difference theta_ij = mu_j - mu_i with covariances.

    ``covariance`` decomposes the uncertainty through the gamma constants
    and the pooled B/C estimates; ``covariance_alt`` aggregates the score
    sums of the two groups involved directly and is preferred when group
    scatters are clearly heterogeneous.  Both are for sqrt(n) theta_hat.
    """

    i: int
    j: int
    theta: np.ndarray
    covariance: np.ndarray = field(repr=False)
    covariance_alt: np.ndarray = field(repr=False)
    gamma_b: float = 0.0
    gamma_c: float = 0.0
    prefer_alt: bool = False
    kind: str = "sign"
    converged: bool = True
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class GroupEstimates:
    """Per-group centers and (optionally) all pairwise differences."""

    beta_hat: np.ndarray | None
    estimates: tuple[LocationEstimate, ...]
    theta: dict[tuple[int, int], PairwiseDifference]
    kind: str

    def gamma(self, i: int, j: int) -> tuple[float, float]:
        diff = self.theta[(i, j)]
        return diff.gamma_b, diff.gamma_c


@dataclass(frozen=True)
class DesignLimits:
    """Empirical design factors entering every c-sample covariance."""

    d_b: np.ndarray
    d_c: np.ndarray
    lam: np.ndarray


# ---------------------------------------------------------------------------
# The statistic engine: label-dependent pieces are reaggregated per draw
# ---------------------------------------------------------------------------


class _StatisticEngine:
    """Computes Q2 for batches of group label rows over fixed scores."""

    def __init__(
        self,
        t_hat: np.ndarray,
        design: Design,
        w: np.ndarray,
        drop_group: int | None = None,
    ) -> None:
        n, p = t_hat.shape
        c = design.c
        drop = c - 1 if drop_group is None else int(drop_group)
        if not (0 <= drop < c):
            raise ValueError(f"drop_group must be in [0, {c}), got {drop}")
        self.n, self.p, self.c, self.d = n, p, c, design.d
        self.keep = np.array([g for g in range(c) if g != drop], dtype=np.intp)
        self.cluster_index = design.cluster_index
        self.w = w
        self.wsq = w * w
        self.sum_wsq = float(self.wsq.sum())
        self.cluster_wsums = np.bincount(
            design.cluster_index, weights=w, minlength=design.d
        )
        self.wt = w[:, None] * t_hat
        moments = estimate_bc(t_hat, design)
        self.b_hat = moments.b_hat
        self.c_hat = moments.c_hat if moments.has_within_pairs else None
        self.cross_term_dropped = not moments.has_within_pairs

    def _pieces(self, labels: np.ndarray):
        r, n = labels.shape
        c, d = self.c, self.d
        flat_rg = (np.arange(r, dtype=np.intp)[:, None] * c + labels).ravel()
        weights = np.broadcast_to(self.w, (r, n)).ravel()
        q = np.bincount(flat_rg, weights=weights, minlength=r * c).reshape(r, c)
        t2 = np.bincount(
            flat_rg,
            weights=np.broadcast_to(self.wsq, (r, n)).ravel(),
            minlength=r * c,
        ).reshape(r, c)
        s = np.empty((r, c, self.p))
        for col in range(self.p):
            s[:, :, col] = np.bincount(
                flat_rg,
                weights=np.broadcast_to(self.wt[:, col], (r, n)).ravel(),
                minlength=r * c,
            ).reshape(r, c)
        flat_rkg = (
            np.arange(r, dtype=np.intp)[:, None] * (d * c)
            + self.cluster_index[None, :] * c
            + labels
        ).ravel()
        mw = np.bincount(flat_rkg, weights=weights, minlength=r * d * c).reshape(
            r, d, c
        )
        return q, t2, s, mw

    def assemble(self, labels: np.ndarray):
        """Middle matrices and statistic vectors for label rows."""
        labels = np.asarray(labels, dtype=np.intp)
        if labels.ndim == 1:
            labels = labels[None, :]
        q, t2, s, mw = self._pieces(labels)
        n, c = self.n, self.c
        r = q.shape[0]
        # X0' W^2 X0 from per-group weight aggregates.
        xwx = np.zeros((r, c, c))
        diag = np.arange(c)
        xwx[:, diag, diag] = t2
        cross = t2[:, :, None] * q[:, None, :]
        xwx -= (cross + cross.transpose(0, 2, 1)) / n
        xwx += self.sum_wsq * (q[:, :, None] * q[:, None, :]) / n**2
        # Cluster sums of the weighted centered membership columns.
        g = mw - (self.cluster_wsums[None, :, None] / n) * q[:, None, :]
        between = np.einsum("rka,rkb->rab", g, g)
        keep = self.keep
        d1 = (xwx / n)[:, keep][:, :, keep]
        m = keep.shape[0] * self.p
        middle = np.einsum("rab,pq->rapbq", d1, self.b_hat).reshape(r, m, m)
        if self.c_hat is not None:
            d2 = ((between - xwx) / n)[:, keep][:, :, keep]
            middle += np.einsum("rab,pq->rapbq", d2, self.c_hat).reshape(
                r, m, m
            )
        tvec = s[:, keep, :].reshape(r, m) / np.sqrt(n)
        return middle, tvec

    def statistics(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.intp)
        if labels.ndim == 1:
            labels = labels[None, :]
        total = labels.shape[0]
        out = np.empty(total)
        chunk = max(1, 4_000_000 // max(self.d * self.c, 1))
        for start in range(0, total, chunk):
            middle, tvec = self.assemble(labels[start : start + chunk])
            try:
                solved = np.linalg.solve(middle, tvec[..., None])[..., 0]
            except np.linalg.LinAlgError:
                solved = np.stack(
                    [pinv_psd(mm) @ vv for mm, vv in zip(middle, tvec)]
                )
            out[start : start + middle.shape[0]] = np.einsum(
                "rm,rm->r", tvec, solved
            )
        return np.maximum(out, 0.0)


def _validated(y, design, weights, kind):
    if design.group_index is None:
        raise DesignError("group comparisons need group labels in the design")
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n:
        raise ValueError(
            f"data has {y.shape[0]} rows but design describes {design.n}"
        )
    w = check_weights(weights, design, per_group=True)
    t_hat, _ = centered_scores(y, design, w, kind)
    return y, w, t_hat


def c_sample_test(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    *,
    drop_group: int | None = None,
) -> TestResult:
    """Test equality of the c group centers against chi2(p(c-1)).

    Scores are inner-centered from the pooled sample, so the statistic
    depends on group labels only through aggregation.  Which group is
    dropped from the contrast basis is immaterial up to numerical noise.
    """
    y, w, t_hat = _validated(y, design, weights, kind)
    engine = _StatisticEngine(t_hat, design, w, drop_group)
    middle, tvec = engine.assemble(design.group_index)
    minv, rank_deficient = invert_psd(middle[0])
    stat = max(float(tvec[0] @ minv @ tvec[0]), 0.0)
    df = y.shape[1] * (design.c - 1)
    return TestResult(
        statistic=stat,
        df=df,
        p_asymptotic=chi2_tail(stat, df),
        kind=kind,
        n=design.n,
        middle_matrix=middle[0],
        weights_used=w,
        rank_deficient=rank_deficient,
        cross_term_dropped=engine.cross_term_dropped,
    )


def permutation_pvalue(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    scheme: str = "B",
    *,
    reps: int = 999,
    stream: RandomStream | np.random.Generator | int = 0,
    exhaustive: bool = False,
) -> ResamplingResult:
    """Reference the c-sample statistic against group-label permutations.

    Weights stay fixed as supplied for the observed design.  Exhaustive
    mode enumerates every within-cluster relabeling (scheme B only) and
    counts the observed labeling as a member of its own orbit; sampling
    uses the add-one rule, and reps = 0 returns p = 1.
    """
    y, w, t_hat = _validated(y, design, weights, kind)
    engine = _StatisticEngine(t_hat, design, w)
    observed = float(engine.statistics(design.group_index)[0])
    if exhaustive:
        if scheme != "B":
            raise ValueError(
                "exhaustive enumeration covers within-cluster relabelings "
                "(scheme B) only"
            )
        rows = exhaustive_within_cluster_relabelings(design)
        stats = engine.statistics(rows)
        own = np.flatnonzero(np.all(rows == design.group_index, axis=1))
        observed = float(stats[own[0]])
        count = int(np.count_nonzero(stats >= observed))
        return ResamplingResult(
            p_value=count / rows.shape[0],
            method=f"permutation-{scheme}",
            draws=rows.shape[0],
            exceed_count=count,
            exhaustive=True,
            statistic=observed,
        )
    reps = int(reps)
    if reps < 0:
        raise ValueError("reps must be nonnegative")
    if reps == 0:
        return ResamplingResult(
            p_value=1.0,
            method=f"permutation-{scheme}",
            draws=0,
            exceed_count=0,
            exhaustive=False,
            statistic=observed,
        )
    rows = permutations(design, scheme, reps, stream)
    stats = engine.statistics(rows)
    count = int(np.count_nonzero(stats >= observed))
    return ResamplingResult(
        p_value=(1 + count) / (reps + 1),
        method=f"permutation-{scheme}",
        draws=reps,
        exceed_count=count,
        exhaustive=False,
        statistic=observed,
    )


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def _subdesign(design: Design, rows: np.ndarray) -> Design:
    sub_index = design.cluster_index[rows]
    uniq, inverse = np.unique(sub_index, return_inverse=True)
    sizes = np.bincount(inverse, minlength=uniq.shape[0]).astype(np.intp)
    return Design(cluster_index=inverse.astype(np.intp), cluster_sizes=sizes)


def group_centers(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GroupEstimates:
    """Estimate each group's center: c independent one-sample problems."""
    if design.group_index is None:
        raise DesignError("group centers need group labels in the design")
    y = np.asarray(y, dtype=float)
    w = check_weights(weights, design, per_group=True)
    estimates = []
    for g in range(design.c):
        rows = design.group_index == g
        try:
            estimates.append(
                estimate_location(
                    y[rows],
                    _subdesign(design, rows),
                    w[rows],
                    kind,
                    tol=tol,
                    max_iter=max_iter,
                )
            )
        except EstimationError as exc:
            raise EstimationError(
                f"group {g} center did not converge: {exc}",
                trace=getattr(exc, "trace", None),
            ) from exc
    beta = np.vstack([est.mu_hat for est in estimates])
    return GroupEstimates(
        beta_hat=beta, estimates=tuple(estimates), theta={}, kind=kind
    )


def _gamma_constants(design: Design, w: np.ndarray, i: int, j: int):
    """Finite-sample gamma constants from the three design quadratic forms."""
    xi = (design.group_index == i).astype(float)
    xj = (design.group_index == j).astype(float)
    n_i, n_j = float(xi.sum()), float(xj.sum())
    n = float(design.n)
    wi, wj = w * xi, w * xj
    gamma_b = (n / n_i) * float(wi @ wi) / n_i + (n / n_j) * float(wj @ wj) / n_j
    if design.k == 0:
        return gamma_b, 0.0, n_i, n_j
    swi = np.bincount(design.cluster_index, weights=wi, minlength=design.d)
    swj = np.bincount(design.cluster_index, weights=wj, minlength=design.d)
    quad_ii = float(swi @ swi) - float(wi @ wi)
    quad_jj = float(swj @ swj) - float(wj @ wj)
    cross = float(swi @ swj)
    root = np.sqrt(n_i * n_j)
    gamma_c = (
        (n / n_i) * quad_ii / n_i
        + (n / n_j) * quad_jj / n_j
        - 2.0 * (n / root) * cross / root
    )
    return gamma_b, gamma_c, n_i, n_j


def _invert_a(a: np.ndarray):
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > ILL_CONDITIONED:
        return pinv_psd(a), cond, (
            "ill-conditioned score derivative; covariance unreliable",
        )
    return np.linalg.inv(a), cond, ()


def _rank_alignment(
    y: np.ndarray,
    design: Design,
    w: np.ndarray,
    tol: float,
    max_iter: int,
):
    """All pairwise two-sample difference estimates, antisymmetrized.

    pairing[r, s] estimates mu_r - mu_s; each unordered pair is solved
    once (difference cloud of group s minus group r with product weights)
    and reused with opposite sign for the flipped order.
    """
    c, p = design.c, y.shape[1]
    pairing = np.zeros((c, c, p))
    converged = True
    for r in range(c):
        rows_r = design.group_index == r
        for s in range(r + 1, c):
            rows_s = design.group_index == s
            points, cloud_w = paired_difference_cloud(
                y[rows_r], y[rows_s], w[rows_r], w[rows_s]
            )
            sol = weighted_geometric_median(
                points, cloud_w, tol=tol, max_iter=max_iter
            )
            converged = converged and sol.converged
            # sol.point estimates mu_s - mu_r.
            pairing[r, s] = -sol.point
            pairing[s, r] = sol.point
    return pairing, converged


def pairwise_difference(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    i: int = 0,
    j: int = 1,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PairwiseDifference:
    """Estimate theta_ij = mu_j - mu_i with two covariance estimates.

    identity and sign kinds difference the per-group centers; the rank
    kind solves the two-sample pairwise-difference median directly.
    ``covariance`` is the gamma decomposition around pooled residual
    moments; ``covariance_alt`` aggregates the weighted score sums of the
    two groups only.  Flipped arguments return the exact negation.
    """
    if design.group_index is None:
        raise DesignError("pairwise differences need group labels")
    if kind not in PAIRWISE_KINDS:
        raise ValueError(
            f"pairwise differences support kinds {PAIRWISE_KINDS}, got {kind!r}"
        )
    c = design.c
    if not (0 <= i < c and 0 <= j < c) or i == j:
        raise ValueError(f"need two distinct groups out of {c}")
    if i > j:
        flipped = pairwise_difference(
            y, design, weights, kind, j, i, tol=tol, max_iter=max_iter
        )
        return PairwiseDifference(
            i=i,
            j=j,
            theta=-flipped.theta,
            covariance=flipped.covariance,
            covariance_alt=flipped.covariance_alt,
            gamma_b=flipped.gamma_b,
            gamma_c=flipped.gamma_c,
            prefer_alt=flipped.prefer_alt,
            kind=kind,
            converged=flipped.converged,
            notes=flipped.notes,
        )
    y = np.asarray(y, dtype=float)
    w = check_weights(weights, design, per_group=True)
    notes: list[str] = []
    if kind == "rank":
        pairing, converged = _rank_alignment(y, design, w, tol, max_iter)
        theta = pairing[j, i]  # mu_j - mu_i
        shift = pairing[design.group_index, 0]
        t_hat = spatial_ranks(y - shift, w)
        a = a_hat(y, design, "rank", pairing=pairing)
    else:
        centers = group_centers(y, design, w, kind, tol=tol, max_iter=max_iter)
        converged = all(est.converged for est in centers.estimates)
        theta = centers.beta_hat[j] - centers.beta_hat[i]
        residuals = y - centers.beta_hat[design.group_index]
        t_hat = residuals if kind == "identity" else spatial_signs(residuals)
        a = a_hat(residuals, design, kind)
    moments = estimate_bc(t_hat, design, w)
    gamma_b, gamma_c, n_i, n_j = _gamma_constants(design, w, i, j)
    a_inv, cond, cond_notes = _invert_a(a)
    notes.extend(cond_notes)
    core = gamma_b * moments.b_hat + gamma_c * moments.c_hat
    covariance = a_inv @ core @ a_inv.T
    covariance = 0.5 * (covariance + covariance.T)
    w_star = (design.group_index == j) * w / n_j - (
        design.group_index == i
    ) * w / n_i
    u = cluster_sums(t_hat, design, w_star)
    covariance_alt = a_inv @ (design.n * (u.T @ u)) @ a_inv.T
    covariance_alt = 0.5 * (covariance_alt + covariance_alt.T)
    traces = []
    for g in (i, j):
        rows = design.group_index == g
        traces.append(float(np.sum(t_hat[rows] ** 2)) / float(rows.sum()))
    prefer_alt = max(traces) > HETEROGENEITY_RATIO * min(traces)
    return PairwiseDifference(
        i=i,
        j=j,
        theta=theta,
        covariance=covariance,
        covariance_alt=covariance_alt,
        gamma_b=gamma_b,
        gamma_c=gamma_c,
        prefer_alt=prefer_alt,
        kind=kind,
        converged=converged,
        notes=tuple(notes),
    )


def group_differences(
    y: np.ndarray,
    design: Design,
    weights: np.ndarray | None = None,
    kind: str = "sign",
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GroupEstimates:
    """Group centers (odd kinds) plus every pairwise difference."""
    theta: dict[tuple[int, int], PairwiseDifference] = {}
    for a in range(design.c):
        for b in range(a + 1, design.c):
            diff = pairwise_difference(
                y, design, weights, kind, a, b, tol=tol, max_iter=max_iter
            )
            theta[(a, b)] = diff
            theta[(b, a)] = PairwiseDifference(
                i=b,
                j=a,
                theta=-diff.theta,
                covariance=diff.covariance,
                covariance_alt=diff.covariance_alt,
                gamma_b=diff.gamma_b,
                gamma_c=diff.gamma_c,
                prefer_alt=diff.prefer_alt,
                kind=kind,
                converged=diff.converged,
                notes=diff.notes,
            )
    if kind == "rank":
        return GroupEstimates(
            beta_hat=None, estimates=(), theta=theta, kind=kind
        )
    centers = group_centers(y, design, weights, kind, tol=tol, max_iter=max_iter)
    return GroupEstimates(
        beta_hat=centers.beta_hat,
        estimates=centers.estimates,
        theta=theta,
        kind=kind,
    )


def design_limits(design: Design, weights: np.ndarray | None = None) -> DesignLimits:
    """Empirical plug-ins for the design factor matrices and group shares."""
    if design.group_index is None:
        raise DesignError("design limits need group labels")
    w = check_weights(weights, design, per_group=True)
    n, c = design.n, design.c
    x = np.zeros((n, c))
    x[np.arange(n), design.group_index] = 1.0
    x0 = x - np.outer(np.ones(n), (w @ x) / n)
    wx0 = w[:, None] * x0
    d_b = wx0.T @ wx0 / n
    g = cluster_sums(wx0, design)
    d_c = (g.T @ g - n * d_b) / n
    lam = (w @ x) / n
    return DesignLimits(
        d_b=0.5 * (d_b + d_b.T), d_c=0.5 * (d_c + d_c.T), lam=lam
    )
