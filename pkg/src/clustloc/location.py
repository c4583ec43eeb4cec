"""Weighted location solvers built on the Weiszfeld iteration.

The weighted spatial median solves sum_i w_i (y_i - mu)/||y_i - mu|| = 0.
The iteration is the classical reweighted mean; when an iterate lands on a
data point (a kink of the objective) the update follows Vardi-Zhang: the
point is optimal when the leave-one-out gradient norm does not exceed its
weight, otherwise the step is damped past the kink.  A step-halving guard
keeps the objective nonincreasing in all cases.

Hodges-Lehmann style estimates reuse the same solver on derived point
clouds: symmetrized pairs (y_i + y_j)/2 with weights w_i w_j for the
one-sample problem, pairwise differences between two groups for the
two-sample problem.

``batch_weighted_spatial_median`` runs many independent problems in one
vectorized iteration; rows are frozen as soon as they converge so results
do not depend on what else shares the batch.  It skips the kink handling
(a measure-zero event for continuous data) and exists because the
simulation harness solves tens of thousands of these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, EstimationError

__all__ = [
    "SolverResult",
    "weighted_coordinate_median",
    "weighted_geometric_median",
    "symmetrized_pair_cloud",
    "paired_difference_cloud",
    "batch_weighted_spatial_median",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass(frozen=True)
class SolverResult:
    point: np.ndarray
    iterations: int
    converged: bool
    residual: float
    trace: tuple[tuple[int, float], ...] = ()


def weighted_coordinate_median(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Coordinate-wise weighted median, the solver's starting point.

    When half the total weight falls exactly on an order-statistic
    boundary the midpoint of the neighbors is used, which makes the
    median (and hence the whole iteration) odd: flipping the sign of the
    data flips the sign of the result.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    half = 0.5 * weights.sum()
    out = np.empty(points.shape[1])
    for j in range(points.shape[1]):
        order = np.argsort(points[:, j], kind="stable")
        vals = points[order, j]
        cum = np.cumsum(weights[order])
        i = int(np.searchsorted(cum, half, side="left"))
        if cum[i] == half and i + 1 < vals.shape[0]:
            out[j] = 0.5 * (vals[i] + vals[i + 1])
        else:
            out[j] = vals[i]
    return out


def _distances(points: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points - mu, axis=1)


def weighted_geometric_median(
    points: np.ndarray,
    weights: np.ndarray | None = None,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: np.ndarray | None = None,
) -> SolverResult:
    """Minimize sum_i w_i ||y_i - mu|| over mu.

    Convergence is declared on the estimating-equation residual: the norm
    of sum_i w_i S(y_i - mu), or its subgradient analogue when mu sits on
    a data point.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an n x p array")
    n = points.shape[0]
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {weights.shape}")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")

    spread = _distances(points, points.mean(axis=0))
    scale = float(spread.max())
    if scale == 0.0:
        raise DegenerateDataError("all observations coincide")
    eps = 1e-12 * scale

    mu = weighted_coordinate_median(points, weights) if init is None else np.asarray(
        init, dtype=float
    )
    trace: list[tuple[int, float]] = []
    residual = np.inf
    converged = False
    iterations = 0
    dist = _distances(points, mu)
    objective = float(weights @ dist)

    for iterations in range(1, max_iter + 1):
        at_point = dist <= eps
        away = ~at_point
        inv = np.where(away, weights / np.maximum(dist, eps), 0.0)
        grad = ((points - mu) * inv[:, None]).sum(axis=0)
        grad_norm = float(np.linalg.norm(grad))
        anchored = float(weights[at_point].sum())
        residual = max(0.0, grad_norm - anchored)
        trace.append((iterations, residual))
        if residual <= tol:
            converged = True
            break
        # A single observation holding enough weight is itself the median;
        # the smooth update then stalls just outside the kink with the
        # stationarity gap as its residual.  Test the subgradient condition
        # at the nearest observation directly once the iterate is close.
        near = int(np.argmin(dist))
        if eps < dist[near] <= 1e-4 * scale:
            center = points[near]
            d_pt = _distances(points, center)
            on = d_pt <= eps
            pull = (
                (points - center)
                * np.where(on, 0.0, weights / np.maximum(d_pt, eps))[:, None]
            ).sum(axis=0)
            gap = max(0.0, float(np.linalg.norm(pull)) - float(weights[on].sum()))
            if gap <= tol:
                mu, residual, converged = center.copy(), gap, True
                trace.append((iterations, gap))
                break
        total_inv = float(inv.sum())
        if total_inv == 0.0:  # pragma: no cover - excluded by degeneracy check
            raise DegenerateDataError("no observations away from the iterate")
        weiszfeld = (inv[:, None] * points).sum(axis=0) / total_inv
        if anchored > 0.0:
            # Vardi-Zhang: damp the step by the mass sitting on the kink.
            factor = max(0.0, 1.0 - anchored / grad_norm)
            candidate = mu + factor * (weiszfeld - mu)
        else:
            candidate = weiszfeld
        # Step halving keeps the objective nonincreasing.
        for _ in range(60):
            cand_dist = _distances(points, candidate)
            cand_obj = float(weights @ cand_dist)
            if cand_obj <= objective * (1.0 + 1e-14):
                break
            candidate = 0.5 * (candidate + mu)
        mu, dist, objective = candidate, cand_dist, cand_obj

    if not converged:
        raise EstimationError(
            f"spatial median failed to converge: residual {residual:.3e} "
            f"after {iterations} iterations",
            trace=trace,
        )
    return SolverResult(
        point=mu,
        iterations=iterations,
        converged=converged,
        residual=residual,
        trace=tuple(trace[-10:]),
    )


def symmetrized_pair_cloud(
    points: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Walsh averages (y_i + y_j)/2 for i <= j with weights w_i w_j.

    Off-diagonal pairs carry 2 w_i w_j (both orders), diagonal pairs w_i^2.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = points.shape[0]
    iu, ju = np.triu_indices(n)
    cloud = 0.5 * (points[iu] + points[ju])
    w = weights[iu] * weights[ju] * np.where(iu == ju, 1.0, 2.0)
    return cloud, w


def paired_difference_cloud(
    points_from: np.ndarray,
    points_to: np.ndarray,
    weights_from: np.ndarray,
    weights_to: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """All differences (to - from) with product weights."""
    points_from = np.asarray(points_from, dtype=float)
    points_to = np.asarray(points_to, dtype=float)
    cloud = (points_to[:, None, :] - points_from[None, :, :]).reshape(
        -1, points_from.shape[1]
    )
    w = (np.asarray(weights_to)[:, None] * np.asarray(weights_from)[None, :]).reshape(-1)
    return cloud, w


def batch_weighted_spatial_median(
    batch: np.ndarray,
    weights: np.ndarray,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve many weighted spatial median problems at once.

    ``batch`` is (r, n, p); ``weights`` is (n,) shared across problems.
    Returns (medians (r, p), converged (r,) bool).  Rows freeze at their
    first iterate that meets the residual tolerance, so each row's result
    matches a solo run of the same iteration.
    """
    batch = np.asarray(batch, dtype=float)
    r, n, p = batch.shape
    weights = np.asarray(weights, dtype=float)
    # Coordinate-wise weighted median start, vectorized over rows.
    half = 0.5 * weights.sum()
    order = np.argsort(batch, axis=1)
    sorted_vals = np.take_along_axis(batch, order, axis=1)
    cum = np.cumsum(weights[order], axis=1)
    pick = np.argmax(cum >= half, axis=1)  # (r, p) first index past half mass
    mu = np.take_along_axis(sorted_vals, pick[:, None, :], axis=1)[:, 0, :]

    tiny = 1e-300
    active = np.arange(r)
    out = mu.copy()
    converged = np.zeros(r, dtype=bool)
    for _ in range(max_iter):
        sub = batch[active]
        cur = out[active]
        diff = sub - cur[:, None, :]
        dist = np.sqrt(np.einsum("rnp,rnp->rn", diff, diff))
        np.maximum(dist, tiny, out=dist)
        inv = weights[None, :] / dist
        grad = np.einsum("rn,rnp->rp", inv, diff)
        res = np.linalg.norm(grad, axis=1)
        done = res <= tol
        converged[active[done]] = True
        if done.any():
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            sub, diff, inv = sub[keep], diff[keep], inv[keep]
        out[active] += np.einsum("rn,rnp->rp", inv, diff) / inv.sum(axis=1)[:, None]
    return out, converged
