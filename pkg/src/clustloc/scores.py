"""Score transforms: spatial signs, spatial ranks, spatial signed ranks.

The spatial sign of y is y/||y|| with the zero vector mapped to zero.  The
spatial rank of y_i within a sample is the average sign of its differences
to all observations; the signed rank symmetrizes over reflections,

    rank_i   = (1/n) sum_j S(y_i - y_j)
    signed_i = (1/2n) sum_j [S(y_i - y_j) + S(y_i + y_j)].

All pairwise passes run in row blocks so memory stays at
O(block * n * p) regardless of sample size.

``centered_scores`` produces inner-centered scores for group comparisons:
the score transform is applied after removing a location estimated from
the pooled sample (weighted mean for the identity score, weighted spatial
median for the sign score), while weighted ranks n^{-1} sum_j w_j S(y_i - y_j)
are centered by construction.  In every case sum_i w_i T_i = 0 up to the
solver tolerance.

``a_hat`` estimates the derivative matrix that links a score's expectation
to a location shift, E grad T(eps), needed for estimate covariances and
efficiency comparisons:

* identity: the identity matrix;
* sign: average of A(eps_i) with A(y) = (I - yy'/||y||^2)/||y||;
* signed-rank: average of A((eps_i + eps_j)/2) over between-cluster pairs;
* rank: average of A(y_i - y_j - theta_rs) over between-cluster pairs with
  i in group r, j in group s, where theta_rs estimates the r-minus-s
  location difference.
"""

from __future__ import annotations

import numpy as np

from .design import Design, check_weights
from .errors import DegenerateDataError
from .location import weighted_geometric_median

__all__ = [
    "SCORE_KINDS",
    "ODD_SCORE_KINDS",
    "spatial_sign",
    "spatial_signs",
    "spatial_ranks",
    "spatial_signed_ranks",
    "centered_scores",
    "a_hat",
]

SCORE_KINDS = ("identity", "sign", "rank", "signed-rank")
# Kinds usable as plain one-sample scores T(y) with T(-y) = -T(y).
ODD_SCORE_KINDS = ("identity", "sign", "signed-rank")

_BLOCK = 128
_ZERO_RTOL = 1e-12


def _validate_kind(kind: str) -> str:
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}; expected one of {SCORE_KINDS}")
    return kind


def _data_scale(y: np.ndarray) -> float:
    """Scale against which a pairwise difference counts as zero."""
    centered = y - y.mean(axis=0)
    return 2.0 * float(np.linalg.norm(centered, axis=1).max(initial=0.0))


def spatial_sign(y: np.ndarray) -> np.ndarray:
    """Unit vector y/||y||, with the zero vector mapped to zero."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("spatial_sign expects a single vector; see spatial_signs")
    norm = float(np.linalg.norm(y))
    if norm == 0.0:
        return np.zeros_like(y)
    return y / norm


def spatial_signs(y: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Row-wise spatial signs; rows with norm below 1e-12 * scale become 0."""
    y = np.asarray(y, dtype=float)
    norms = np.linalg.norm(y, axis=-1)
    if scale is None:
        scale = float(norms.max(initial=0.0))
    cutoff = _ZERO_RTOL * scale
    safe = np.where(norms > cutoff, norms, 1.0)
    out = y / safe[..., None]
    out[norms <= cutoff] = 0.0
    return out


def _pair_sign_sum(
    y_left: np.ndarray,
    y_right: np.ndarray,
    row_weights: np.ndarray,
    *,
    sign: float,
    scale: float,
    block: int = _BLOCK,
) -> np.ndarray:
    """Rows i of sum_j w_j S(y_left_i + sign * y_right_j), blockwise.

    ``row_weights`` has shape (k, n): several weightings share one pass.
    """
    acc = np.zeros((y_left.shape[0], row_weights.shape[0], y_left.shape[1]))
    for start in range(0, y_left.shape[0], block):
        stop = min(start + block, y_left.shape[0])
        diff = y_left[start:stop, None, :] + sign * y_right[None, :, :]
        units = spatial_signs(diff, scale=scale)
        acc[start:stop] = np.einsum("kn,bnp->bkp", row_weights, units)
    return acc


def _as_weight_stack(weights, n: int) -> tuple[np.ndarray, bool]:
    if weights is None:
        return np.ones((1, n)), False
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        return w[None, :], False
    if w.ndim == 2 and w.shape[1] == n:
        return w, True
    raise ValueError(f"weights must have shape ({n},) or (k, {n})")


def spatial_ranks(y: np.ndarray, weights=None) -> np.ndarray:
    """Weighted spatial ranks T_i = n^{-1} sum_j w_j S(y_i - y_j).

    ``weights`` may be a single vector or a (k, n) stack of weightings,
    which share one pairwise pass; the result is (n, p) or (k, n, p).
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    stack, stacked = _as_weight_stack(weights, n)
    scale = _data_scale(y)
    acc = _pair_sign_sum(y, y, stack, sign=-1.0, scale=scale)
    ranks = np.moveaxis(acc, 1, 0) / n
    return ranks if stacked else ranks[0]


def spatial_signed_ranks(y: np.ndarray) -> np.ndarray:
    """Signed ranks (1/2n) sum_j [S(y_i - y_j) + S(y_i + y_j)]."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    ones = np.ones((1, n))
    scale = _data_scale(y)
    acc = _pair_sign_sum(y, y, ones, sign=-1.0, scale=scale)
    acc += _pair_sign_sum(y, y, ones, sign=+1.0, scale=scale)
    return acc[:, 0, :] / (2 * n)


def centered_scores(
    y: np.ndarray,
    design: Design,
    weights=None,
    kind: str = "sign",
    location: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inner-centered scores for group comparisons, with the center used.

    The center is estimated from the pooled sample (no group information):
    the weighted mean for the identity score, the weighted spatial median
    for the sign score.  Weighted ranks need no explicit center and reject
    one.  Returns (scores, center); sum_i w_i T_i = 0 up to the location
    solver's tolerance.
    """
    _validate_kind(kind)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    w = np.ones(n) if weights is None else check_weights(weights, design, per_group=design.group_index is not None)
    if kind == "identity":
        center = (w[:, None] * y).sum(axis=0) / n if location is None else np.asarray(location, dtype=float)
        return y - center, center
    if kind == "sign":
        if location is None:
            center = weighted_geometric_median(y, w).point
        else:
            center = np.asarray(location, dtype=float)
        return spatial_signs(y - center, scale=_data_scale(y)), center
    if kind == "rank":
        if location is not None:
            raise ValueError("weighted ranks are centered by construction")
        return spatial_ranks(y, w), None
    raise ValueError("signed-rank scores have no inner-centered group form")


def _hat_matrix_mean(
    vectors: np.ndarray, scale: float
) -> tuple[np.ndarray, int]:
    """Sum of A(v) = (I - vv'/||v||^2)/||v|| over rows with nonzero norm."""
    p = vectors.shape[-1]
    norms = np.linalg.norm(vectors, axis=-1)
    cutoff = _ZERO_RTOL * scale
    keep = norms > cutoff
    count = int(keep.sum())
    if count == 0:
        return np.zeros((p, p)), 0
    v = vectors[keep]
    nv = norms[keep]
    scaled = v / nv[:, None]
    outer = np.einsum("np,nq,n->pq", scaled, scaled, 1.0 / nv)
    total = np.eye(p) * float((1.0 / nv).sum()) - outer
    return total, count


def a_hat(
    residuals: np.ndarray,
    design: Design,
    kind: str = "sign",
    pairing: np.ndarray | None = None,
    block: int = _BLOCK,
) -> np.ndarray:
    """Estimate of E grad T for the given score kind (see module docstring).

    For the rank kind, ``residuals`` are the raw observations and
    ``pairing[r, s]`` must hold the estimated group-r-minus-group-s
    location difference; with no groups a zero shift is used.
    """
    _validate_kind(kind)
    y = np.asarray(residuals, dtype=float)
    n, p = y.shape
    if kind == "identity":
        return np.eye(p)
    scale = _data_scale(y) if kind != "sign" else 2.0 * float(
        np.linalg.norm(y, axis=1).max(initial=0.0)
    )
    if kind == "sign":
        total, count = _hat_matrix_mean(y, scale)
        if count == 0:
            raise DegenerateDataError("all residuals are zero")
        return total / count

    same_cluster = design.cluster_index[:, None] == design.cluster_index[None, :]
    if kind == "rank":
        if design.group_index is None:
            shift = np.zeros((1, 1, p))
            groups = np.zeros(n, dtype=np.intp)
        else:
            if pairing is None:
                raise ValueError(
                    "rank kind needs pairwise group location estimates (pairing)"
                )
            shift = np.asarray(pairing, dtype=float)
            if shift.shape != (design.c, design.c, p):
                raise ValueError(
                    f"pairing must have shape ({design.c}, {design.c}, {p})"
                )
            groups = design.group_index

    total = np.zeros((p, p))
    count = 0
    for start in range(0, n, block):
        stop = min(start + block, n)
        if kind == "signed-rank":
            pairs = 0.5 * (y[start:stop, None, :] + y[None, :, :])
        else:
            pairs = (
                y[start:stop, None, :]
                - y[None, :, :]
                - shift[groups[start:stop]][:, groups, :]
            )
        valid = ~same_cluster[start:stop]
        flat = pairs[valid]
        part, cnt = _hat_matrix_mean(flat, scale)
        total += part
        count += cnt
    if count == 0:
        raise DegenerateDataError(
            "no usable between-cluster pairs for the derivative estimate"
        )
    return total / count
