"""Cluster/group designs, observation weights, and label resampling.

A design records which observations share a cluster and, when present,
which treatment group each observation belongs to.  Everything downstream
depends on the labels only through this structure: cluster sizes, group
sizes, and the group-by-cluster contingency table.

Weights are diagonal, constant within a cluster (one-sample problems) or
within a cluster-group cell (group problems), and normalized to sum to n
so that weighted statistics stay on the unweighted scale.

Resampling schemes produce group relabelings whose contingency table is
equal to the original up to row and column permutations ("equivalent in
structure"), which is exactly the condition under which the group test
statistic's permutation null is valid:

* scheme B shuffles labels independently within each cluster;
* scheme C permutes whole-cluster labels among clusters of equal size and
  requires every cluster to be treatment-homogeneous;
* scheme A composes a swap of whole within-cluster label patterns between
  equal-size clusters with a scheme-B shuffle, so each draw preserves the
  table by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignError
from .numerics import RandomStream, as_generator

__all__ = [
    "DataSet",
    "Design",
    "build_design",
    "membership_matrix",
    "normalize_weights",
    "check_weights",
    "optimal_weights_one_sample",
    "optimal_weights_two_sample",
    "estimate_rho",
    "sign_flips",
    "exhaustive_sign_flips",
    "permutations",
    "exhaustive_within_cluster_relabelings",
    "contingency_table",
    "canonical_table",
    "equivalent_in_structure",
]

_EXHAUSTIVE_FLIP_LIMIT = 20  # 2^20 sign patterns is the enumeration ceiling
_EXHAUSTIVE_PERM_LIMIT = 1 << 20


@dataclass(frozen=True)
class DataSet:
    """Observations with cluster labels and optional group labels.

    ``y`` is n x p with p >= 2; labels may be any hashable values and are
    kept as given (the Design relabels them to contiguous indices).
    """

    y: np.ndarray
    cluster: np.ndarray
    group: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError(f"y must be a 2-d array, got ndim={y.ndim}")
        n, p = y.shape
        if n < 2:
            raise ValueError(f"need at least 2 observations, got {n}")
        if p < 2:
            raise ValueError(f"need at least 2 response coordinates, got {p}")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")
        cluster = np.asarray(self.cluster)
        if cluster.shape != (n,):
            raise ValueError(
                f"cluster labels must have shape ({n},), got {cluster.shape}"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cluster", cluster)
        if self.group is not None:
            group = np.asarray(self.group)
            if group.shape != (n,):
                raise ValueError(
                    f"group labels must have shape ({n},), got {group.shape}"
                )
            object.__setattr__(self, "group", group)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class Design:
    """Relabeled cluster/group structure of a data set.

    ``cluster_index`` maps each observation to 0..d-1 in order of first
    appearance, likewise ``group_index`` to 0..c-1 when groups exist.
    ``k`` counts ordered within-cluster pairs, sum m_i (m_i - 1).
    """

    cluster_index: np.ndarray
    cluster_sizes: np.ndarray
    group_index: np.ndarray | None = None
    group_sizes: np.ndarray | None = None
    contingency: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        ci = np.ascontiguousarray(self.cluster_index, dtype=np.intp)
        ci.setflags(write=False)
        object.__setattr__(self, "cluster_index", ci)
        sizes = np.ascontiguousarray(self.cluster_sizes, dtype=np.intp)
        sizes.setflags(write=False)
        object.__setattr__(self, "cluster_sizes", sizes)

    @property
    def n(self) -> int:
        return self.cluster_index.shape[0]

    @property
    def d(self) -> int:
        return self.cluster_sizes.shape[0]

    @property
    def c(self) -> int:
        return 0 if self.group_sizes is None else self.group_sizes.shape[0]

    @property
    def k(self) -> int:
        m = self.cluster_sizes
        return int(np.sum(m * (m - 1)))

    def with_groups(self, group_index: np.ndarray) -> "Design":
        """Same clustering, different group labels (already 0..c-1)."""
        group_index = np.asarray(group_index, dtype=np.intp)
        c = int(group_index.max()) + 1
        sizes = np.bincount(group_index, minlength=c).astype(np.intp)
        table = contingency_table(group_index, self.cluster_index, c, self.d)
        return Design(
            cluster_index=self.cluster_index,
            cluster_sizes=self.cluster_sizes,
            group_index=group_index,
            group_sizes=sizes,
            contingency=table,
        )


def _relabel(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Map labels to 0..k-1 in order of first appearance."""
    _, first_pos, inverse = np.unique(values, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_pos))
    return order[inverse].astype(np.intp), len(first_pos)


def build_design(
    data: DataSet | np.ndarray, group: np.ndarray | None = None
) -> Design:
    """Construct the Design for a data set or for raw label arrays.

    Accepts either a DataSet (labels taken from it) or a cluster label
    array plus an optional group label array.
    """
    if isinstance(data, DataSet):
        cluster_labels, group_labels = data.cluster, data.group
    else:
        cluster_labels, group_labels = np.asarray(data), group
    if cluster_labels.ndim != 1 or cluster_labels.shape[0] == 0:
        raise ValueError("cluster labels must form a nonempty 1-d array")
    cluster_index, d = _relabel(cluster_labels)
    cluster_sizes = np.bincount(cluster_index, minlength=d).astype(np.intp)
    group_index = group_sizes = table = None
    if group_labels is not None:
        group_labels = np.asarray(group_labels)
        if group_labels.shape != cluster_labels.shape:
            raise ValueError("group labels must match cluster labels in length")
        group_index, c = _relabel(group_labels)
        if c < 2:
            raise DesignError("group analyses need at least two groups")
        group_sizes = np.bincount(group_index, minlength=c).astype(np.intp)
        table = contingency_table(group_index, cluster_index, c, d)
    return Design(
        cluster_index=cluster_index,
        cluster_sizes=cluster_sizes,
        group_index=group_index,
        group_sizes=group_sizes,
        contingency=table,
    )


def membership_matrix(index: np.ndarray, count: int) -> np.ndarray:
    """Dense 0/1 membership matrix (n x count) for an index vector."""
    out = np.zeros((index.shape[0], count))
    out[np.arange(index.shape[0]), index] = 1.0
    return out


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def normalize_weights(w: np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate nonnegativity and rescale so the weights sum to n."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be a vector")
    if n is None:
        n = w.shape[0]
    if w.shape[0] != n:
        raise ValueError(f"expected {n} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if total <= 0:
        raise ValueError("weights must have positive sum")
    return w * (n / total)


def check_weights(
    w: np.ndarray | None, design: Design, *, per_group: bool = False
) -> np.ndarray:
    """Return validated weights for a design; None means unit weights.

    One-sample weights must be constant within each cluster; group-problem
    weights (per_group=True) must be constant within each cluster-group
    cell.
    """
    if w is None:
        return np.ones(design.n)
    w = normalize_weights(w, design.n)
    key = design.cluster_index
    if per_group:
        if design.group_index is None:
            raise DesignError("per-group weights need group labels")
        key = design.cluster_index * design.c + design.group_index
    order = np.argsort(key, kind="stable")
    sorted_key, sorted_w = key[order], w[order]
    starts = np.r_[True, sorted_key[1:] != sorted_key[:-1]]
    # Compare each weight to the first weight of its cell.
    positions = np.arange(sorted_w.shape[0])
    first_of_cell = sorted_w[np.maximum.accumulate(np.where(starts, positions, 0))]
    if np.max(np.abs(sorted_w - first_of_cell)) > 1e-8 * max(1.0, float(np.max(w))):
        unit = "cluster-group cell" if per_group else "cluster"
        raise ValueError(f"weights must be constant within each {unit}")
    return w


def optimal_weights_one_sample(design: Design, rho: float) -> np.ndarray:
    """Inverse effective-cluster-size weights, w_i prop 1/(1 + (m_i - 1) rho).

    These maximize the one-sample efficiency under exchangeable
    within-cluster correlation rho of the scores.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    m = design.cluster_sizes[design.cluster_index].astype(float)
    w = 1.0 / (1.0 + (m - 1.0) * rho)
    return normalize_weights(w, design.n)


def optimal_weights_two_sample(design: Design, rho: float) -> np.ndarray:
    """Efficiency-maximizing two-group weights under correlation rho.

    Solves w = Sigma^{-1}(k1 x + k2 1) blockwise per cluster, where
    Sigma = (1 - rho) I + rho G Z Z' G and G flips the sign of the second
    group, with (k1, k2) pinned by w'x = n_1 and w'1 = n.  Balanced
    cluster-by-group designs come out as exactly unit weights.
    """
    if design.group_index is None:
        raise DesignError("two-sample weights need group labels")
    if design.c != 2:
        raise DesignError(f"two-sample weights need exactly 2 groups, got {design.c}")
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    n = design.n
    n1 = float(design.group_sizes[0])
    x1 = (design.group_index == 0).astype(float)
    g = 2.0 * x1 - 1.0
    m = design.cluster_sizes[design.cluster_index].astype(float)
    # Per-cluster Sherman-Morrison: Sigma_b^{-1} z = z/(1-rho) - beta_b g_b (g_b' z)
    beta = rho / ((1.0 - rho) * (1.0 - rho + rho * m))
    g_dot_1 = np.bincount(design.cluster_index, weights=g)[design.cluster_index]
    g_dot_x1 = np.bincount(design.cluster_index, weights=g * x1)[design.cluster_index]
    u = x1 / (1.0 - rho) - beta * g * g_dot_x1  # Sigma^{-1} x1
    v = np.ones(n) / (1.0 - rho) - beta * g * g_dot_1  # Sigma^{-1} 1
    coeffs = np.array([[u @ x1, v @ x1], [u.sum(), v.sum()]])
    try:
        k1, k2 = np.linalg.solve(coeffs, np.array([n1, float(n)]))
    except np.linalg.LinAlgError as exc:
        raise DesignError(f"degenerate two-sample weight system: {exc}") from exc
    w = k1 * u + k2 * v
    if np.any(w < 0):
        raise DesignError("optimal two-sample weights are negative for this design")
    if np.max(np.abs(w - 1.0)) < 1e-12:
        return np.ones(n)
    return normalize_weights(w, n)


def estimate_rho(b_hat: np.ndarray, c_hat: np.ndarray) -> float:
    """Scalar within-cluster score correlation, trace(C)/trace(B), clamped.

    The clamp keeps downstream weight formulas defined: the result lies in
    [0, 1 - 1e-6].
    """
    b_hat = np.asarray(b_hat, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    tb = float(np.trace(b_hat))
    if tb <= 0:
        raise ValueError("B estimate must have positive trace")
    return float(np.clip(np.trace(c_hat) / tb, 0.0, 1.0 - 1e-6))


# ---------------------------------------------------------------------------
# Sign flips
# ---------------------------------------------------------------------------


def sign_flips(
    d: int | Design, count: int, stream: RandomStream | np.random.Generator | int
) -> np.ndarray:
    """Uniform (count x d) array of cluster sign patterns in {-1, +1}."""
    if isinstance(d, Design):
        d = d.d
    if d < 1 or count < 1:
        raise ValueError("need at least one cluster and one draw")
    rng = as_generator(stream)
    return rng.integers(0, 2, size=(count, d)).astype(np.int8) * 2 - 1


def exhaustive_sign_flips(d: int | Design) -> np.ndarray:
    """All 2^d cluster sign patterns, for small d."""
    if isinstance(d, Design):
        d = d.d
    if not (1 <= d <= _EXHAUSTIVE_FLIP_LIMIT):
        raise ValueError(
            f"exhaustive sign flips supported for 1 <= d <= {_EXHAUSTIVE_FLIP_LIMIT}"
        )
    codes = np.arange(1 << d, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(d)) & 1
    return (bits.astype(np.int8) * 2 - 1)


# ---------------------------------------------------------------------------
# Group label permutations
# ---------------------------------------------------------------------------


def _cluster_slices(design: Design) -> list[np.ndarray]:
    order = np.argsort(design.cluster_index, kind="stable")
    bounds = np.cumsum(design.cluster_sizes)[:-1]
    return [np.sort(part) for part in np.split(order, bounds)]


def _require_groups(design: Design) -> np.ndarray:
    if design.group_index is None:
        raise DesignError("permutation schemes need group labels")
    return design.group_index


def permutations(
    design: Design,
    scheme: str,
    count: int,
    stream: RandomStream | np.random.Generator | int,
) -> np.ndarray:
    """Draw (count x n) group relabelings under scheme 'A', 'B' or 'C'.

    Every emitted relabeling is equivalent in structure to the original
    design: scheme B fixes each contingency column, scheme C permutes
    single-group columns among equal-size clusters, and scheme A permutes
    columns among equal-size clusters before an in-cluster shuffle.
    """
    labels = _require_groups(design)
    if count < 1:
        raise ValueError("need at least one draw")
    scheme = scheme.upper()
    if scheme not in {"A", "B", "C"}:
        raise DesignError(f"unknown permutation scheme {scheme!r}")
    rng = as_generator(stream)
    members = _cluster_slices(design)
    sizes = design.cluster_sizes
    size_classes = [np.flatnonzero(sizes == s) for s in np.unique(sizes)]

    def batch_permutations(width: int) -> np.ndarray:
        # Ranks of iid uniforms give uniform random permutations, one per
        # draw, without a Python-level loop over draws.
        return np.argsort(rng.random((count, width)), axis=1)

    if scheme == "C":
        homogeneous = all(np.unique(labels[rows]).size == 1 for rows in members)
        if not homogeneous:
            raise DesignError(
                "scheme C needs treatment-homogeneous clusters "
                "(every cluster entirely in one group)"
            )
        cluster_label = np.array([labels[rows[0]] for rows in members])
        out = np.tile(cluster_label, (count, 1))
        for cls in size_classes:
            idx = batch_permutations(cls.size)
            out[:, cls] = np.take_along_axis(out[:, cls], idx, axis=1)
        return out[:, design.cluster_index]

    out = np.tile(labels, (count, 1))
    if scheme == "A":
        # Swap whole label patterns between clusters of equal size first.
        for cls in size_classes:
            rows = np.stack([members[c] for c in cls])  # (clusters, size)
            patterns = labels[rows]
            idx = batch_permutations(cls.size)
            out[:, rows.ravel()] = patterns[idx].reshape(count, -1)
    # Both A and B finish with an independent shuffle within each cluster.
    for rows in members:
        idx = batch_permutations(rows.size)
        out[:, rows] = np.take_along_axis(out[:, rows], idx, axis=1)
    return out


def exhaustive_within_cluster_relabelings(design: Design) -> np.ndarray:
    """Enumerate every distinct scheme-B relabeling (small designs only)."""
    labels = _require_groups(design)
    members = _cluster_slices(design)
    per_cluster: list[list[tuple]] = []
    total = 1
    for rows in members:
        variants = sorted(set(itertools.permutations(labels[rows].tolist())))
        per_cluster.append(variants)
        total *= len(variants)
        if total > _EXHAUSTIVE_PERM_LIMIT:
            raise ValueError(
                f"exhaustive enumeration exceeds {_EXHAUSTIVE_PERM_LIMIT} relabelings"
            )
    out = np.empty((total, design.n), dtype=np.intp)
    for r, combo in enumerate(itertools.product(*per_cluster)):
        for rows, variant in zip(members, combo):
            out[r][rows] = variant
    return out


# ---------------------------------------------------------------------------
# Equivalence in structure
# ---------------------------------------------------------------------------


def contingency_table(
    group_index: np.ndarray, cluster_index: np.ndarray, c: int, d: int
) -> np.ndarray:
    """c x d table of counts of each group within each cluster."""
    flat = np.asarray(group_index, dtype=np.intp) * d + np.asarray(
        cluster_index, dtype=np.intp
    )
    return np.bincount(flat, minlength=c * d).reshape(c, d)


def canonical_table(table: np.ndarray) -> np.ndarray:
    """Canonical form of a contingency table under row/column permutations.

    For each ordering of the (few) rows the columns are sorted
    lexicographically; the lexicographically smallest matrix over row
    orderings is returned.  Two tables are equal up to independent row and
    column permutations exactly when their canonical forms coincide.
    """
    table = np.asarray(table)
    if table.ndim != 2:
        raise ValueError("contingency table must be 2-d")
    c = table.shape[0]
    if c > 8:
        raise ValueError("canonicalization supports at most 8 groups")
    best: tuple | None = None
    for perm in itertools.permutations(range(c)):
        arranged = table[list(perm)]
        cols = sorted(map(tuple, arranged.T))
        key = tuple(itertools.chain.from_iterable(zip(*cols)))
        if best is None or key < best:
            best = key
            best_cols = cols
    return np.array(best_cols).T


def equivalent_in_structure(
    group1: np.ndarray,
    cluster1: np.ndarray,
    group2: np.ndarray,
    cluster2: np.ndarray,
) -> bool:
    """True when the two designs' tables match up to row/column permutations."""
    d1 = build_design(np.asarray(cluster1), np.asarray(group1))
    d2 = build_design(np.asarray(cluster2), np.asarray(group2))
    if d1.n != d2.n or d1.c != d2.c or d1.d != d2.d:
        raise ValueError(
            "designs must agree in observation, group and cluster counts"
        )
    return bool(
        np.array_equal(canonical_table(d1.contingency), canonical_table(d2.contingency))
    )
