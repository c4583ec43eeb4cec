"""Model-based score moments, noncentrality parameters, and Pitman ARE curves.

For a spherical population (normal or heavy-tailed t) with intracluster
correlation rho, three matrices drive every asymptotic result:

    A = d/dtheta E[T(e + theta)] at theta = 0   (score sensitivity),
    B = E[T(e_i) T(e_i)']                       (marginal score covariance),
    C = E[T(e_i) T(e_j)'], i, j cluster mates   (within-cluster cross moment).

Sphericity makes all three multiples of the identity, so only scalars need
estimating.  Identity-score moments are closed form, the sign score's B is
exactly I/p, and C vanishes exactly at rho = 0; everything else comes from
Monte Carlo over the same generator the simulation harness uses, with
batch-mean standard errors.  Marginal moments (A, B) are cached per
population so a whole rho grid reuses one draw.

Sensitivity scalars use the hat-matrix identity: for each score kind the
derivative reduces to E[(p - 1) / (p ||v||)] with v the marginal vector
(sign), an independent difference (rank), or an independent sum
(signed rank).

``noncentrality_one_sample`` and ``noncentrality_c_sample`` evaluate the
noncentral chi-square parameters of the asymptotic tests; the groupwise
version computes both the reduced full-rank form and the pseudo-inverse
form of the same quantity and insists they agree.

``are_curve`` tabulates Pitman efficiencies relative to the unweighted
identity-score test on idealized two-group allocation designs (schemes A,
B, C) whose weight and contrast limits are exact functions of the cluster
composition classes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ClustlocError
from .multisample import DesignLimits
from .numerics import RandomStream, pinv_psd
from .scores import SCORE_KINDS
from .sim import draw_cluster_errors

__all__ = [
    "DesignSpec",
    "NoncentralityResult",
    "PopulationModel",
    "ScoreMatrices",
    "are_curve",
    "clear_moment_cache",
    "default_rho_grid",
    "noncentrality_c_sample",
    "noncentrality_one_sample",
    "score_moments",
]

FAMILIES = ("spherical-normal", "spherical-t")

_MIN_DRAWS = 10_000
_DEFAULT_DRAWS = 200_000
_BATCHES = 20
# Radius-only averages cost O(p) per draw, so they run on an inflated
# draw count for free accuracy.
_RADII_BOOST = 10


@dataclass(frozen=True)
class PopulationModel:
    """Spherical population with an intracluster correlation.

    ``nu`` is the tail index of the t family; ``math.inf`` (and the
    spherical-normal family) means Gaussian.  Marginal coordinates have
    unit normal-scale variance before the heavy-tail inflation.
    """

    p: int
    family: str = "spherical-normal"
    nu: float = math.inf
    rho: float = 0.0

    def __post_init__(self) -> None:
        if self.p < 2:
            raise ValueError(f"dimension must be at least 2, got {self.p}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.family == "spherical-normal":
            object.__setattr__(self, "nu", math.inf)
        elif not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    def with_rho(self, rho: float) -> "PopulationModel":
        return PopulationModel(self.p, self.family, self.nu, rho)


@dataclass(eq=False)
class ScoreMatrices:
    """A, B, C for one score kind; spherical products also carry scalars."""

    kind: str
    p: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_scalar: float | None = None
    b_scalar: float | None = None
    c_scalar: float | None = None
    se_a: float = 0.0
    se_b: float = 0.0
    se_c: float = 0.0
    batch_a: np.ndarray | None = None
    batch_b: np.ndarray | None = None
    batch_c: np.ndarray | None = None
    model: PopulationModel | None = None
    draws: int = 0

    @classmethod
    def from_matrices(
        cls, a: np.ndarray, b: np.ndarray, c: np.ndarray, kind: str = "custom"
    ) -> "ScoreMatrices":
        a = np.asarray(a, dtype=float)
        return cls(kind=kind, p=a.shape[0], a=a, b=np.asarray(b, float), c=np.asarray(c, float))


@dataclass(frozen=True, eq=False)
class NoncentralityResult:
    """Noncentral chi-square parameter with the inputs that produced it."""

    ncp: float
    df: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d_b: float | np.ndarray
    d_c: float | np.ndarray
    direction: np.ndarray
    lam: np.ndarray | None = None
    rank_deficient: bool = False
    ncp_alt: float | None = None


# ---------------------------------------------------------------------------
# Score moments under the model
# ---------------------------------------------------------------------------

_marginal_cache: dict[tuple, tuple] = {}
_pair_cache: dict[tuple, tuple] = {}


def clear_moment_cache() -> None:
    _marginal_cache.clear()
    _pair_cache.clear()


def _unit(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms


def _batch_stats(values: np.ndarray, batches: int = _BATCHES) -> tuple[float, np.ndarray, float]:
    """Mean, per-batch means, and the batch-mean standard error."""
    usable = values[: values.size - values.size % batches]
    parts = usable.reshape(batches, -1).mean(axis=1)
    mean = float(values.mean())
    se = float(parts.std(ddof=1) / math.sqrt(batches))
    return mean, parts, se


def _marginals(rng: np.random.Generator, model: PopulationModel, count: int) -> np.ndarray:
    return draw_cluster_errors(rng, np.ones(count, dtype=np.intp), model.p, model.nu, 0.0)


def _pairs(rng: np.random.Generator, model: PopulationModel, count: int) -> tuple[np.ndarray, np.ndarray]:
    err = draw_cluster_errors(
        rng, np.full(count, 2, dtype=np.intp), model.p, model.nu, model.rho
    ).reshape(count, 2, model.p)
    return err[:, 0, :], err[:, 1, :]


def _one_point_scores(points: np.ndarray, inner: np.ndarray, kind: str) -> np.ndarray:
    """Single-draw unbiased estimates of the population score at each point.

    The rank score is E[S(y - z)] and the signed-rank score is
    (1/2) E[S(y - z) + S(y + z)], both over an independent marginal z; one
    fresh z per point keeps every row independent, so a dot product of two
    such estimates (built from disjoint inner draws) is unbiased for the
    squared population score.
    """
    diffs = _unit(points - inner)
    if kind == "rank":
        return diffs
    return 0.5 * (diffs + _unit(points + inner))


def _hat_scalar(vectors: np.ndarray, p: int) -> np.ndarray:
    return (p - 1) / (p * np.linalg.norm(vectors, axis=-1))


def _identity_moments(model: PopulationModel) -> tuple[float, float, float]:
    if not model.nu > 2:
        raise ValueError(
            f"identity-score moments need nu > 2, got nu = {model.nu}"
        )
    b = 1.0 if math.isinf(model.nu) else model.nu / (model.nu - 2.0)
    return 1.0, b, model.rho * b


def _marginal_scalars(
    model: PopulationModel, kind: str, draws: int, stream: RandomStream
) -> tuple:
    """(a, batch_a, se_a, b, batch_b, se_b); cache shared across rho."""
    key = (model.family, model.nu, model.p, kind, draws, stream.seed, stream.stream_id)
    if key in _marginal_cache:
        return _marginal_cache[key]
    p = model.p
    rng = stream.child(1).generator()
    if kind == "sign":
        radii = np.linalg.norm(_marginals(rng, model, _RADII_BOOST * draws), axis=1)
        a, batch_a, se_a = _batch_stats((p - 1) / (p * radii))
        b, batch_b, se_b = 1.0 / p, None, 0.0
    else:
        e1 = _marginals(rng, model, _RADII_BOOST * draws)
        e2 = _marginals(rng, model, _RADII_BOOST * draws)
        pair = e1 - e2 if kind == "rank" else e1 + e2
        a, batch_a, se_a = _batch_stats(_hat_scalar(pair, p))
        y = _marginals(rng, model, draws)
        t_one = _one_point_scores(y, _marginals(rng, model, draws), kind)
        t_two = _one_point_scores(y, _marginals(rng, model, draws), kind)
        b, batch_b, se_b = _batch_stats((t_one * t_two).sum(axis=1) / p)
    value = (a, batch_a, se_a, b, batch_b, se_b)
    _marginal_cache[key] = value
    return value


def _pair_scalar(
    model: PopulationModel, kind: str, draws: int, stream: RandomStream
) -> tuple:
    """(c, batch_c, se_c) from within-cluster pairs; exact zero at rho = 0."""
    if model.rho == 0.0:
        return 0.0, None, 0.0
    key = (
        model.family, model.nu, model.p, model.rho, kind, draws,
        stream.seed, stream.stream_id,
    )
    if key in _pair_cache:
        return _pair_cache[key]
    p = model.p
    rng = stream.child(2).generator()
    e1, e2 = _pairs(rng, model, draws)
    if kind == "sign":
        products = (_unit(e1) * _unit(e2)).sum(axis=1) / p
    else:
        t_one = _one_point_scores(e1, _marginals(rng, model, draws), kind)
        t_two = _one_point_scores(e2, _marginals(rng, model, draws), kind)
        products = (t_one * t_two).sum(axis=1) / p
    value = _batch_stats(products)
    _pair_cache[key] = value
    return value


def score_moments(
    model: PopulationModel,
    kind: str = "sign",
    mc_draws: int = _DEFAULT_DRAWS,
    stream: RandomStream | int | None = None,
) -> ScoreMatrices:
    """A, B, C under the model, exploiting sphericity.

    Identity moments are closed form (and need nu > 2); the sign B is
    exactly I/p; C is exactly 0 at rho = 0.  Remaining scalars are Monte
    Carlo averages of ``mc_draws`` draws with batch-mean standard errors.
    """
    if kind not in SCORE_KINDS:
        raise ValueError(f"kind must be one of {SCORE_KINDS}, got {kind!r}")
    if mc_draws < _MIN_DRAWS:
        raise ValueError(f"mc_draws must be at least {_MIN_DRAWS}, got {mc_draws}")
    if stream is None:
        stream = RandomStream(90210)
    elif isinstance(stream, int):
        stream = RandomStream(stream)
    eye = np.eye(model.p)
    if kind == "identity":
        a, b, c = _identity_moments(model)
        return ScoreMatrices(
            kind=kind, p=model.p, a=a * eye, b=b * eye, c=c * eye,
            a_scalar=a, b_scalar=b, c_scalar=c, model=model, draws=0,
        )
    a, batch_a, se_a, b, batch_b, se_b = _marginal_scalars(model, kind, mc_draws, stream)
    c, batch_c, se_c = _pair_scalar(model, kind, mc_draws, stream)
    return ScoreMatrices(
        kind=kind, p=model.p,
        a=a * eye, b=b * eye, c=c * eye,
        a_scalar=a, b_scalar=b, c_scalar=c,
        se_a=se_a, se_b=se_b, se_c=se_c,
        batch_a=batch_a, batch_b=batch_b, batch_c=batch_c,
        model=model, draws=mc_draws,
    )


# ---------------------------------------------------------------------------
# Noncentrality parameters
# ---------------------------------------------------------------------------


def _psd_guard(m: np.ndarray, what: str) -> None:
    eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
    floor = -1e-10 * max(1.0, float(np.abs(m).max()))
    if eigs.min() < floor:
        raise ValueError(f"{what} is not positive semidefinite")


def noncentrality_one_sample(
    sm: ScoreMatrices,
    delta: np.ndarray,
    d_b: float = 1.0,
    d_c: float = 0.0,
) -> NoncentralityResult:
    """delta' A (D_B B + D_C C)^(-1) A delta with df = p."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.shape[0] != sm.p:
        raise ValueError(f"delta must have length {sm.p}, got {delta.shape[0]}")
    middle = d_b * sm.b + d_c * sm.c
    _psd_guard(middle, "one-sample middle matrix")
    lead = sm.a @ delta
    rank_deficient = False
    try:
        ncp = float(lead @ np.linalg.solve(middle, lead))
    except np.linalg.LinAlgError:
        ncp = float(lead @ pinv_psd(middle) @ lead)
        rank_deficient = True
    return NoncentralityResult(
        ncp=max(ncp, 0.0), df=sm.p, a=sm.a, b=sm.b, c=sm.c,
        d_b=d_b, d_c=d_c, direction=delta, rank_deficient=rank_deficient,
    )


_FORM_TOL = 1e-6


def noncentrality_c_sample(
    sm: ScoreMatrices,
    limits: DesignLimits,
    delta0: np.ndarray,
) -> NoncentralityResult:
    """Groupwise noncentrality, by the reduced and pseudo-inverse routes.

    ``delta0`` must satisfy delta0 @ lam = 0; violations beyond 1e-8 are
    projected out with a warning.  The reduced form inverts the (c-1)-block
    middle; the alternative contracts vec(A delta0 Lambda) against the
    pseudo inverse of D_B kron B + D_C kron C.  Disagreement beyond 1e-6
    relative signals inconsistent limits and raises.
    """
    d_b = np.asarray(limits.d_b, dtype=float)
    d_c = np.asarray(limits.d_c, dtype=float)
    lam = np.asarray(limits.lam, dtype=float).reshape(-1)
    c_groups = lam.shape[0]
    if c_groups < 2:
        raise ValueError("need at least two groups")
    delta0 = np.asarray(delta0, dtype=float)
    if delta0.shape != (sm.p, c_groups):
        raise ValueError(
            f"delta0 must have shape ({sm.p}, {c_groups}), got {delta0.shape}"
        )
    drift = delta0 @ lam
    scale = max(1.0, float(np.abs(delta0).max()))
    if np.abs(drift).max() > 1e-8 * scale:
        warnings.warn(
            "delta0 @ lam is not zero; projecting the drift out",
            stacklevel=2,
        )
        delta0 = delta0 - np.outer(drift, np.ones(c_groups))

    h = np.eye(c_groups)[:, : c_groups - 1]
    a_inv = np.linalg.inv(sm.a)
    aba = a_inv @ sm.b @ a_inv.T
    aca = a_inv @ sm.c @ a_inv.T
    middle = np.kron(h.T @ d_b @ h, aba) + np.kron(h.T @ d_c @ h, aca)
    _psd_guard(middle, "groupwise middle matrix")
    v = (delta0 @ np.diag(lam) @ h).flatten(order="F")
    rank_deficient = False
    try:
        ncp = float(v @ np.linalg.solve(middle, v))
    except np.linalg.LinAlgError:
        ncp = float(v @ pinv_psd(middle) @ v)
        rank_deficient = True

    unreduced = np.kron(d_b, sm.b) + np.kron(d_c, sm.c)
    # The group-share diagonal must ride along: the statistic's mean is
    # vec(A delta0 Lambda H), so the unreduced contraction needs Lambda too.
    u = (sm.a @ delta0 @ np.diag(lam)).flatten(order="F")
    ncp_alt = float(u @ pinv_psd(unreduced) @ u)

    gap = abs(ncp - ncp_alt)
    if gap > _FORM_TOL * max(1.0, abs(ncp)):
        raise ClustlocError(
            "noncentrality forms disagree "
            f"({ncp:.12g} vs {ncp_alt:.12g}); design limits look inconsistent"
        )
    return NoncentralityResult(
        ncp=max(ncp, 0.0), df=sm.p * (c_groups - 1),
        a=sm.a, b=sm.b, c=sm.c, d_b=d_b, d_c=d_c,
        direction=delta0, lam=lam,
        rank_deficient=rank_deficient, ncp_alt=ncp_alt,
    )


# ---------------------------------------------------------------------------
# Idealized two-group designs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignSpec:
    """Idealized two-group allocation for analytic design limits.

    Scheme A assigns each unit to group one independently with probability
    ``group_share``; scheme B splits every cluster as evenly as possible;
    scheme C sends whole clusters to the groups in equal proportion.
    ``cluster_size`` is a single size or a pattern whose entries occur in
    equal proportion.  Composition classes (cluster size, units per group)
    carry the entire design through exact expectations.
    """

    scheme: str = "B"
    cluster_size: int | tuple[int, ...] = 4
    group_share: float = 0.5

    def __post_init__(self) -> None:
        if self.scheme not in ("A", "B", "C"):
            raise ValueError(f"scheme must be A, B, or C, got {self.scheme!r}")
        if not (0.0 < self.group_share < 1.0):
            raise ValueError("group_share must be in (0, 1)")
        for m in self._sizes():
            if m < 1:
                raise ValueError("cluster sizes must be positive")

    def _sizes(self) -> tuple[int, ...]:
        if isinstance(self.cluster_size, (int, np.integer)):
            return (int(self.cluster_size),)
        return tuple(int(m) for m in self.cluster_size)

    def label(self) -> str:
        sizes = ",".join(str(m) for m in self._sizes())
        if self.scheme == "A" and self.group_share != 0.5:
            return f"{self.scheme}(m={sizes},share={self.group_share:g})"
        return f"{self.scheme}(m={sizes})"

    def composition_classes(self) -> tuple[tuple[float, int, int], ...]:
        """(frequency, units in group 1, units in group 2) per cluster class."""
        sizes = self._sizes()
        size_freq = 1.0 / len(sizes)
        out: list[tuple[float, int, int]] = []
        for m in sizes:
            if self.scheme == "A":
                pi = self.group_share
                for j in range(m + 1):
                    f = size_freq * math.comb(m, j) * pi**j * (1 - pi) ** (m - j)
                    out.append((f, j, m - j))
            elif self.scheme == "B":
                if m % 2 == 0:
                    out.append((size_freq, m // 2, m // 2))
                else:
                    out.append((size_freq / 2, (m + 1) // 2, m // 2))
                    out.append((size_freq / 2, m // 2, (m + 1) // 2))
            else:
                out.append((size_freq / 2, m, 0))
                out.append((size_freq / 2, 0, m))
        return tuple(out)

    def class_weights(
        self, rho: float = 0.0, weighting: str = "unweighted"
    ) -> dict[tuple[int, int], tuple[float, float]]:
        """Per-unit weight by (units in group 1, units in group 2) class.

        A side with no units in the class reports weight 0.
        """
        classes = self.composition_classes()
        if weighting not in ("unweighted", "optimal"):
            raise ValueError(
                f"weighting must be 'unweighted' or 'optimal', got {weighting!r}"
            )
        if weighting == "unweighted" or rho == 0.0:
            return {
                (m1, m2): (1.0 if m1 else 0.0, 1.0 if m2 else 0.0)
                for _, m1, m2 in classes
            }
        if not (0.0 <= rho < 1.0):
            raise ValueError(f"rho must be in [0, 1), got {rho}")
        mean_m = sum(f * (m1 + m2) for f, m1, m2 in classes)
        share = sum(f * m1 for f, m1, m2 in classes) / mean_m
        # Per cluster, Sigma = (1 - rho) I + rho g g' with g the +/-1 group
        # pattern; w = Sigma^-1 (k1 x1 + k2 1) is linear in (k1, k2), so the
        # two normalization constraints pin the multipliers globally.
        rows = np.zeros((2, 2))
        coef: dict[tuple[int, int], np.ndarray] = {}
        for f, m1, m2 in classes:
            m = m1 + m2
            tau = rho / (1.0 - rho + rho * m)
            w1 = np.array([1.0 - tau * m1, 1.0 - tau * (m1 - m2)]) / (1.0 - rho)
            w2 = np.array([tau * m1, 1.0 + tau * (m1 - m2)]) / (1.0 - rho)
            coef[(m1, m2)] = np.vstack([w1, w2])
            rows[0] += f * m1 * w1
            rows[1] += f * (m1 * w1 + m2 * w2)
        try:
            kappa = np.linalg.solve(rows, np.array([mean_m * share, mean_m]))
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"degenerate weight system: {exc}") from exc
        out: dict[tuple[int, int], tuple[float, float]] = {}
        for (m1, m2), mat in coef.items():
            w1 = float(mat[0] @ kappa) if m1 else 0.0
            w2 = float(mat[1] @ kappa) if m2 else 0.0
            if min(w1, w2) < 0.0:
                raise ValueError("optimal weights came out negative")
            out[(m1, m2)] = (w1, w2)
        return out

    def limits(self, rho: float = 0.0, weighting: str = "unweighted") -> DesignLimits:
        """Exact D_B, D_C, lambda for the idealized design."""
        classes = self.composition_classes()
        weights = self.class_weights(rho, weighting)
        mean_m = sum(f * (m1 + m2) for f, m1, m2 in classes)
        lam = np.zeros(2)
        for f, m1, m2 in classes:
            w1, w2 = weights[(m1, m2)]
            lam += f * np.array([m1 * w1, m2 * w2])
        lam /= mean_m
        basis = np.eye(2)
        d_b = np.zeros((2, 2))
        cross = np.zeros((2, 2))
        for f, m1, m2 in classes:
            w1, w2 = weights[(m1, m2)]
            r1 = basis[0] - lam
            r2 = basis[1] - lam
            d_b += f * (m1 * w1**2 * np.outer(r1, r1) + m2 * w2**2 * np.outer(r2, r2))
            s = m1 * w1 * r1 + m2 * w2 * r2
            cross += f * np.outer(s, s)
        d_b /= mean_m
        d_c = cross / mean_m - d_b
        return DesignLimits(d_b=d_b, d_c=d_c, lam=lam)


def default_rho_grid(
    p: int = 3, family: str = "spherical-normal", nu: float = math.inf
) -> tuple[PopulationModel, ...]:
    """Models at rho = 0, 0.05, ..., 0.95 sharing one marginal."""
    return tuple(
        PopulationModel(p=p, family=family, nu=nu, rho=round(0.05 * k, 2))
        for k in range(20)
    )


def _scalar_ncp(
    a: float, b: float, c: float, limits: DesignLimits, delta0: np.ndarray
) -> float:
    """Closed two-group noncentrality for spherical (scalar) moments."""
    h = np.array([[1.0], [0.0]])
    eta_b = float((h.T @ limits.d_b @ h)[0, 0])
    eta_c = float((h.T @ limits.d_c @ h)[0, 0])
    v = delta0 @ np.diag(limits.lam) @ h
    den = eta_b * b + eta_c * c
    return float((v * v).sum() * a * a / den)


def are_curve(
    models: tuple[PopulationModel, ...] | list[PopulationModel],
    design: DesignSpec = DesignSpec(),
    kinds: tuple[str, ...] = ("identity", "sign", "rank"),
    weightings: tuple[str, ...] | str = ("unweighted", "optimal"),
    mc_draws: int = _DEFAULT_DRAWS,
    stream: RandomStream | int | None = None,
) -> list[dict[str, object]]:
    """Pitman ARE vs the unweighted identity test, per model and kind.

    Rows carry design label, kind, weighting, rho, are, mc_se; the standard
    error combines the batch means of every Monte Carlo scalar involved.
    Optimal weights target the identity score at the model's rho.
    """
    if isinstance(weightings, str):
        weightings = (weightings,)
    if stream is None:
        stream = RandomStream(90210)
    elif isinstance(stream, int):
        stream = RandomStream(stream)
    rows: list[dict[str, object]] = []
    for model in models:
        bench_sm = score_moments(model, "identity")
        bench_limits = design.limits(model.rho, "unweighted")
        lam = bench_limits.lam
        delta0 = np.zeros((model.p, 2))
        delta0[0, 0], delta0[0, 1] = lam[1], -lam[0]
        bench = noncentrality_c_sample(bench_sm, bench_limits, delta0)
        for kind in kinds:
            sm = score_moments(model, kind, mc_draws, stream)
            for weighting in weightings:
                limits = design.limits(model.rho, weighting)
                result = noncentrality_c_sample(sm, limits, delta0)
                are = result.ncp / bench.ncp
                rows.append(
                    {
                        "design": design.label(),
                        "kind": kind,
                        "weighting": weighting,
                        "rho": model.rho,
                        "are": are,
                        "mc_se": _curve_se(sm, limits, bench, delta0),
                    }
                )
    return rows


def _curve_se(
    sm: ScoreMatrices,
    limits: DesignLimits,
    bench: NoncentralityResult,
    delta0: np.ndarray,
) -> float:
    if sm.batch_a is None and sm.batch_b is None and sm.batch_c is None:
        return 0.0
    count = next(
        len(arr) for arr in (sm.batch_a, sm.batch_b, sm.batch_c) if arr is not None
    )
    batch_a = sm.batch_a if sm.batch_a is not None else np.full(count, sm.a_scalar)
    batch_b = sm.batch_b if sm.batch_b is not None else np.full(count, sm.b_scalar)
    batch_c = sm.batch_c if sm.batch_c is not None else np.full(count, sm.c_scalar)
    values = np.array(
        [
            _scalar_ncp(batch_a[i], batch_b[i], batch_c[i], limits, delta0)
            for i in range(count)
        ]
    )
    return float(values.std(ddof=1) / math.sqrt(count) / bench.ncp)
