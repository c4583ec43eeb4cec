"""Numerical kernels shared by the testing and estimation code.

Chi-square tail areas come from scipy; the noncentral tail is assembled
from the central one through the standard Poisson mixture so that its
accuracy is controlled by an explicit truncation bound.  Matrix inversions
of (near) positive semidefinite matrices go through a symmetric
eigendecomposition with a relative singularity threshold, falling back to
a pseudo-inverse instead of failing when a direction carries no mass.

Reproducible randomness uses the counter-based Philox generator: a
(seed, stream_id) pair fully determines a stream, and derived streams are
independent by construction, which keeps Monte Carlo work order-independent
and safe to chunk.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "RNG_FAMILY",
    "RandomStream",
    "as_generator",
    "chi2_tail",
    "chi2_quantile",
    "noncentral_chi2_tail",
    "pinv_psd",
    "invert_psd",
]

# Generator family recorded in output metadata so results can be tied to
# the exact bit stream that produced them.
RNG_FAMILY = "philox-4x64"

# Relative eigenvalue cutoff for pseudo-inversion.
_PINV_RCOND = 1e-12
# A factorization pivot below this multiple of the largest diagonal entry
# marks the matrix as rank deficient.
_SINGULARITY_RTOL = 1e-10
# Entry-wise relative asymmetry beyond this is treated as a caller bug.
_SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class RandomStream:
    """A reproducible, independently addressable random substream.

    Two streams with the same ``(seed, stream_id)`` yield identical draws;
    distinct ids give statistically independent streams because the key is
    fed to a counter-based generator.  ``child`` derives further streams
    (per replication, per cell, ...) by hashing the index path, so a parent
    never has to know how many children exist in advance.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be in [0, 2**64), got {self.seed}")
        if not (0 <= int(self.stream_id) < 2**64):
            raise ValueError(f"stream_id must be in [0, 2**64), got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *indices: int) -> "RandomStream":
        """Derive a stream for the given index path, deterministically."""
        h = hashlib.sha256()
        h.update(int(self.stream_id).to_bytes(8, "little"))
        for ix in indices:
            h.update(b"/")
            h.update(int(ix).to_bytes(16, "little", signed=True))
        derived = int.from_bytes(h.digest()[:8], "little")
        return RandomStream(self.seed, derived)


def as_generator(stream: RandomStream | np.random.Generator | int) -> np.random.Generator:
    """Accept a RandomStream, a ready Generator, or a bare seed."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    return RandomStream(int(stream)).generator()


def chi2_tail(x: float, df: float) -> float:
    """Upper tail P(X > x) of the central chi-square with df degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("quantile must be nonnegative")
    return float(stats.chi2.sf(x, df))


def chi2_quantile(tail: float, df: float) -> float:
    """Inverse of ``chi2_tail`` in its first argument, by bisection.

    Returns x with chi2_tail(x, df) = tail, to about 1e-12 relative.
    """
    if not (0.0 < tail < 1.0):
        raise ValueError(f"tail probability must be in (0, 1), got {tail}")
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    lo, hi = 0.0, max(float(df), 1.0)
    while chi2_tail(hi, df) > tail:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover - unreachable for valid input
            raise ValueError("failed to bracket the quantile")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_tail(mid, df) > tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def noncentral_chi2_tail(x: float, df: float, ncp: float) -> float:
    """Upper tail of the noncentral chi-square via its Poisson mixture.

    P(X > x) = sum_j pois(j; ncp/2) * P(chi2_{df+2j} > x), with the Poisson
    weights evaluated on a window around the mode wide enough that the
    neglected mass is below 1e-12.
    """
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if ncp < 0:
        raise ValueError(f"noncentrality must be nonnegative, got {ncp}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("quantile must be nonnegative")
    lam = 0.5 * ncp
    if lam == 0.0:
        return chi2_tail(x, df)
    # 14 sigma of Poisson mass on each side keeps the truncation error
    # far below the 1e-12 target; the +30 floor covers tiny lam.
    half_width = 14.0 * np.sqrt(lam) + 30.0
    j_lo = max(0, int(np.floor(lam - half_width)))
    j_hi = int(np.ceil(lam + half_width))
    j = np.arange(j_lo, j_hi + 1)
    weights = stats.poisson.pmf(j, lam)
    tails = stats.chi2.sf(x, df + 2.0 * j)
    return float(np.sum(weights * tails))


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > _SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def pinv_psd(m: np.ndarray, rcond: float = _PINV_RCOND) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``rcond`` times the largest one are treated as zero.
    """
    m = _check_symmetric(m)
    vals, vecs = np.linalg.eigh(m)
    cutoff = rcond * max(float(vals.max(initial=0.0)), 0.0)
    inv_vals = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
    return (vecs * inv_vals) @ vecs.T


def invert_psd(m: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert a symmetric PSD matrix, degrading gracefully when singular.

    Returns ``(inverse, rank_deficient)``.  The matrix counts as rank
    deficient when its smallest eigenvalue falls below 1e-10 times the
    largest diagonal entry; the pseudo-inverse is returned in that case.
    """
    m = _check_symmetric(m)
    vals, vecs = np.linalg.eigh(m)
    threshold = _SINGULARITY_RTOL * max(float(np.max(np.diag(m))), 0.0)
    if float(vals.min()) <= threshold:
        return pinv_psd(m), True
    return (vecs / vals) @ vecs.T, False
