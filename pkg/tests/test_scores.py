"""Score transform tests against direct double-loop oracles."""

import numpy as np
import pytest

from clustloc.design import build_design
from clustloc.errors import DegenerateDataError
from clustloc.numerics import RandomStream
from clustloc.scores import (
    a_hat,
    centered_scores,
    spatial_ranks,
    spatial_sign,
    spatial_signed_ranks,
    spatial_signs,
)


def sign_oracle(v):
    n = np.linalg.norm(v)
    return v * 0.0 if n == 0 else v / n


def ranks_oracle(y, w=None):
    n = len(y)
    w = np.ones(n) if w is None else w
    out = np.zeros_like(y)
    for i in range(n):
        for j in range(n):
            out[i] += w[j] * sign_oracle(y[i] - y[j])
    return out / n


def signed_ranks_oracle(y):
    n = len(y)
    out = np.zeros_like(y)
    for i in range(n):
        for j in range(n):
            out[i] += sign_oracle(y[i] - y[j]) + sign_oracle(y[i] + y[j])
    return out / (2 * n)


def hat_matrix(v):
    r = np.linalg.norm(v)
    p = len(v)
    return (np.eye(p) - np.outer(v, v) / r**2) / r


class TestSpatialSign:
    def test_unit_norm_or_zero(self):
        rng = RandomStream(1).generator()
        y = rng.standard_normal((50, 3))
        y[7] = 0.0
        s = spatial_signs(y)
        norms = np.linalg.norm(s, axis=1)
        assert norms[7] == 0.0
        keep = np.ones(50, bool)
        keep[7] = False
        assert np.max(np.abs(norms[keep] - 1.0)) < 1e-15

    def test_oddness_exact(self):
        rng = RandomStream(2).generator()
        y = rng.standard_normal(4)
        assert np.array_equal(spatial_sign(-y), -spatial_sign(y))

    def test_single_vector(self):
        assert np.allclose(spatial_sign(np.array([3.0, 4.0])), [0.6, 0.8])
        assert np.array_equal(spatial_sign(np.zeros(3)), np.zeros(3))


class TestSpatialRanks:
    def test_five_point_oracle(self):
        rng = RandomStream(3).generator()
        y = rng.standard_normal((5, 3))
        assert np.allclose(spatial_ranks(y), ranks_oracle(y), atol=1e-12)

    def test_weighted_oracle(self):
        rng = RandomStream(4).generator()
        y = rng.standard_normal((9, 2))
        w = rng.uniform(0.5, 2.0, 9)
        assert np.allclose(spatial_ranks(y, w), ranks_oracle(y, w), atol=1e-12)

    def test_weight_stack_matches_individual(self):
        rng = RandomStream(5).generator()
        y = rng.standard_normal((8, 3))
        w1 = np.ones(8)
        w2 = rng.uniform(0.5, 2.0, 8)
        stacked = spatial_ranks(y, np.stack([w1, w2]))
        assert np.allclose(stacked[0], spatial_ranks(y, w1), atol=1e-14)
        assert np.allclose(stacked[1], spatial_ranks(y, w2), atol=1e-14)

    def test_ranks_bounded_by_one(self):
        rng = RandomStream(6).generator()
        y = rng.standard_normal((40, 4))
        assert np.linalg.norm(spatial_ranks(y), axis=1).max() <= 1.0 + 1e-12

    def test_translation_equivariance_of_centering(self):
        # Ranks only see pairwise differences: invariant under shifts.
        rng = RandomStream(7).generator()
        y = rng.standard_normal((12, 2))
        assert np.allclose(spatial_ranks(y), spatial_ranks(y + 5.0), atol=1e-12)


class TestSpatialSignedRanks:
    def test_four_point_oracle(self):
        rng = RandomStream(8).generator()
        y = rng.standard_normal((4, 2))
        assert np.allclose(spatial_signed_ranks(y), signed_ranks_oracle(y), atol=1e-12)

    def test_oddness_under_reflection(self):
        # Signed ranks of -Y equal the negated signed ranks of Y, row-wise.
        rng = RandomStream(9).generator()
        y = rng.standard_normal((11, 3))
        assert np.allclose(
            spatial_signed_ranks(-y), -spatial_signed_ranks(y), atol=1e-12
        )

    def test_halved_rank_identity(self):
        # Q_i = (R_n(y_i) - R_n(-y_i))/2 where both ranks are taken
        # against the original sample.
        rng = RandomStream(10).generator()
        y = rng.standard_normal((7, 2))
        q = spatial_signed_ranks(y)
        n = len(y)
        direct = np.zeros_like(y)
        for i in range(n):
            r_pos = sum(sign_oracle(y[i] - y[j]) for j in range(n)) / n
            r_neg = sum(sign_oracle(-y[i] - y[j]) for j in range(n)) / n
            direct[i] = 0.5 * (r_pos - r_neg)
        assert np.allclose(q, direct, atol=1e-12)


class TestCenteredScores:
    def _data(self, n=30, p=3, seed=11):
        rng = RandomStream(seed).generator()
        y = rng.standard_normal((n, p)) + 1.5
        cluster = np.repeat(np.arange(n // 3), 3)
        group = np.tile([0, 1, 0], n // 3)
        design = build_design(cluster, group)
        w = np.repeat(rng.uniform(0.5, 2.0, n // 3), 3)
        return y, design, w

    @pytest.mark.parametrize("kind", ["identity", "sign", "rank"])
    def test_weighted_centering(self, kind):
        y, design, w = self._data()
        scores, _ = centered_scores(y, design, w, kind)
        total = (w[:, None] * scores).sum(axis=0)
        assert np.linalg.norm(total) <= 1e-8 * len(y)

    def test_identity_center_is_weighted_mean(self):
        y, design, w = self._data()
        w = w * len(y) / w.sum()
        _, center = centered_scores(y, design, w, "identity")
        assert np.allclose(center, (w[:, None] * y).sum(0) / len(y))

    def test_explicit_location_respected(self):
        y, design, w = self._data()
        loc = np.array([1.0, -1.0, 0.5])
        scores, center = centered_scores(y, design, w, "sign", location=loc)
        assert np.array_equal(center, loc)
        assert np.allclose(scores, spatial_signs(y - loc), atol=1e-14)

    def test_rank_rejects_location(self):
        y, design, w = self._data()
        with pytest.raises(ValueError):
            centered_scores(y, design, w, "rank", location=np.zeros(3))

    def test_signed_rank_rejected(self):
        y, design, w = self._data()
        with pytest.raises(ValueError):
            centered_scores(y, design, w, "signed-rank")


class TestAHat:
    def test_identity(self):
        design = build_design(np.arange(4))
        rng = RandomStream(12).generator()
        assert np.array_equal(
            a_hat(rng.standard_normal((4, 3)), design, "identity"), np.eye(3)
        )

    def test_sign_matches_direct_average(self):
        rng = RandomStream(13).generator()
        resid = rng.standard_normal((20, 3))
        design = build_design(np.arange(20))
        direct = sum(hat_matrix(r) for r in resid) / 20
        assert np.allclose(a_hat(resid, design, "sign"), direct, atol=1e-12)

    def test_sign_monte_carlo_oracle(self):
        # For spherical normal residuals E A(eps) = E(1/r) (1 - 1/p) I.
        # With p = 3, E(1/r) = sqrt(2/pi), so the scalar is (2/3) sqrt(2/pi).
        rng = RandomStream(14).generator()
        resid = rng.standard_normal((40_000, 3))
        design = build_design(np.arange(40_000) // 2)
        est = a_hat(resid, design, "sign")
        target = (2.0 / 3.0) * np.sqrt(2.0 / np.pi)
        assert np.allclose(est, target * np.eye(3), atol=0.01)

    def test_sign_excludes_zero_rows(self):
        resid = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
        design = build_design(np.arange(3))
        direct = (hat_matrix(resid[0]) + hat_matrix(resid[2])) / 2
        assert np.allclose(a_hat(resid, design, "sign"), direct, atol=1e-12)

    def test_sign_all_zero_raises(self):
        design = build_design(np.arange(3))
        with pytest.raises(DegenerateDataError):
            a_hat(np.zeros((3, 2)), design, "sign")

    def test_sign_trace_identity(self):
        rng = RandomStream(15).generator()
        resid = rng.standard_normal((25, 4))
        design = build_design(np.arange(25))
        est = a_hat(resid, design, "sign")
        assert np.allclose(est, est.T, atol=1e-14)
        assert np.all(np.linalg.eigvalsh(est) >= -1e-12)
        bound = 3 * np.mean(1.0 / np.linalg.norm(resid, axis=1))
        assert np.trace(est) <= bound + 1e-12

    def test_signed_rank_between_cluster_pairs(self):
        rng = RandomStream(16).generator()
        resid = rng.standard_normal((8, 2))
        cluster = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        design = build_design(cluster)
        total = np.zeros((2, 2))
        count = 0
        for i in range(8):
            for j in range(8):
                if cluster[i] != cluster[j]:
                    total += hat_matrix(0.5 * (resid[i] + resid[j]))
                    count += 1
        assert np.allclose(
            a_hat(resid, design, "signed-rank"), total / count, atol=1e-12
        )

    def test_rank_with_group_shifts(self):
        rng = RandomStream(17).generator()
        y = rng.standard_normal((10, 2))
        cluster = np.repeat(np.arange(5), 2)
        group = np.tile([0, 1], 5)
        design = build_design(cluster, group)
        theta = np.zeros((2, 2, 2))
        theta[0, 1] = [0.7, -0.2]
        theta[1, 0] = [-0.7, 0.2]
        total = np.zeros((2, 2))
        count = 0
        for i in range(10):
            for j in range(10):
                if cluster[i] != cluster[j]:
                    total += hat_matrix(y[i] - y[j] - theta[group[i], group[j]])
                    count += 1
        assert np.allclose(
            a_hat(y, design, "rank", pairing=theta), total / count, atol=1e-12
        )

    def test_rank_needs_pairing_with_groups(self):
        design = build_design(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]))
        with pytest.raises(ValueError):
            a_hat(np.ones((4, 2)), design, "rank")
