"""Model-based moments, noncentrality forms, and ARE curves."""

import math
import warnings

import numpy as np
import pytest

from clustloc.design import build_design, optimal_weights_two_sample
from clustloc.efficiency import (
    DesignSpec,
    PopulationModel,
    are_curve,
    clear_moment_cache,
    default_rho_grid,
    noncentrality_c_sample,
    noncentrality_one_sample,
    score_moments,
)
from clustloc.errors import ClustlocError
from clustloc.multisample import DesignLimits, design_limits
from clustloc.scores import spatial_ranks, spatial_signed_ranks

# p = 3 standard normal: E[1/||e||] = sqrt(2/pi).
SIGN_A_ORACLE = (2.0 / 3.0) * math.sqrt(2.0 / math.pi)
# Differences/sums of independent copies are N(0, 2I): one factor 1/sqrt(2).
RANK_A_ORACLE = SIGN_A_ORACLE / math.sqrt(2.0)


class TestPopulationModel:
    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            PopulationModel(p=1)
        with pytest.raises(ValueError):
            PopulationModel(p=3, family="uniform")
        with pytest.raises(ValueError):
            PopulationModel(p=3, rho=1.0)
        with pytest.raises(ValueError):
            PopulationModel(p=3, family="spherical-t", nu=0.0)

    def test_normal_family_forces_infinite_tail_index(self):
        m = PopulationModel(p=3, family="spherical-normal", nu=7.0)
        assert math.isinf(m.nu)

    def test_with_rho_keeps_marginal(self):
        m = PopulationModel(p=4, family="spherical-t", nu=3.0, rho=0.2)
        m2 = m.with_rho(0.7)
        assert (m2.p, m2.family, m2.nu, m2.rho) == (4, "spherical-t", 3.0, 0.7)

    def test_default_rho_grid(self):
        grid = default_rho_grid(p=3)
        assert len(grid) == 20
        assert grid[0].rho == 0.0 and grid[-1].rho == 0.95
        assert all(g.p == 3 for g in grid)


class TestIdentityMoments:
    def test_normal_closed_form(self):
        sm = score_moments(PopulationModel(p=3, rho=0.4), "identity")
        assert np.array_equal(sm.a, np.eye(3))
        assert np.array_equal(sm.b, np.eye(3))
        np.testing.assert_allclose(sm.c, 0.4 * np.eye(3), rtol=1e-15)
        assert sm.se_a == sm.se_b == sm.se_c == 0.0

    def test_t_closed_form(self):
        sm = score_moments(
            PopulationModel(p=2, family="spherical-t", nu=5.0, rho=0.3), "identity"
        )
        assert sm.a_scalar == 1.0
        np.testing.assert_allclose(sm.b_scalar, 5.0 / 3.0, rtol=1e-15)
        np.testing.assert_allclose(sm.c_scalar, 0.5, rtol=1e-15)

    def test_heavy_tails_have_no_second_moment(self):
        for nu in (2.0, 1.5):
            with pytest.raises(ValueError):
                score_moments(
                    PopulationModel(p=3, family="spherical-t", nu=nu), "identity"
                )


class TestSignMoments:
    def test_b_is_exactly_inverse_dimension(self):
        for p in (2, 3, 5):
            sm = score_moments(PopulationModel(p=p), "sign")
            assert sm.b_scalar == 1.0 / p
            assert sm.se_b == 0.0

    def test_a_matches_closed_form_normal(self):
        sm = score_moments(PopulationModel(p=3), "sign")
        tol = max(4.0 * sm.se_a, 0.002)
        assert abs(sm.a_scalar - SIGN_A_ORACLE) < tol

    def test_c_zero_without_correlation(self):
        sm = score_moments(PopulationModel(p=3, rho=0.0), "sign")
        assert sm.c_scalar == 0.0

    def test_c_increases_with_rho_and_stays_below_b(self):
        lo = score_moments(PopulationModel(p=3, rho=0.3), "sign")
        hi = score_moments(PopulationModel(p=3, rho=0.9), "sign")
        assert 0.0 < lo.c_scalar < hi.c_scalar < hi.b_scalar

    def test_input_validation(self):
        with pytest.raises(ValueError):
            score_moments(PopulationModel(p=3), "sign", mc_draws=500)
        with pytest.raises(ValueError):
            score_moments(PopulationModel(p=3), "mad")

    def test_heavy_tails_allowed_for_bounded_scores(self):
        sm = score_moments(
            PopulationModel(p=3, family="spherical-t", nu=1.0, rho=0.2), "sign"
        )
        assert 0.0 < sm.a_scalar
        assert 0.0 < sm.c_scalar < sm.b_scalar


class TestPairwiseScoreMoments:
    def test_rank_a_matches_closed_form_normal(self):
        sm = score_moments(PopulationModel(p=3), "rank")
        tol = max(4.0 * sm.se_a, 0.002)
        assert abs(sm.a_scalar - RANK_A_ORACLE) < tol

    def test_signed_rank_a_equals_rank_a_under_symmetry(self):
        # Sums and differences of independent symmetric draws share one law.
        r = score_moments(PopulationModel(p=3), "rank")
        q = score_moments(PopulationModel(p=3), "signed-rank")
        tol = 4.0 * math.hypot(r.se_a, q.se_a)
        assert abs(r.a_scalar - q.a_scalar) < tol

    def test_rank_b_against_empirical_ranks(self):
        # Dual route: mean squared norm of plug-in spatial ranks of an iid
        # sample estimates the same p * b, up to O(1/n) self-pair bias.
        sm = score_moments(PopulationModel(p=3), "rank")
        rng = np.random.default_rng(410)
        n = 4000
        y = rng.standard_normal((n, 3))
        empirical = float((spatial_ranks(y) ** 2).sum(axis=1).mean()) / 3.0
        tol = 4.0 * sm.se_b + 3.0 / n
        assert abs(empirical - sm.b_scalar) < tol

    def test_signed_rank_b_against_empirical_scores(self):
        sm = score_moments(PopulationModel(p=3), "signed-rank")
        rng = np.random.default_rng(411)
        n = 4000
        y = rng.standard_normal((n, 3))
        empirical = float((spatial_signed_ranks(y) ** 2).sum(axis=1).mean()) / 3.0
        tol = 4.0 * sm.se_b + 3.0 / n
        assert abs(empirical - sm.b_scalar) < tol

    def test_rank_c_positive_and_below_b(self):
        sm = score_moments(PopulationModel(p=3, rho=0.95), "rank")
        assert 0.0 < sm.c_scalar < sm.b_scalar

    def test_moment_cache_reuses_marginals(self):
        clear_moment_cache()
        first = score_moments(PopulationModel(p=3, rho=0.2), "rank", stream=77)
        second = score_moments(PopulationModel(p=3, rho=0.6), "rank", stream=77)
        assert first.a_scalar == second.a_scalar
        assert first.b_scalar == second.b_scalar
        assert first.c_scalar != second.c_scalar


class TestNoncentralityOneSample:
    def test_zero_direction(self):
        sm = score_moments(PopulationModel(p=3), "identity")
        out = noncentrality_one_sample(sm, np.zeros(3))
        assert out.ncp == 0.0 and out.df == 3

    def test_identity_iid_is_squared_length(self):
        sm = score_moments(PopulationModel(p=2), "identity")
        delta = np.array([0.6, -0.8])
        out = noncentrality_one_sample(sm, delta)
        np.testing.assert_allclose(out.ncp, 1.0, rtol=1e-12)

    def test_sign_iid_scaling(self):
        sm = score_moments(PopulationModel(p=3), "sign")
        delta = np.array([0.5, 0.0, 0.0])
        out = noncentrality_one_sample(sm, delta)
        expect = sm.a_scalar**2 * 3.0 * 0.25
        np.testing.assert_allclose(out.ncp, expect, rtol=1e-12)

    def test_within_cluster_term_deflates(self):
        sm = score_moments(PopulationModel(p=2, rho=0.5), "identity")
        delta = np.ones(2)
        solo = noncentrality_one_sample(sm, delta, d_b=1.0, d_c=0.0)
        paired = noncentrality_one_sample(sm, delta, d_b=1.0, d_c=1.0)
        np.testing.assert_allclose(paired.ncp, solo.ncp / 1.5, rtol=1e-12)

    def test_shape_mismatch(self):
        sm = score_moments(PopulationModel(p=3), "identity")
        with pytest.raises(ValueError):
            noncentrality_one_sample(sm, np.ones(2))


def _random_group_limits(rng, n, c_groups):
    group = rng.integers(0, c_groups, size=n)
    while len(np.unique(group)) < c_groups:
        group = rng.integers(0, c_groups, size=n)
    cluster = rng.integers(0, n // 5, size=n)
    design = build_design(cluster, group)
    # Weights must be constant on each cluster-group cell.
    cell = cluster * c_groups + group
    _, inverse = np.unique(cell, return_inverse=True)
    w = rng.uniform(0.3, 2.0, size=inverse.max() + 1)[inverse]
    w *= n / w.sum()
    return design_limits(design, w)


class TestNoncentralityCSample:
    def test_zero_alternative(self):
        sm = score_moments(PopulationModel(p=2), "identity")
        limits = DesignSpec("B", 4).limits()
        out = noncentrality_c_sample(sm, limits, np.zeros((2, 2)))
        assert out.ncp == 0.0 and out.df == 2

    def test_degrees_of_freedom(self):
        rng = np.random.default_rng(3)
        sm = score_moments(PopulationModel(p=3, rho=0.4), "identity")
        limits = _random_group_limits(rng, 300, 4)
        delta0 = rng.normal(size=(3, 4))
        delta0 -= np.outer(delta0 @ limits.lam, np.ones(4))
        out = noncentrality_c_sample(sm, limits, delta0)
        assert out.df == 3 * 3
        assert out.ncp > 0.0

    def test_forms_agree_on_random_designs(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            p = int(rng.integers(2, 5))
            c_groups = int(rng.integers(2, 5))
            limits = _random_group_limits(rng, 60 * c_groups, c_groups)
            q = rng.normal(size=(p, p))
            a = q @ q.T + 0.5 * np.eye(p)
            q = rng.normal(size=(p, p))
            b = q @ q.T + 0.5 * np.eye(p)
            c = float(rng.uniform(0.0, 0.9)) * b
            sm_like = score_moments(PopulationModel(p=p), "identity")
            sm_like.a, sm_like.b, sm_like.c = a, b, c
            delta0 = rng.normal(size=(p, c_groups))
            delta0 -= np.outer(delta0 @ limits.lam, np.ones(c_groups))
            out = noncentrality_c_sample(sm_like, limits, delta0)
            assert abs(out.ncp - out.ncp_alt) <= 1e-6 * max(1.0, out.ncp)

    def test_projection_warns_and_matches_manual(self):
        sm = score_moments(PopulationModel(p=2), "identity")
        limits = DesignSpec("B", 4).limits()
        raw = np.array([[1.0, 0.2], [0.5, -0.1]])
        with pytest.warns(UserWarning):
            out = noncentrality_c_sample(sm, limits, raw)
        projected = raw - np.outer(raw @ limits.lam, np.ones(2))
        clean = noncentrality_c_sample(sm, limits, projected)
        np.testing.assert_allclose(out.ncp, clean.ncp, rtol=1e-12)

    def test_two_group_iid_classic_form(self):
        # Independent singletons: ncp = share1 * share2 * delta' B^-1 delta.
        sm = score_moments(
            PopulationModel(p=2, family="spherical-t", nu=4.0), "identity"
        )
        spec = DesignSpec("A", 1, group_share=0.3)
        limits = spec.limits()
        delta = np.array([1.0, -2.0])
        delta0 = np.column_stack([0.7 * delta, -0.3 * delta])
        out = noncentrality_c_sample(sm, limits, delta0)
        expect = 0.3 * 0.7 * float(delta @ delta) / sm.b_scalar
        np.testing.assert_allclose(out.ncp, expect, rtol=1e-10)

    def test_shape_validation(self):
        sm = score_moments(PopulationModel(p=2), "identity")
        limits = DesignSpec("B", 4).limits()
        with pytest.raises(ValueError):
            noncentrality_c_sample(sm, limits, np.zeros((3, 2)))


class TestDesignSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            DesignSpec(scheme="D")
        with pytest.raises(ValueError):
            DesignSpec(group_share=0.0)
        with pytest.raises(ValueError):
            DesignSpec(cluster_size=(3, 0))

    def test_composition_frequencies_sum_to_one(self):
        for spec in (
            DesignSpec("A", 4),
            DesignSpec("A", (2, 5), group_share=0.3),
            DesignSpec("B", (3, 4)),
            DesignSpec("C", 5),
        ):
            classes = spec.composition_classes()
            assert abs(sum(f for f, _, _ in classes) - 1.0) < 1e-12
            for _, m1, m2 in classes:
                assert m1 >= 0 and m2 >= 0 and m1 + m2 >= 1

    def test_scheme_structures(self):
        b_even = DesignSpec("B", 4).composition_classes()
        assert b_even == ((1.0, 2, 2),)
        b_odd = {(m1, m2) for _, m1, m2 in DesignSpec("B", 3).composition_classes()}
        assert b_odd == {(2, 1), (1, 2)}
        c_classes = {(m1, m2) for _, m1, m2 in DesignSpec("C", 4).composition_classes()}
        assert c_classes == {(4, 0), (0, 4)}
        a_classes = DesignSpec("A", 2, group_share=0.25).composition_classes()
        freq = {(m1, m2): f for f, m1, m2 in a_classes}
        np.testing.assert_allclose(freq[(2, 0)], 0.0625)
        np.testing.assert_allclose(freq[(1, 1)], 2 * 0.25 * 0.75)
        np.testing.assert_allclose(freq[(0, 2)], 0.5625)

    def test_weights_are_unity_when_uninformative(self):
        # No correlation, even splits, or equal-size whole-cluster
        # allocation: weighting cannot help, so the constrained solution
        # collapses to ones (empty sides carry weight zero).
        cases = [
            (DesignSpec("A", 4), 0.0),
            (DesignSpec("B", 4), 0.7),
            (DesignSpec("B", 6), 0.3),
            (DesignSpec("C", 4), 0.7),
        ]
        for spec, rho in cases:
            for (m1, m2), (w1, w2) in spec.class_weights(rho, "optimal").items():
                np.testing.assert_allclose(w1, 1.0 if m1 else 0.0, atol=1e-10)
                np.testing.assert_allclose(w2, 1.0 if m2 else 0.0, atol=1e-10)

    def test_mixed_size_whole_cluster_weights_favor_small_clusters(self):
        # Members of a large correlated cluster carry less independent
        # information each, so they get downweighted.
        weights = DesignSpec("C", (2, 6)).class_weights(0.4, "optimal")
        small = weights[(2, 0)][0]
        large = weights[(6, 0)][0]
        assert small > 1.0 > large > 0.0
        assert weights[(0, 2)][1] == pytest.approx(small)
        assert weights[(0, 6)][1] == pytest.approx(large)
        # The normalization constraints still pin the group shares.
        lam = DesignSpec("C", (2, 6)).limits(0.4, "optimal").lam
        np.testing.assert_allclose(lam, [0.5, 0.5], atol=1e-12)

    def test_weights_match_finite_design_solution(self):
        # Dual route: the exact per-class weights must agree with the
        # finite-sample optimal weights on a large realized design.
        rng = np.random.default_rng(21)
        d, m, rho = 6000, 3, 0.5
        labels = (rng.random(d * m) < 0.5).astype(int)
        cluster = np.repeat(np.arange(d), m)
        design = build_design(cluster, labels)
        w = optimal_weights_two_sample(design, rho)
        spec_w = DesignSpec("A", m).class_weights(rho, "optimal")
        m1_per = np.bincount(cluster, weights=(labels == 0), minlength=d).astype(int)
        for cls, (w1, w2) in spec_w.items():
            in_cls = m1_per[cluster] == cls[0]
            got1 = w[in_cls & (labels == 0)]
            got2 = w[in_cls & (labels == 1)]
            if got1.size:
                np.testing.assert_allclose(got1.mean(), w1, atol=0.02)
            if got2.size:
                np.testing.assert_allclose(got2.mean(), w2, atol=0.02)

    def test_limits_match_empirical_design_limits_deterministic(self):
        # Schemes B and C with fixed sizes are deterministic, so the exact
        # class algebra must reproduce the finite-design plug-in verbatim.
        d, m = 500, 4
        cluster = np.repeat(np.arange(d), m)
        within = np.tile(np.arange(m) % 2, d)
        emp = design_limits(build_design(cluster, within))
        spec = DesignSpec("B", m).limits()
        np.testing.assert_allclose(spec.d_b, emp.d_b, atol=1e-12)
        np.testing.assert_allclose(spec.d_c, emp.d_c, atol=1e-12)
        np.testing.assert_allclose(spec.lam, emp.lam, atol=1e-12)

        whole = np.repeat(np.arange(d) % 2, m)
        emp = design_limits(build_design(cluster, whole))
        spec = DesignSpec("C", m).limits()
        np.testing.assert_allclose(spec.d_b, emp.d_b, atol=1e-12)
        np.testing.assert_allclose(spec.d_c, emp.d_c, atol=1e-12)

    def test_limits_match_empirical_design_limits_random(self):
        rng = np.random.default_rng(33)
        d, m, rho = 8000, 4, 0.6
        cluster = np.repeat(np.arange(d), m)
        labels = (rng.random(d * m) < 0.5).astype(int)
        design = build_design(cluster, labels)
        w = optimal_weights_two_sample(design, rho)
        emp = design_limits(design, w)
        spec = DesignSpec("A", m).limits(rho, "optimal")
        np.testing.assert_allclose(spec.lam, emp.lam, atol=0.01)
        np.testing.assert_allclose(spec.d_b, emp.d_b, atol=0.03)
        np.testing.assert_allclose(spec.d_c, emp.d_c, atol=0.05)

    def test_design_a_unweighted_has_no_cross_term(self):
        for m in (2, 4, 7):
            lim = DesignSpec("A", m, group_share=0.4).limits()
            np.testing.assert_allclose(lim.d_c, 0.0, atol=1e-12)

    def test_design_b_and_c_cross_terms(self):
        k = np.array([[1.0, -1.0], [-1.0, 1.0]])
        lim_b = DesignSpec("B", 4).limits()
        np.testing.assert_allclose(lim_b.d_c, -lim_b.d_b, atol=1e-12)
        lim_c = DesignSpec("C", 4).limits()
        np.testing.assert_allclose(lim_c.d_b, k / 4.0, atol=1e-12)
        np.testing.assert_allclose(lim_c.d_c, 3.0 * k / 4.0, atol=1e-12)

    def test_labels(self):
        assert DesignSpec("B", 4).label() == "B(m=4)"
        assert "share=0.3" in DesignSpec("A", (2, 3), group_share=0.3).label()


class TestAreCurve:
    def test_identity_benchmark_is_one(self):
        models = tuple(PopulationModel(p=3, rho=r) for r in (0.0, 0.4, 0.8))
        rows = are_curve(models, DesignSpec("B", 4), kinds=("identity",),
                         weightings=("unweighted",))
        assert all(r["are"] == 1.0 for r in rows)
        assert all(r["mc_se"] == 0.0 for r in rows)

    def test_sign_matches_classic_value_at_independence(self):
        rows = are_curve((PopulationModel(p=3),), DesignSpec("B", 4),
                         kinds=("sign",), weightings=("unweighted",))
        assert abs(rows[0]["are"] - 8.0 / (3.0 * math.pi)) < 0.01

    def test_design_a_unweighted_curves_flat(self):
        models = tuple(PopulationModel(p=3, rho=r) for r in (0.0, 0.3, 0.6, 0.9))
        rows = are_curve(models, DesignSpec("A", 4), kinds=("sign", "rank"),
                         weightings=("unweighted",))
        for kind in ("sign", "rank"):
            vals = [r["are"] for r in rows if r["kind"] == kind]
            np.testing.assert_allclose(vals, vals[0], rtol=1e-12)

    def test_weighted_hotelling_tail_invariance(self):
        spec = DesignSpec("A", 4)
        out = {}
        for fam, nu in (("spherical-normal", math.inf), ("spherical-t", 3.0)):
            models = tuple(
                PopulationModel(p=3, family=fam, nu=nu, rho=r) for r in (0.3, 0.7)
            )
            rows = are_curve(models, spec, kinds=("identity",),
                             weightings=("optimal",))
            out[fam] = [r["are"] for r in rows]
        np.testing.assert_allclose(out["spherical-normal"], out["spherical-t"],
                                   rtol=1e-12)

    def test_weighting_never_hurts(self):
        models = tuple(PopulationModel(p=3, rho=r) for r in (0.0, 0.5, 0.9))
        rows = are_curve(models, DesignSpec("A", 4), kinds=("identity", "sign"))
        vals = {(r["kind"], r["weighting"], r["rho"]): r["are"] for r in rows}
        for kind in ("identity", "sign"):
            for rho in (0.0, 0.5, 0.9):
                assert (
                    vals[(kind, "optimal", rho)]
                    >= vals[(kind, "unweighted", rho)] - 1e-9
                )

    def test_heavy_tails_reorder_the_tests(self):
        rows = are_curve(
            (PopulationModel(p=3, family="spherical-t", nu=3.0),),
            DesignSpec("B", 4), kinds=("sign", "rank"), weightings=("unweighted",),
        )
        vals = {r["kind"]: r["are"] for r in rows}
        assert vals["sign"] > vals["rank"] > 1.0

    def test_whole_cluster_design_returns_near_independence_value(self):
        rows = are_curve(
            (PopulationModel(p=3, rho=0.0), PopulationModel(p=3, rho=0.95)),
            DesignSpec("C", 2), kinds=("sign", "rank"), weightings=("unweighted",),
        )
        vals = {(r["kind"], r["rho"]): r["are"] for r in rows}
        for kind in ("sign", "rank"):
            assert abs(vals[(kind, 0.95)] - vals[(kind, 0.0)]) < 0.02

    def test_row_schema(self):
        rows = are_curve((PopulationModel(p=2, rho=0.2),), DesignSpec("B", 2),
                         kinds=("sign",), weightings="unweighted")
        (row,) = rows
        assert row["design"] == "B(m=2)"
        assert row["weighting"] == "unweighted"
        assert row["rho"] == 0.2
        assert row["mc_se"] > 0.0
