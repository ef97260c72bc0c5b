"""Tests for the estimator layer: classical, PPI, PPI++, FAB variants."""

import math

import numpy as np
import pytest

from fabppi.errors import (
    BracketError,
    ConfigError,
    DegenerateSampleError,
    DomainError,
    SampleSizeError,
)
from fabppi.fabcr import fab_cr, hausdorff_distance, interval_region
from fabppi.ppi import (
    DeltaRule,
    EstimateReport,
    LabelledSample,
    LossModel,
    Method,
    ThetaGrid,
    UnlabelledSample,
    classical_convex,
    classical_mean,
    control_variate_mean,
    fab_ppi_convex,
    fab_ppi_mean,
    lambda_hat,
    mean_stats_batch,
    multivariate_fab_cr,
    odds_ratio_ci,
    ppi_convex,
    ppi_mean,
    rectifier_stats,
)
from fabppi.priors import PriorSpec, ScaleRule

HS = PriorSpec.horseshoe()
GAUSS = PriorSpec.gaussian()
Z95 = 1.6448536269514722


def _labelled(y, fx):
    return LabelledSample(np.asarray(y, dtype=float), np.asarray(fx, dtype=float))


class TestSamples:
    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            _labelled([1.0, 2.0], [1.0])

    def test_minimum_sizes(self):
        with pytest.raises(SampleSizeError):
            _labelled([1.0], [1.0])
        with pytest.raises(SampleSizeError):
            UnlabelledSample.from_predictions([1.0])

    def test_unlabelled_modes_exclusive(self):
        with pytest.raises(ConfigError):
            UnlabelledSample(fx=np.array([1.0, 2.0]), analytic_mean=0.0)
        with pytest.raises(ConfigError):
            UnlabelledSample()

    def test_analytic_mode(self):
        u = UnlabelledSample.analytic(0.7)
        assert u.is_analytic and u.mean == 0.7 and u.n == 0


class TestClassicalMean:
    def test_zero_variance(self):
        rep = classical_mean(_labelled([1.0] * 4, [0.0] * 4), 0.1)
        assert rep.point == 1.0
        assert rep.region.intervals == ((1.0, 1.0),)

    def test_two_point_sample(self):
        rep = classical_mean(_labelled([0.0, 2.0], [0.0, 0.0]), 0.1)
        assert rep.point == 1.0
        # s = sqrt(2), n = 2: half-width z * sqrt(2)/sqrt(2) = z
        assert rep.region.lower == pytest.approx(1.0 - Z95, abs=1e-9)
        assert rep.region.upper == pytest.approx(1.0 + Z95, abs=1e-9)

    def test_shift_equivariance(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=30)
        base = classical_mean(_labelled(y, y), 0.1)
        shifted = classical_mean(_labelled(y + 5.0, y + 5.0), 0.1)
        assert shifted.point == pytest.approx(base.point + 5.0, rel=1e-12)
        assert shifted.region.lower == pytest.approx(base.region.lower + 5.0, rel=1e-12)


class TestLambdaHat:
    def test_uncorrelated_predictions(self):
        y = np.array([1.0, -1.0, 1.0, -1.0])
        fx = np.array([1.0, 1.0, -1.0, -1.0])
        lab = _labelled(y, fx)
        assert lambda_hat(lab, UnlabelledSample.from_predictions(fx)) == 0.0

    def test_hand_computed_value(self):
        lab = _labelled([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        unl = UnlabelledSample.from_predictions([1.0, 2.0, 3.0])
        assert lambda_hat(lab, unl) == pytest.approx(0.625, abs=1e-12)

    def test_perfect_predictions_large_n(self):
        # single-draw lambda_hat has sd ~ sqrt(2/n); average replications
        rng = np.random.default_rng(2)
        reps, n, N = 200, 100, 10_000
        vals = np.empty(reps)
        for i in range(reps):
            y = rng.normal(size=n)
            lab = _labelled(y, y)
            unl = UnlabelledSample.from_predictions(rng.normal(size=N))
            vals[i] = lambda_hat(lab, unl)
        assert vals.mean() == pytest.approx(1.0, abs=0.05)

    def test_degenerate_predictions(self):
        lab = _labelled([1.0, 2.0], [3.0, 3.0])
        with pytest.raises(DegenerateSampleError):
            lambda_hat(lab, UnlabelledSample.from_predictions([3.0, 3.0]))


class TestRectifierStats:
    def test_perfect_predictions(self):
        y = np.array([0.5, 1.5, 2.5])
        st = rectifier_stats(
            _labelled(y, y), UnlabelledSample.from_predictions(y), lam=1.0
        )
        assert st.delta_hat == 0.0 and st.sigma_hat == 0.0 and st.degenerate

    def test_lambda_one_is_mean_gap(self):
        y = np.array([1.0, 2.0, 4.0])
        fx = np.array([2.0, 2.0, 5.0])
        st = rectifier_stats(
            _labelled(y, fx), UnlabelledSample.analytic(0.0), lam=1.0
        )
        assert st.delta_hat == pytest.approx(fx.mean() - y.mean(), rel=1e-12)

    def test_lambda_zero_recovers_classical(self):
        y = np.array([1.0, 2.0, 4.0])
        fx = np.array([2.0, 2.0, 5.0])
        st = rectifier_stats(
            _labelled(y, fx), UnlabelledSample.analytic(0.7), lam=0.0
        )
        assert st.xi_hat == pytest.approx(-y.mean(), rel=1e-12)
        assert st.delta_hat == pytest.approx(-y.mean() + 0.7, rel=1e-12)
        # theta_hat = m_hat - delta_hat is the classical mean
        assert st.m_hat - st.delta_hat == pytest.approx(y.mean(), rel=1e-12)


class TestPpiMean:
    def test_perfect_predictions_known_mean(self):
        y = np.array([0.3, 0.9, 1.5])
        rep = ppi_mean(
            _labelled(y, y), UnlabelledSample.analytic(0.7), 0.1, lam_override=1.0
        )
        assert rep.point == pytest.approx(0.7, rel=1e-12)
        assert rep.region.volume == 0.0
        assert rep.diagnostics.get("degenerate") == 1.0

    def test_lambda_zero_is_classical(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=40)
        fx = y + rng.normal(size=40)
        lab = _labelled(y, fx)
        rep = ppi_mean(lab, UnlabelledSample.analytic(0.0), 0.1, lam_override=0.0)
        classical = classical_mean(lab, 0.1)
        assert rep.point == classical.point
        assert rep.region.volume == pytest.approx(classical.region.volume, rel=1e-12)

    def test_noisy_regime_width(self):
        # var(Y - f) = sigma_Y^2 = 1 at n = 400: expected width 2 z / 20
        rng = np.random.default_rng(4)
        reps = 300
        n = 400
        y = rng.normal(size=(reps, n))
        f = y + rng.normal(size=(reps, n))
        stats = mean_stats_batch(y, f, analytic_mean=0.0, lam_override=1.0)
        widths = 2.0 * Z95 * stats.sigma
        assert widths.mean() == pytest.approx(2.0 * Z95 / 20.0, rel=0.05)

    def test_full_mode_needs_vectors(self):
        lab = _labelled([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ConfigError):
            ppi_mean(lab, UnlabelledSample.analytic(0.0), 0.1, mode=DeltaRule.full())

    def test_full_mode_wider_than_known_m(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=100)
        fx = y + 0.3 * rng.normal(size=100)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(rng.normal(size=500))
        known = ppi_mean(lab, unl, 0.1)
        full = ppi_mean(lab, unl, 0.1, mode=DeltaRule.full())
        assert full.region.volume > known.region.volume
        assert full.delta == pytest.approx(0.05)


class TestFabPpiMean:
    def test_zero_rectifier_shrinks(self):
        lab = _labelled([-1.0, 1.0], [1.0, -1.0])
        unl = UnlabelledSample.analytic(0.0)
        rep = fab_ppi_mean(lab, unl, HS, 0.1, lam_override=1.0)
        ppi = ppi_mean(lab, unl, 0.1, lam_override=1.0)
        assert rep.point == pytest.approx(0.0, abs=1e-12)
        assert rep.region.volume < ppi.region.volume

    def test_extreme_rectifier_reverts_to_ppi(self):
        rng = np.random.default_rng(6)
        n = 400
        y = rng.normal(size=n)
        fx = y + 1.5 + 0.5 * rng.normal(size=n)  # delta/sigma ~ 1.5/(0.5/20) = 60
        lab = _labelled(y, fx)
        unl = UnlabelledSample.analytic(0.0)
        fab = fab_ppi_mean(lab, unl, HS, 0.1, lam_override=1.0)
        ppi = ppi_mean(lab, unl, 0.1, lam_override=1.0)
        sigma = fab.diagnostics["sigma_hat"]
        assert abs(fab.diagnostics["delta_hat"]) / sigma > 30.0
        assert hausdorff_distance(fab.region, ppi.region) < 0.05 * sigma

    def test_gaussian_prior_inconsistency_limit(self):
        # with a unit bias the Gaussian-prior point converges to theta* + 1/2
        rng = np.random.default_rng(7)
        reps, n = 40, 10_000
        x = rng.normal(size=(reps, n))
        y = x + rng.normal(size=(reps, n))
        f = x + 1.0
        stats = mean_stats_batch(y, f, analytic_mean=1.0, lam_override=1.0)
        # gaussian matched-scale posterior mean is delta/2
        points = stats.theta_f - stats.delta / 2.0
        se = points.std(ddof=1) / math.sqrt(reps)
        assert points.mean() == pytest.approx(0.5, abs=3.0 * se + 1e-12)
        single = fab_ppi_mean(
            _labelled(y[0], f[0]), UnlabelledSample.analytic(1.0), GAUSS, 0.1,
            lam_override=1.0,
        )
        assert single.point == pytest.approx(points[0], rel=1e-12)

    def test_degenerate_sample_rejected(self):
        y = np.array([1.0, 2.0])
        with pytest.raises(DegenerateSampleError):
            fab_ppi_mean(_labelled(y, y), UnlabelledSample.analytic(0.0), HS, 0.1)

    def test_lambda_continuity_bit_for_bit(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=60)
        fx = y + 0.5 * rng.normal(size=60)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(rng.normal(size=400))
        forced = fab_ppi_mean(lab, unl, HS, 0.1, power_tuned=True, lam_override=1.0)
        plain = fab_ppi_mean(lab, unl, HS, 0.1, power_tuned=False)
        assert forced.point == plain.point
        assert forced.region.intervals == plain.region.intervals

    def test_point_always_in_region(self):
        rng = np.random.default_rng(9)
        for power in (False, True):
            for prior in (HS, GAUSS):
                y = rng.normal(size=50)
                fx = y + rng.normal(size=50)
                lab = _labelled(y, fx)
                unl = UnlabelledSample.from_predictions(rng.normal(size=300))
                for rule in (DeltaRule.known_m(), DeltaRule.full()):
                    rep = fab_ppi_mean(
                        lab, unl, prior, 0.1, delta_rule=rule, power_tuned=power
                    )
                    assert rep.region.contains(rep.point)

    def test_shift_equivariance(self):
        rng = np.random.default_rng(10)
        y = rng.normal(size=50)
        fx = y + 0.4 * rng.normal(size=50)
        fu = rng.normal(size=300)
        c = 11.0
        base = fab_ppi_mean(
            _labelled(y, fx), UnlabelledSample.from_predictions(fu), HS, 0.1
        )
        moved = fab_ppi_mean(
            _labelled(y + c, fx + c), UnlabelledSample.from_predictions(fu + c), HS, 0.1
        )
        assert moved.point == pytest.approx(base.point + c, abs=1e-9)
        assert moved.region.lower == pytest.approx(base.region.lower + c, abs=1e-9)
        assert moved.region.upper == pytest.approx(base.region.upper + c, abs=1e-9)

    def test_inverse_sqrt_n_scale_resolves(self):
        rng = np.random.default_rng(11)
        y = rng.normal(size=50)
        fx = y + rng.normal(size=50)
        rep = fab_ppi_mean(
            _labelled(y, fx),
            UnlabelledSample.analytic(0.0),
            PriorSpec.horseshoe(ScaleRule.INVERSE_SQRT_N),
            0.1,
        )
        assert rep.prior.scale_rule is ScaleRule.FIXED
        assert rep.prior.scale_value == pytest.approx(1.0 / math.sqrt(50))


class TestConvex:
    def test_squared_loss_matches_mean_path(self):
        rng = np.random.default_rng(12)
        y = rng.normal(size=80)
        fx = y + 0.5 * rng.normal(size=80)
        fu = rng.normal(size=500)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(fu)
        grid = ThetaGrid(-3.0, 3.0, 2001)
        for rule in (DeltaRule.known_m(), DeltaRule.full()):
            mean_rep = fab_ppi_mean(lab, unl, HS, 0.1, delta_rule=rule)
            conv_rep = fab_ppi_convex(
                lab, unl, LossModel.squared(), HS, 0.1, delta_rule=rule, theta_grid=grid
            )
            assert abs(conv_rep.point - mean_rep.point) <= grid.step
            assert abs(conv_rep.region.lower - mean_rep.region.lower) <= 2 * grid.step
            assert abs(conv_rep.region.upper - mean_rep.region.upper) <= 2 * grid.step

    def test_pinball_median_with_perfect_predictions(self):
        vals = np.array([1.0, 2.0, 3.0, 4.0])
        lab = _labelled(vals, vals)
        unl = UnlabelledSample.from_predictions(vals)
        grid = ThetaGrid(0.0, 5.0, 1001)
        rep = fab_ppi_convex(lab, unl, LossModel.pinball(0.5), HS, 0.1, theta_grid=grid)
        assert rep.point == pytest.approx(np.median(vals), abs=grid.step)

    def test_biased_quantile_horseshoe_tracks_ppi(self):
        rng = np.random.default_rng(13)
        n, N = 300, 3000
        fx = rng.normal(size=n)
        y = fx + 10.0  # heavily biased predictions
        fu = rng.normal(size=N)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(fu)
        grid = ThetaGrid(7.0, 13.0, 1201)
        fab = fab_ppi_convex(
            lab, unl, LossModel.pinball(0.5), HS, 0.1, theta_grid=grid
        )
        ppi = ppi_convex(lab, unl, LossModel.pinball(0.5), 0.1, theta_grid=grid)
        assert fab.region.volume == pytest.approx(ppi.region.volume, rel=0.10)

    def test_classical_convex_median(self):
        # even n: the subgradient mean is exactly zero on the middle cell and
        # the tie-run middle reproduces the interpolated median
        rng = np.random.default_rng(14)
        y = rng.normal(loc=2.0, size=400)
        grid = ThetaGrid(0.0, 4.0, 2001)
        rep = classical_convex(y, LossModel.pinball(0.5), 0.1, grid)
        order = np.sort(y)
        lo_stat, hi_stat = order[199], order[200]
        assert lo_stat - grid.step <= rep.point <= hi_stat + grid.step
        assert rep.point == pytest.approx(
            np.median(y), abs=0.5 * (hi_stat - lo_stat) + 2 * grid.step
        )
        assert rep.region.contains(float(np.median(y)))

    def test_grid_edge_error(self):
        rng = np.random.default_rng(15)
        y = rng.normal(size=50) + 10.0
        fx = y.copy() + 0.1 * rng.normal(size=50)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(rng.normal(size=100) + 10.0)
        with pytest.raises(BracketError):
            fab_ppi_convex(
                lab,
                unl,
                LossModel.squared(),
                HS,
                0.1,
                theta_grid=ThetaGrid(-1.0, 1.0, 101),
            )


class TestMultivariate:
    def test_single_dimension_matches_fab_cr(self):
        regions = multivariate_fab_cr([0.4], [1.0], HS, 0.1)
        direct = fab_cr(0.4, 1.0, HS, 0.1)
        assert len(regions) == 1
        assert regions[0].lower == pytest.approx(direct.lower, abs=2e-6)
        assert regions[0].upper == pytest.approx(direct.upper, abs=2e-6)

    def test_two_dimensions_split_level(self):
        regions = multivariate_fab_cr([0.0, 0.0], [1.0, 1.0], HS, 0.1)
        direct = fab_cr(0.0, 1.0, HS, 0.05)
        for region in regions:
            assert region.level == pytest.approx(0.95)
            assert region.volume == pytest.approx(direct.volume, abs=1e-5)

    def test_joint_coverage_conservative(self):
        # true joint coverage is 0.95^2 = 0.9025 >= 0.90 (union bound holds);
        # the empirical check needs the usual 3-SE binomial guard band
        rng = np.random.default_rng(16)
        reps = 2000
        truth = np.array([0.0, 3.0])
        covered = 0
        draws0 = rng.normal(truth[0], 1.0, reps)
        draws1 = rng.normal(truth[1], 1.0, reps)
        from fabppi.fabcr import fab_cr_batch

        regions0 = fab_cr_batch(draws0, np.ones(reps), HS, 0.05)
        regions1 = fab_cr_batch(draws1, np.ones(reps), HS, 0.05)
        for r0, r1 in zip(regions0, regions1):
            covered += r0.contains(truth[0]) and r1.contains(truth[1])
        guard = 3.0 * math.sqrt(0.9 * 0.1 / reps)
        assert covered / reps >= 0.90 - guard

    def test_validation(self):
        with pytest.raises(DomainError):
            multivariate_fab_cr([0.0, 1.0], [1.0], HS, 0.1)
        with pytest.raises(DomainError):
            multivariate_fab_cr([0.0], [0.0], HS, 0.1)


class TestOddsRatio:
    def test_equal_point_intervals(self):
        assert odds_ratio_ci((0.5, 0.5), (0.5, 0.5)) == (1.0, 1.0)

    def test_hand_computed(self):
        lo, hi = odds_ratio_ci((0.4, 0.6), (0.4, 0.6))
        assert lo == pytest.approx(4.0 / 9.0)
        assert hi == pytest.approx(9.0 / 4.0)

    def test_monotone_widening(self):
        base = odds_ratio_ci((0.4, 0.6), (0.45, 0.55))
        wider0 = odds_ratio_ci((0.35, 0.65), (0.45, 0.55))
        wider1 = odds_ratio_ci((0.4, 0.6), (0.40, 0.60))
        assert wider0[0] <= base[0] and wider0[1] >= base[1]
        assert wider1[0] <= base[0] and wider1[1] >= base[1]

    def test_domain(self):
        with pytest.raises(DomainError):
            odds_ratio_ci((0.0, 0.5), (0.4, 0.6))
        with pytest.raises(DomainError):
            odds_ratio_ci((0.4, 0.6), (0.4, 1.0))


class TestControlVariate:
    def test_centred_variate_vanishes(self):
        y = np.array([1.0, 2.0, 3.0])
        z = np.full(3, 5.0)
        rep = control_variate_mean(z, y, 5.0, lam=2.0)
        assert rep.point == pytest.approx(y.mean())

    def test_perfect_correlation(self):
        z = np.array([0.1, 0.9, 0.4])
        rep = control_variate_mean(z, z, mu=0.5, lam=1.0)
        assert rep.point == pytest.approx(0.5)
        assert rep.region.volume == 0.0

    def test_variance_reduction_ratio(self):
        # with corr(Z, Y) = 0.8 the width shrinks by sqrt(1 - 0.64)
        rng = np.random.default_rng(17)
        reps, n = 400, 200
        widths_cv = np.empty(reps)
        widths_cl = np.empty(reps)
        for i in range(reps):
            z = rng.normal(size=n)
            y = 0.8 * z + 0.6 * rng.normal(size=n)
            rep = control_variate_mean(z, y, 0.0)
            widths_cv[i] = rep.region.volume
            widths_cl[i] = classical_mean(_labelled(y, z), 0.1).region.volume
        assert widths_cv.mean() / widths_cl.mean() == pytest.approx(0.6, rel=0.05)

    def test_degenerate_variate(self):
        with pytest.raises(DegenerateSampleError):
            control_variate_mean(np.ones(3), np.array([1.0, 2.0, 3.0]), 1.0)


class TestReportInvariants:
    def test_delta_vs_alpha(self):
        rng = np.random.default_rng(18)
        y = rng.normal(size=30)
        fx = y + rng.normal(size=30)
        lab = _labelled(y, fx)
        unl = UnlabelledSample.from_predictions(rng.normal(size=100))
        known = ppi_mean(lab, unl, 0.1)
        assert known.delta == known.alpha
        full = ppi_mean(lab, unl, 0.1, mode=DeltaRule.full(0.03))
        assert 0.0 < full.delta < full.alpha

    def test_method_labels(self):
        assert Method.PPI_PP.value == "ppi++"
        assert Method.FAB_PPI.value == "fab-ppi"
