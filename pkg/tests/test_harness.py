"""Scenario harness, convergence experiment, and t-ingestion tests.

The t-to-z map is checked against a 30-digit mpmath oracle (incomplete-beta
tail of the t distribution, inverse error function for the normal quantile),
and the convergence experiment's analytic limit against an independent
root-find on the marginal CDF.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from scipy.optimize import brentq

from rankshrink.core import ConfigError, InvalidInputError, RngSpec
from rankshrink.harness import (
    ANOVA3_SCHEMES,
    GAUSSIAN_SCHEMES,
    ScenarioSpec,
    TwoPointPrior,
    UniformPrior,
    gen_scenario,
    make_prior,
    run_table,
    t_to_z,
    theorem1_experiment,
    thread_count,
    two_sample_t,
)


class TestScenarioSpec:
    def test_rejects_unknown_family_and_scheme(self):
        with pytest.raises(ConfigError):
            ScenarioSpec(family="poisson", scheme="G1")
        with pytest.raises(ConfigError):
            ScenarioSpec(family="gaussian", scheme="C1")
        with pytest.raises(ConfigError):
            ScenarioSpec(family="anova3", scheme="G1")

    def test_rejects_unknown_estimator(self):
        with pytest.raises(ConfigError, match="tweedie4"):
            ScenarioSpec(family="gaussian", scheme="G1", estimators=("tweedie4",))
        with pytest.raises(ConfigError, match="james_stein"):
            ScenarioSpec(family="anova3", scheme="C1", estimators=("james_stein",))
        with pytest.raises(ConfigError):
            ScenarioSpec(family="gaussian", scheme="G1", estimators=())

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigError):
            ScenarioSpec(family="gaussian", scheme="G1", trials=0)
        with pytest.raises(ConfigError):
            ScenarioSpec(family="gaussian", scheme="G1", p=0)


class TestSchemes:
    def test_gaussian_mean_patterns(self):
        spec = ScenarioSpec(family="gaussian", scheme="G1", p=1000)
        for scheme, check in [
            ("G1", lambda mu: (mu == 0).all()),
            ("G2", lambda mu: ((mu == 0).sum() == 500 and (mu == 6).sum() == 500)),
            ("G3", lambda mu: ((mu == 0).sum() == 900 and (mu == 6).sum() == 100)),
            ("G6", lambda mu: sorted(set(mu)) == [6.0, 12.0, 18.0, 24.0, 30.0]
                and all((mu == v).sum() == 200 for v in (6, 12, 18, 24, 30))),
        ]:
            spec = ScenarioSpec(family="gaussian", scheme=scheme, p=1000)
            mu, z = gen_scenario(spec, 0)
            assert check(mu), scheme
            assert z.shape == (1000,)

    def test_g4_mixes_zeros_with_wide_normals(self):
        spec = ScenarioSpec(family="gaussian", scheme="G4", p=1000)
        mu, _ = gen_scenario(spec, 0)
        assert (mu == 0).sum() == 900
        tail = mu[mu != 0]
        assert tail.size == 100
        assert 1.2 < tail.std() < 2.8

    def test_g5_draws_standard_normal_means(self):
        spec = ScenarioSpec(family="gaussian", scheme="G5", p=1000)
        mu, _ = gen_scenario(spec, 0)
        assert abs(mu.mean()) < 0.15
        assert 0.85 < mu.std() < 1.15

    def test_anova3_truth_patterns(self):
        c2 = gen_scenario(ScenarioSpec(family="anova3", scheme="C2", p=1000), 0)[0]
        assert c2.min() >= 0.0 and c2.max() <= 0.99
        assert 0.07 < c2.mean() < 0.13
        c3 = gen_scenario(ScenarioSpec(family="anova3", scheme="C3", p=1000), 0)[0]
        assert c3.min() >= 0.0 and c3.max() <= 0.99
        cluster = c3[np.abs(c3 - 0.55) < 0.2]
        assert 150 < cluster.size < 250

    def test_trials_redraw_random_truths(self):
        spec = ScenarioSpec(family="gaussian", scheme="G5", p=100)
        mu0, _ = gen_scenario(spec, 0)
        mu1, _ = gen_scenario(spec, 1)
        assert not np.array_equal(mu0, mu1)

    def test_deterministic_per_trial(self):
        spec = ScenarioSpec(family="anova3", scheme="C1", p=30, n=12)
        a = gen_scenario(spec, 2)
        b = gen_scenario(spec, 2)
        np.testing.assert_array_equal(a[1][1], b[1][1])

    def test_rejects_negative_trial(self):
        spec = ScenarioSpec(family="gaussian", scheme="G1", p=10)
        with pytest.raises(InvalidInputError):
            gen_scenario(spec, -1)


class TestRunTable:
    def test_report_shape_and_determinism(self):
        spec = ScenarioSpec(family="gaussian", scheme="G2", p=60, trials=3,
                            estimators=("boot1", "james_stein"), B=10)
        a = run_table(spec)
        b = run_table(spec)
        for name in spec.estimators:
            assert a.per_trial[name].shape == (3,)
            np.testing.assert_array_equal(a.per_trial[name], b.per_trial[name])
        rows = a.rows()
        assert [r[0] for r in rows] == list(spec.estimators)

    def test_shrinkage_beats_naive_on_sparse_scheme(self):
        spec = ScenarioSpec(family="gaussian", scheme="G3", p=200, trials=3,
                            estimators=("boot1",), B=30)
        report = run_table(spec)
        assert report.mean("boot1") < 0.6

    def test_single_trial_se_is_nan(self):
        spec = ScenarioSpec(family="gaussian", scheme="G1", p=30, trials=1,
                            estimators=("james_stein",))
        assert math.isnan(run_table(spec).se("james_stein"))


class TestThreadCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("RANKSHRINK_THREADS", "7")
        assert thread_count() == 7

    def test_default_is_cpu_count(self, monkeypatch):
        monkeypatch.delenv("RANKSHRINK_THREADS", raising=False)
        assert thread_count() >= 1

    def test_rejects_bad_values(self, monkeypatch):
        monkeypatch.setenv("RANKSHRINK_THREADS", "zero")
        with pytest.raises(ConfigError):
            thread_count()
        monkeypatch.setenv("RANKSHRINK_THREADS", "0")
        with pytest.raises(ConfigError):
            thread_count()


class TestPriors:
    def test_make_prior(self):
        assert isinstance(make_prior("two_point", 2.0), TwoPointPrior)
        assert isinstance(make_prior("uniform", 1.0), UniformPrior)
        with pytest.raises(InvalidInputError):
            make_prior("cauchy", 1.0)

    def test_two_point_posterior_mean_is_tweedie_of_marginal(self):
        # a*tanh(az) must equal z + d/dz log f for the analytic marginal
        prior = TwoPointPrior(a=2.0)
        z = np.linspace(-4.0, 4.0, 81)
        h = 1e-6
        deriv = (np.log(prior.marginal_pdf(z + h))
                 - np.log(prior.marginal_pdf(z - h))) / (2 * h)
        np.testing.assert_allclose(prior.posterior_mean(z), z + deriv, atol=1e-6)

    def test_uniform_posterior_mean_matches_quadrature(self):
        prior = UniformPrior(a=1.0)
        for z in (-2.5, 0.0, 0.7, 3.0):
            assert prior.posterior_mean(z) == pytest.approx(
                prior.posterior_mean_quadrature(z), abs=1e-7)

    def test_marginal_cdf_is_integral_of_pdf(self):
        for prior in (TwoPointPrior(2.0), UniformPrior(1.0)):
            z = np.linspace(-6.0, 6.0, 1201)
            pdf_int = np.cumsum(prior.marginal_pdf(z)) * (z[1] - z[0])
            cdf = prior.marginal_cdf(z) - prior.marginal_cdf(z[0])
            np.testing.assert_allclose(pdf_int - pdf_int[0], cdf, atol=5e-3)


class TestTheorem1:
    def test_analytic_limit_matches_independent_root_find(self):
        prior = TwoPointPrior(a=2.0)
        rows = theorem1_experiment(prior, 0.9, (50,), 10, 0)
        zq = brentq(lambda v: prior.marginal_cdf(v) - 0.9, -15.0, 15.0, xtol=1e-12)
        assert rows[0].analytic == pytest.approx(zq - 2.0 * math.tanh(2.0 * zq),
                                                 abs=1e-8)

    def test_rank_is_floor_of_quantile(self):
        rows = theorem1_experiment("two_point", 0.9, (10, 100), 5, 0)
        assert rows[0].rank == 9
        assert rows[1].rank == 90

    def test_gap_and_se_fields(self):
        row = theorem1_experiment("uniform", 0.75, (40,), 50, 3)[0]
        assert row.gap == pytest.approx(row.empirical - row.analytic)
        assert row.se > 0

    def test_validations(self):
        with pytest.raises(InvalidInputError):
            theorem1_experiment("two_point", 0.0, (10,), 5, 0)
        with pytest.raises(InvalidInputError):
            theorem1_experiment("two_point", 0.5, (0,), 5, 0)
        with pytest.raises(InvalidInputError):
            theorem1_experiment("two_point", 0.5, (10,), 1, 0)


def _z_oracle(t, df):
    """30-digit reference: Phi^{-1}(T_df(t)) through the incomplete beta."""
    with mp.workdps(30):
        t = mp.mpf(t)
        df = mp.mpf(df)
        tail = mp.betainc(df / 2, mp.mpf(1) / 2, x2=df / (df + t * t),
                          regularized=True) / 2
        return float(mp.sqrt(2) * mp.erfinv(1 - 2 * tail))


class TestTToZ:
    def test_matches_mpmath_oracle(self):
        cases = [(0.5, 3.0), (3.0, 10.0), (8.0, 4.0), (1.7, 25.0)]
        z = t_to_z([t for t, _ in cases], [df for _, df in cases])
        for got, (t, df) in zip(z, cases):
            assert got == pytest.approx(_z_oracle(t, df), rel=1e-9)

    def test_odd_symmetry_and_zero(self):
        z = t_to_z([-2.0, 0.0, 2.0], 7.0)
        assert z[1] == 0.0
        assert z[0] == pytest.approx(-z[2], rel=1e-12)

    def test_monotone(self):
        t = np.linspace(-6, 6, 41)
        assert (np.diff(t_to_z(t, 11.0)) > 0).all()

    def test_extreme_statistics_stay_finite(self):
        assert np.isfinite(t_to_z([60.0, -60.0], 30.0)).all()

    def test_validations(self):
        with pytest.raises(InvalidInputError):
            t_to_z([1.0, 2.0], [3.0])
        with pytest.raises(InvalidInputError):
            t_to_z([1.0], 0.5)
        with pytest.raises(InvalidInputError):
            t_to_z([1.0], np.nan)


class TestTwoSampleT:
    def test_pooled_hand_example(self):
        # groups [1,2,3] vs [4,5,6]: t = 3/sqrt(2/3), df = 4
        matrix = np.array([[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]])
        t, df = two_sample_t(matrix, [0, 0, 0, 1, 1, 1])
        assert t[0] == pytest.approx(3.0 / math.sqrt(2.0 / 3.0))
        assert df == 4.0

    def test_welch_hand_example(self):
        # groups [1,2,3] (var 1) vs [4,6,8] (var 4): Welch df = 50/17
        matrix = np.array([[1.0, 2.0, 3.0, 4.0, 6.0, 8.0]])
        t, df = two_sample_t(matrix, [0, 0, 0, 1, 1, 1], welch=True)
        assert t[0] == pytest.approx(4.0 / math.sqrt(5.0 / 3.0))
        assert df[0] == pytest.approx(50.0 / 17.0)

    def test_sign_convention(self):
        # statistic is group1 mean minus group0 mean
        matrix = np.array([[5.0, 5.0, 5.0, 1.0, 1.0, 1.1]])
        t, _ = two_sample_t(matrix, [0, 0, 0, 1, 1, 1])
        assert t[0] < 0

    def test_validations(self):
        good = np.zeros((2, 6))
        with pytest.raises(InvalidInputError):
            two_sample_t(np.zeros(6), [0, 0, 0, 1, 1, 1])
        with pytest.raises(InvalidInputError):
            two_sample_t(good, [0, 0, 1, 1])
        with pytest.raises(InvalidInputError):
            two_sample_t(good, [0, 0, 0, 0, 0, 1])
        bad = good.copy()
        bad[0, 0] = np.inf
        with pytest.raises(InvalidInputError):
            two_sample_t(bad, [0, 0, 0, 1, 1, 1])

    def test_assertion_against_scheme_list_constants(self):
        assert GAUSSIAN_SCHEMES == ("G1", "G2", "G3", "G4", "G5", "G6")
        assert ANOVA3_SCHEMES == ("C1", "C2", "C3")
