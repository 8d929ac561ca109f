"""Cox model: simulation, partial likelihood, sieve scores, information."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from statsmodels.duration.hazard_regression import PHReg

from sievemle.basis import BasisSpec, coefficients_for_target
from sievemle.cox import (
    CoxData,
    CoxDgpSpec,
    CoxSample,
    FiniteLaw,
    GaussianLaw,
    NoCensor,
    UniformCensor,
    ExponentialCensor,
    a_n_cox,
    cox_partial_loglik,
    baseline_cum_hazard,
    efficient_info_cox,
    efficient_info_cox_sieve,
    efficient_score_cox_limit,
    fit_cox_partial,
    interval_ratios_population,
    interval_ratios_sample,
    loglr_cox,
    risk_set_curves,
    s_n_k,
    sieve_efficient_score_cox,
    sieve_scores_cox,
    simulate_cox,
)
from sievemle.errors import (
    DegenerateInformationError,
    EmptyRiskError,
    InvalidHazardError,
    IterationError,
    NoInformationError,
    SeparationError,
)

BERNOULLI = FiniteLaw((0.0, 1.0), (0.5, 0.5))


def standard_dgp(**overrides):
    kw = dict(
        theta0=math.log(2),
        eta0=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        w_law=BERNOULLI,
        censor_law=UniformCensor(2.0),
    )
    kw.update(overrides)
    return CoxDgpSpec(**kw)


def step_function(spec, gamma0):
    c = spec.k * np.asarray(gamma0)
    return lambda t: c[np.minimum((np.asarray(t, dtype=float) * spec.k).astype(int),
                                  spec.k - 1)]


class TestSimulate:
    def test_exponential_event_fraction(self):
        dgp = standard_dgp(theta0=0.0, censor_law=NoCensor())
        data = simulate_cox(dgp, 20_000, seed=2)
        p = 1 - math.exp(-1)
        tol = 3 * math.sqrt(p * (1 - p) / data.n)
        assert abs(data.delta.mean() - p) <= tol
        assert np.all((data.t > 0) & (data.t <= 1))

    def test_determinism(self):
        dgp = standard_dgp()
        a = simulate_cox(dgp, 500, seed=9)
        b = simulate_cox(dgp, 500, seed=9)
        np.testing.assert_array_equal(a.t, b.t)
        np.testing.assert_array_equal(a.delta, b.delta)
        np.testing.assert_array_equal(a.w, b.w)

    def test_group_survival_matches_cumulative_hazard(self):
        # hazard (1 + t) * 2 for the w = 1 group; Lambda0(0.5) = 0.625
        dgp = standard_dgp(eta0=lambda t: 1.0 + np.asarray(t, dtype=float),
                           censor_law=NoCensor())
        data = simulate_cox(dgp, 20_000, seed=4)
        grp = data.w == 1.0
        surv = np.mean(data.t[grp] > 0.5)
        target = math.exp(-2 * 0.625)
        tol = 3 * math.sqrt(target * (1 - target) / grp.sum())
        assert abs(surv - target) <= tol


class TestRiskSets:
    def test_s0_is_at_risk_fraction(self):
        data = simulate_cox(standard_dgp(), 300, seed=1)
        for t in (0.2, 0.5, 0.9):
            assert s_n_k(t, 0.0, data, 0) == pytest.approx(np.mean(data.t >= t))

    def test_full_risk_set_at_zero(self):
        data = simulate_cox(standard_dgp(), 300, seed=1)
        for k in (0, 1, 2):
            expected = np.mean(data.w**k * np.exp(0.7 * data.w))
            assert s_n_k(0.0, 0.7, data, k) == pytest.approx(expected)

    def test_hand_enumeration(self):
        data = CoxData(
            t=np.array([0.1, 0.3, 0.5, 0.7, 0.9]),
            delta=np.array([1, 0, 1, 1, 0]),
            w=np.array([0.4, -1.0, 2.0, 0.0, 1.5]),
        )
        theta, t = 0.5, 0.4  # between the events at 0.3 and 0.5
        expected = np.mean(
            (data.t >= t) * data.w * np.exp(theta * data.w)
        )
        assert s_n_k(t, theta, data, 1) == pytest.approx(expected)
        by_hand = (2.0 * math.exp(1.0) + 0.0 + 1.5 * math.exp(0.75)) / 5
        assert s_n_k(t, theta, data, 1) == pytest.approx(by_hand)

    def test_cauchy_schwarz_along_curves(self):
        data = simulate_cox(standard_dgp(), 400, seed=12)
        for theta in (-1.0, 0.0, 0.7, 2.0):
            rsc = risk_set_curves(data, theta)
            assert np.all(rsc.s0 > 0)
            assert np.all(rsc.s2 * rsc.s0 >= rsc.s1**2 - 1e-12)


class TestFit:
    def test_against_statsmodels_oracle(self):
        data = simulate_cox(standard_dgp(), 800, seed=5)
        fit = fit_cox_partial(data)
        res = PHReg(data.t, data.w[:, None], status=data.delta, ties="breslow").fit()
        assert abs(fit.theta_hat - res.params[0]) < 1e-9
        assert abs(fit.se - res.bse[0]) < 1e-9

    def test_grid_search_oracle(self):
        data = simulate_cox(standard_dgp(), 300, seed=7)
        fit = fit_cox_partial(data)
        grid = fit.theta_hat + np.arange(-1500, 1501) * 1e-6
        vals = cox_partial_loglik(data, grid)
        assert abs(grid[np.argmax(vals)] - fit.theta_hat) <= 2e-6

    def test_two_subject_separation(self):
        data = CoxData(t=np.array([0.4, 0.8]), delta=np.array([1, 1]),
                       w=np.array([1.0, 0.0]))
        with pytest.raises(SeparationError):
            fit_cox_partial(data)

    def test_constant_covariate(self):
        data = CoxData(t=np.array([0.2, 0.5, 0.9]), delta=np.array([1, 1, 0]),
                       w=np.array([1.0, 1.0, 1.0]))
        with pytest.raises(NoInformationError):
            fit_cox_partial(data)

    def test_no_events(self):
        data = CoxData(t=np.array([0.2, 0.5]), delta=np.array([0, 0]),
                       w=np.array([1.0, 0.0]))
        with pytest.raises(NoInformationError):
            fit_cox_partial(data)

    def test_iteration_budget_raises_with_trace(self):
        data = simulate_cox(standard_dgp(theta0=2.0), 400, seed=3)
        with pytest.raises(IterationError) as exc:
            fit_cox_partial(data, max_iter=1)
        assert len(exc.value.trace) >= 1

    def test_concavity_of_partial_loglik(self):
        data = simulate_cox(standard_dgp(), 250, seed=8)
        grid = np.linspace(-2.0, 2.5, 61)
        vals = cox_partial_loglik(data, grid)
        assert np.all(np.diff(vals, 2) <= 1e-12)


class TestSieveScores:
    def spec_and_gamma(self, k=8):
        spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
        gamma0 = coefficients_for_target(
            spec, lambda t: 1.0 + np.asarray(t, dtype=float), "cox-left-endpoint"
        )
        return spec, gamma0

    def test_cell_local_cancellation(self):
        # scaled nuisance score on the death cell: gamma_j * vdot_j
        spec, gamma0 = self.spec_and_gamma()
        s = CoxSample(t=0.3, delta=1, w=0.7)
        _, vdot = sieve_scores_cox(s, spec, gamma0, theta0=0.5)
        j = int(0.3 * spec.k)
        left = j / spec.k
        expected = 1.0 - math.exp(0.5 * 0.7) * (0.3 - left) * spec.k * gamma0[j]
        assert gamma0[j] * vdot[j] == pytest.approx(expected, abs=1e-14)

    def test_censored_before_first_cell_boundary(self):
        spec, gamma0 = self.spec_and_gamma()
        s = CoxSample(t=0.05, delta=0, w=1.0)
        _, vdot = sieve_scores_cox(s, spec, gamma0, theta0=0.2)
        assert vdot[0] != 0.0
        np.testing.assert_array_equal(vdot[1:], 0.0)

    def test_theta_score_closed_form(self):
        spec, gamma0 = self.spec_and_gamma()
        s = CoxSample(t=0.55, delta=1, w=-0.4)
        ldot, _ = sieve_scores_cox(s, spec, gamma0, theta0=0.3)
        lam = baseline_cum_hazard(
            type("E", (), {"eta0": staticmethod(step_function(spec, gamma0))}),
            spec, np.array([0.55]),
        )[0]
        assert ldot == pytest.approx(-0.4 * (1 - math.exp(0.3 * -0.4) * lam))

    def test_scores_mean_zero_under_sieve_law(self):
        spec, gamma0 = self.spec_and_gamma()
        dgp_m = standard_dgp(eta0=step_function(spec, gamma0))
        data = simulate_cox(dgp_m, 400_000, seed=13)
        ldot, vdot = sieve_scores_cox(data, spec, gamma0, dgp_m.theta0)
        assert abs(ldot.mean()) <= 4 * ldot.std() / math.sqrt(data.n)
        tol = 4 * vdot.std(axis=0) / math.sqrt(data.n)
        assert np.all(np.abs(vdot.mean(axis=0)) <= tol)

    def test_invalid_hazard(self):
        spec, gamma0 = self.spec_and_gamma()
        bad = np.array(gamma0)
        bad[3] = -0.1
        with pytest.raises(InvalidHazardError):
            sieve_scores_cox(CoxSample(0.5, 1, 0.0), spec, bad, 0.0)


class TestSieveEfficientScore:
    def spec_and_gamma(self, k=8):
        spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
        gamma0 = coefficients_for_target(
            spec, lambda t: 1.0 + np.asarray(t, dtype=float), "cox-left-endpoint"
        )
        return spec, gamma0

    def test_degenerate_covariate_gives_zero(self):
        spec, gamma0 = self.spec_and_gamma()
        ratios = np.full(spec.k, 2.5)
        s = CoxSample(t=0.7, delta=1, w=2.5)
        assert sieve_efficient_score_cox(s, spec, gamma0, 0.4, ratios) == pytest.approx(0.0)

    def test_jump_contribution(self):
        spec, gamma0 = self.spec_and_gamma()
        ratios = np.linspace(0.2, 0.6, spec.k)
        w = 1.7
        t = 0.81
        j = int(t * spec.k)
        with_event = sieve_efficient_score_cox(
            CoxSample(t, 1, w), spec, gamma0, 0.4, ratios
        )
        without = sieve_efficient_score_cox(
            CoxSample(t, 0, w), spec, gamma0, 0.4, ratios
        )
        assert with_event - without == pytest.approx(w - ratios[j])

    def test_variance_matches_cell_information(self):
        spec, gamma0 = self.spec_and_gamma()
        dgp_m = standard_dgp(eta0=step_function(spec, gamma0))
        ratios = interval_ratios_population(dgp_m, spec, gamma0)
        data = simulate_cox(dgp_m, 400_000, seed=19)
        scores = sieve_efficient_score_cox(data, spec, gamma0, dgp_m.theta0, ratios)
        j_m = efficient_info_cox_sieve(dgp_m, spec, gamma0)
        assert abs(scores.mean()) <= 4 * scores.std() / math.sqrt(data.n)
        mc_sd = np.std(scores**2) / math.sqrt(data.n)
        assert abs(np.var(scores) - j_m) <= 4 * mc_sd

    def test_empty_risk_cell(self):
        spec, gamma0 = self.spec_and_gamma()
        ratios = np.full(spec.k, np.nan)
        with pytest.raises(EmptyRiskError):
            sieve_efficient_score_cox(CoxSample(0.9, 1, 1.0), spec, gamma0, 0.0, ratios)

    def test_sample_ratios_approach_population(self):
        spec, gamma0 = self.spec_and_gamma()
        dgp_m = standard_dgp(eta0=step_function(spec, gamma0))
        pop = interval_ratios_population(dgp_m, spec, gamma0)
        data = simulate_cox(dgp_m, 200_000, seed=23)
        emp = interval_ratios_sample(data, spec, dgp_m.theta0)
        np.testing.assert_allclose(emp, pop, atol=0.02)


class TestEfficientInfo:
    def test_degenerate_covariate(self):
        dgp = standard_dgp(w_law=FiniteLaw((1.0,), (1.0,)))
        with pytest.raises(DegenerateInformationError):
            efficient_info_cox(dgp)

    def test_symmetric_two_point_against_quad_oracle(self):
        dgp = standard_dgp(theta0=0.0, w_law=FiniteLaw((-1.0, 1.0), (0.5, 0.5)),
                           censor_law=NoCensor())

        def s_k(t, k):
            return 0.5 * sum(w**k * math.exp(-t) for w in (-1.0, 1.0))

        def integrand(t):
            s0, s1, s2 = s_k(t, 0), s_k(t, 1), s_k(t, 2)
            return (s2 / s0 - (s1 / s0) ** 2) * s0

        oracle, _ = quad(integrand, 0, 1, limit=200)
        info = efficient_info_cox(dgp)
        assert abs(info.J - oracle) < 1e-8
        # v(t) = 1 - (s1/s0)^2 with s1 = 0 here, so v = 1
        np.testing.assert_allclose(info.v, 1.0, atol=1e-12)

    def test_standard_dgp_against_quad_oracle(self):
        dgp = standard_dgp()

        def s_k(t, k):
            sc = max(0.0, 1 - t / 2)
            return sc * 0.5 * sum(
                w**k * math.exp(math.log(2) * w) * math.exp(-math.exp(math.log(2) * w) * t)
                for w in (0.0, 1.0)
            )

        def integrand(t):
            s0, s1, s2 = s_k(t, 0), s_k(t, 1), s_k(t, 2)
            return (s2 / s0 - (s1 / s0) ** 2) * s0

        oracle, _ = quad(integrand, 0, 1, limit=200)
        assert abs(efficient_info_cox(dgp).J - oracle) < 1e-8

    def test_heavier_censoring_decreases_information(self):
        js = []
        for rate in (0.25, 1.0, 4.0):
            dgp = standard_dgp(censor_law=ExponentialCensor(rate))
            js.append(efficient_info_cox(dgp).J)
        assert js[0] > js[1] > js[2]

    def test_gaussian_covariate_population_consistency(self):
        dgp = standard_dgp(theta0=0.3, w_law=GaussianLaw(0.0, 0.5))
        info = efficient_info_cox(dgp)
        data = simulate_cox(dgp, 300_000, seed=29)
        scores = efficient_score_cox_limit(data, dgp, info.curves)
        assert abs(scores.mean()) <= 4 * scores.std() / math.sqrt(data.n)
        mc_sd = np.std(scores**2) / math.sqrt(data.n)
        assert abs(np.var(scores) - info.J) <= 4 * mc_sd


class TestLoglr:
    def spec_and_gamma(self, k=8, eta=None):
        spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
        eta = eta or (lambda t: 1.0 + np.asarray(t, dtype=float))
        return spec, coefficients_for_target(spec, eta, "cox-left-endpoint")

    def test_identical_laws_give_zero(self):
        spec, gamma0 = self.spec_and_gamma()
        data = simulate_cox(standard_dgp(), 500, seed=31)
        parts = loglr_cox(data, spec, gamma0, step_function(spec, gamma0), math.log(2))
        assert parts.total == 0.0
        assert parts.linear_term == 0.0
        assert parts.quadratic_term == 0.0
        assert parts.remainder == 0.0

    def test_decomposition_identity(self):
        spec, gamma0 = self.spec_and_gamma(k=16)
        dgp = standard_dgp(eta0=lambda t: 1.0 + np.asarray(t, dtype=float))
        data = simulate_cox(dgp, 2_000, seed=37)
        parts = loglr_cox(data, spec, gamma0, dgp.eta0, dgp.theta0)
        lhs = parts.total
        rhs = parts.linear_term - parts.quadratic_term + parts.remainder
        assert abs(lhs - rhs) < 1e-10

    def test_remainder_bound(self):
        eta = lambda t: 1.0 + np.asarray(t, dtype=float)
        spec, gamma0 = self.spec_and_gamma(k=32, eta=eta)
        dgp = standard_dgp(eta0=eta)
        eps = (1.0 / 32) / 1.0  # sup|step - eta| / inf eta
        bound_const = 0.5 * (1 + 1 / (1 - eps))
        for seed in range(5):
            data = simulate_cox(dgp, 2_000, seed=seed)
            parts = loglr_cox(data, spec, gamma0, eta, dgp.theta0)
            assert abs(parts.remainder) <= bound_const * parts.quadratic_term + 1e-15

    def test_single_observation_hand_computation(self):
        spec = BasisSpec("piecewise-constant", 2, scaling="cox-scale")
        gamma0 = np.array([0.9, 0.6])  # cell hazards 1.8 and 1.2
        eta = lambda t: 2.0 - np.asarray(t, dtype=float)
        theta0, w, t = 0.3, 0.5, 0.8
        data = CoxData(t=np.array([t]), delta=np.array([1]), w=np.array([w]))
        parts = loglr_cox(data, spec, gamma0, eta, theta0)
        lam_m = 1.8 * 0.5 + 1.2 * 0.3
        lam_0 = 2 * t - t**2 / 2
        by_hand = math.log(1.2 / eta(t)) - math.exp(theta0 * w) * (lam_m - lam_0)
        assert abs(parts.total - by_hand) < 1e-12

    def test_invalid_hazard_rejected(self):
        spec, gamma0 = self.spec_and_gamma()
        data = simulate_cox(standard_dgp(), 50, seed=2)
        with pytest.raises(InvalidHazardError):
            loglr_cox(data, spec, gamma0, lambda t: np.asarray(t, dtype=float) - 0.5,
                      math.log(2))

    def test_hazard_negative_between_data_points_rejected(self):
        spec, gamma0 = self.spec_and_gamma()
        # positive at every observed time but dipping negative inside [0, 1]
        data = CoxData(t=np.array([0.1, 0.9]), delta=np.array([1, 1]),
                       w=np.array([0.0, 1.0]))
        dip = lambda t: 1.0 - 40.0 * np.maximum(
            0.0, 0.1 - np.abs(np.asarray(t, dtype=float) - 0.5)
        )
        assert np.all(dip(data.t) > 0)
        with pytest.raises(InvalidHazardError):
            loglr_cox(data, spec, gamma0, dip, math.log(2))


class TestPartialExpansion:
    def test_a_n_cox_zero_at_zero(self):
        data = simulate_cox(standard_dgp(), 200, seed=41)
        vals = a_n_cox(data, math.log(2), [0.0])
        assert vals[0] == 0.0

    def test_a_n_cox_concave_on_grid(self):
        data = simulate_cox(standard_dgp(), 400, seed=43)
        grid = np.linspace(-3, 3, 25)
        vals = a_n_cox(data, math.log(2), grid)
        assert np.all(np.diff(vals, 2) <= 1e-10)


class TestCsv:
    def test_round_trip(self, tmp_path):
        data = simulate_cox(standard_dgp(), 30, seed=3)
        path = tmp_path / "c.csv"
        data.to_csv(path)
        back = CoxData.from_csv(path)
        np.testing.assert_array_equal(back.t, data.t)
        np.testing.assert_array_equal(back.delta, data.delta)
        np.testing.assert_array_equal(back.w, data.w)

    def test_header_validation(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z\n0.5,1,0\n")
        with pytest.raises(ValueError):
            CoxData.from_csv(path)
