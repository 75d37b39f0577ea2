"""Tests for the AFT and logistic trainers and their objectives."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sendwhen import ConvergenceError, DataError
from sendwhen.features import FeatureSchema
from sendwhen.optimize import OptConfig
from sendwhen.pipeline import Observation
from sendwhen.training import (
    DesignMatrix,
    LogisticModel,
    WeibullAftModel,
    aft_negloglik_and_gradient,
    fit_aft,
    fit_logistic,
    logistic_negloglik_and_gradient,
    model_from_dict,
    model_to_dict,
)


def make_obs(X, t, delta):
    return [
        Observation("u", np.asarray(X[i], dtype=float), float(t[i]), bool(delta[i]), 0.0)
        for i in range(len(t))
    ]


def sample_aft(rng, n, b_true, sigma_true, censor_at=None):
    k = len(b_true)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    eps = np.log(-np.log(1.0 - rng.uniform(size=n)))
    t = np.exp(X @ np.asarray(b_true) + sigma_true * eps)
    if censor_at is None:
        delta = np.ones(n, dtype=bool)
        t_obs = t
    else:
        delta = t <= censor_at
        t_obs = np.minimum(t, censor_at)
    return X, t_obs, delta


class TestAftObjective:
    def test_hand_value_uncensored(self):
        # T=1 (log T = 0), x=[1], b=[0], sigma=1: z=0, nll = e^0 - 0 + 0 + 0
        obs = make_obs([[1.0]], [1.0], [True])
        nll, _ = aft_negloglik_and_gradient(np.zeros(1), 0.0, obs)
        assert nll == pytest.approx(1.0, abs=1e-15)

    def test_hand_value_censored(self):
        obs = make_obs([[1.0]], [1.0], [False])
        nll, _ = aft_negloglik_and_gradient(np.zeros(1), 0.0, obs)
        assert nll == pytest.approx(1.0, abs=1e-15)

    def test_sum_over_observations(self):
        obs = make_obs([[1.0], [1.0]], [1.0, 1.0], [True, False])
        nll, _ = aft_negloglik_and_gradient(np.zeros(1), 0.0, obs)
        assert nll == pytest.approx(2.0, abs=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2001)
        n, k = 50, 4
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        t = rng.uniform(0.1, 30.0, size=n)
        delta = rng.uniform(size=n) < 0.5
        dm = DesignMatrix.from_observations(make_obs(X, t, delta))
        h = 1e-5
        for _ in range(20):
            theta = np.concatenate(
                [rng.normal(scale=0.5, size=k), [rng.normal(scale=0.5)]]
            )
            _, grad = aft_negloglik_and_gradient(theta[:k], theta[k], dm)
            for j in range(k + 1):
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                fp, _ = aft_negloglik_and_gradient(tp[:k], tp[k], dm)
                fm, _ = aft_negloglik_and_gradient(tm[:k], tm[k], dm)
                fd = (fp - fm) / (2 * h)
                assert abs(grad[j] - fd) <= 1e-6 * max(abs(fd), 1e-8)

    def test_overflow_raises_with_index(self):
        # z = (log T - b.x): 300 for the first observation (finite e^z),
        # 800 for the second (e^z overflows float64, limit ~709)
        obs = make_obs([[1.0], [1.0]], [1.0, math.exp(500)], [True, True])
        with pytest.raises(Exception, match="index 1"):
            aft_negloglik_and_gradient(np.array([-300.0]), 0.0, obs)


class TestLogisticObjective:
    def test_hand_value(self):
        # w=0: nll = n * log 2 regardless of labels
        X = np.ones((4, 1))
        y = np.array([0.0, 1.0, 1.0, 0.0])
        nll, grad = logistic_negloglik_and_gradient(np.zeros(1), X, y)
        assert nll == pytest.approx(4 * math.log(2), rel=1e-14)
        # grad = sum(sigmoid(0) - y) = 4*0.5 - 2 = 0
        assert grad[0] == pytest.approx(0.0, abs=1e-15)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2002)
        n, k = 50, 4
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        y = (rng.uniform(size=n) < 0.4).astype(float)
        h = 1e-5
        for _ in range(20):
            w = rng.normal(scale=0.5, size=k)
            _, grad = logistic_negloglik_and_gradient(w, X, y)
            for j in range(k):
                wp, wm = w.copy(), w.copy()
                wp[j] += h
                wm[j] -= h
                fd = (
                    logistic_negloglik_and_gradient(wp, X, y)[0]
                    - logistic_negloglik_and_gradient(wm, X, y)[0]
                ) / (2 * h)
                assert abs(grad[j] - fd) <= 1e-6 * max(abs(fd), 1e-8)


class TestFitAft:
    def test_exponential_closed_form(self):
        # Uncensored exponential data (sigma*=1): the closed-form MLE
        # rate n/sum(T) must match exp(-intercept) within 1%.
        rng = np.random.default_rng(2003)
        t = rng.exponential(1.0 / 0.4, size=20000)
        obs = make_obs(np.ones((len(t), 1)), t, np.ones(len(t), dtype=bool))
        m = fit_aft(obs)
        lam_closed = len(t) / t.sum()
        lam_fit = math.exp(-m.coefficients[0])
        assert abs(lam_fit - lam_closed) / lam_closed < 0.01
        assert abs(m.sigma - 1.0) < 0.05

    def test_parameter_recovery_censored(self):
        rng = np.random.default_rng(2004)
        b_true = np.array([2.0, 0.5, -0.3])
        X, t, delta = sample_aft(rng, 30000, b_true, 1.5, censor_at=20.0)
        m = fit_aft(make_obs(X, t, delta))
        assert np.max(np.abs(m.coefficients - b_true)) < 0.03
        assert abs(m.sigma - 1.5) / 1.5 < 0.02
        assert m.sigma > 1.0  # alpha in (0,1) when sigma* > 1
        assert 0.0 < m.alpha < 1.0

    def test_duplication_invariance(self):
        rng = np.random.default_rng(2005)
        X, t, delta = sample_aft(rng, 500, [1.0, 0.4], 1.2, censor_at=15.0)
        obs = make_obs(X, t, delta)
        m1 = fit_aft(obs)
        m2 = fit_aft(obs + obs)
        assert_allclose(m2.coefficients, m1.coefficients, atol=1e-6)
        assert m2.sigma == pytest.approx(m1.sigma, abs=1e-6)

    def test_rescaling_equivariance(self):
        rng = np.random.default_rng(2006)
        X, t, delta = sample_aft(rng, 3000, [1.5, 0.3, -0.2], 1.5, censor_at=12.0)
        obs = make_obs(X, t, delta)
        scaled = [
            Observation(o.user_id, o.x, o.t_hours * 24.0, o.uncensored, 0.0)
            for o in obs
        ]
        m1, m2 = fit_aft(obs), fit_aft(scaled)
        assert m2.coefficients[0] - m1.coefficients[0] == pytest.approx(
            math.log(24.0), abs=1e-3
        )
        assert m2.sigma == pytest.approx(m1.sigma, abs=1e-3)
        assert_allclose(m2.coefficients[1:], m1.coefficients[1:], atol=1e-3)

    def test_nll_trace_non_increasing(self):
        rng = np.random.default_rng(2007)
        X, t, delta = sample_aft(rng, 1000, [1.0, 0.5], 1.3, censor_at=10.0)
        m = fit_aft(make_obs(X, t, delta))
        trace = m.diagnostics["nll_trace"]
        assert len(trace) >= 2
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-10 * max(1.0, abs(a))

    def test_standardization_folds_back_to_raw_space(self):
        # Features on wildly different scales: reported coefficients must
        # apply to the raw features directly.
        rng = np.random.default_rng(2008)
        n = 20000
        raw = rng.normal(size=(n, 2)) * np.array([1000.0, 0.001])
        X = np.column_stack([np.ones(n), raw])
        b_true = np.array([1.0, 0.002, 300.0])  # O(1) contributions
        eps = np.log(-np.log(1.0 - rng.uniform(size=n)))
        t = np.exp(X @ b_true + 1.2 * eps)
        m = fit_aft(make_obs(X, t, np.ones(n, dtype=bool)))
        assert abs(m.coefficients[1] - 0.002) < 0.002 * 0.05
        assert abs(m.coefficients[2] - 300.0) < 300.0 * 0.05

    def test_determinism(self):
        rng = np.random.default_rng(2009)
        X, t, delta = sample_aft(rng, 800, [1.0, 0.2], 1.4, censor_at=8.0)
        obs = make_obs(X, t, delta)
        m1, m2 = fit_aft(obs), fit_aft(obs)
        assert np.array_equal(m1.coefficients, m2.coefficients)
        assert m1.log_sigma == m2.log_sigma

    def test_gd_fallback_agrees_with_lbfgs(self):
        rng = np.random.default_rng(2010)
        X, t, delta = sample_aft(rng, 1000, [1.0, 0.4], 1.2, censor_at=10.0)
        obs = make_obs(X, t, delta)
        m1 = fit_aft(obs, OptConfig(method="lbfgs"))
        m2 = fit_aft(obs, OptConfig(method="gd", max_iters=20000))
        assert_allclose(m2.coefficients, m1.coefficients, atol=1e-5)
        assert m2.sigma == pytest.approx(m1.sigma, abs=1e-5)

    def test_all_censored_rejected(self):
        obs = make_obs(np.ones((5, 1)), np.arange(1.0, 6.0), np.zeros(5, dtype=bool))
        with pytest.raises(DataError, match="censored"):
            fit_aft(obs)

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="no observations"):
            fit_aft([])

    def test_max_iters_exhausted_raises(self):
        rng = np.random.default_rng(2011)
        X, t, delta = sample_aft(rng, 200, [1.0, 0.3], 1.2, censor_at=10.0)
        with pytest.raises(ConvergenceError, match="gradient max-norm"):
            fit_aft(make_obs(X, t, delta), OptConfig(max_iters=1))

    def test_weibull_mapping(self):
        rng = np.random.default_rng(2012)
        X, t, delta = sample_aft(rng, 500, [1.0, 0.3], 1.5, censor_at=10.0)
        m = fit_aft(make_obs(X, t, delta))
        x = np.array([1.0, 0.7])
        mu = float(x @ m.coefficients)
        assert m.rate_of(x) == pytest.approx(math.exp(-mu / m.sigma), rel=1e-12)
        wp = m.weibull_of(x)
        assert wp.shape == pytest.approx(1.0 / m.sigma, rel=1e-15)


class TestFitLogistic:
    def test_noise_labels_give_intercept_only(self):
        rng = np.random.default_rng(2013)
        n = 5000
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        y = (rng.uniform(size=n) < 0.3).astype(float)
        m = fit_logistic(X, y, horizon_t_hours=4.0)
        base = float(y.mean())
        se = 1.0 / math.sqrt(n * base * (1 - base))
        assert abs(m.weights[0] - math.log(base / (1 - base))) < 4 * se
        assert np.all(np.abs(m.weights[1:]) < 4 * se)

    def test_separated_data_bounded_by_ridge(self):
        # Perfect separation: unpenalized MLE diverges; the ridge keeps the
        # weights finite and the ordering correct.
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        y = (np.arange(10) >= 5).astype(float)
        m = fit_logistic(X, y, 4.0, OptConfig(ridge=1e-3, max_iters=2000))
        assert np.all(np.isfinite(m.weights))
        p = m.predict_proba(X)
        assert np.all(np.diff(p) > 0)

    def test_recovers_known_weights(self):
        rng = np.random.default_rng(2014)
        n = 40000
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        w_true = np.array([-0.5, 1.0, -0.7])
        p = 1.0 / (1.0 + np.exp(-(X @ w_true)))
        y = (rng.uniform(size=n) < p).astype(float)
        m = fit_logistic(X, y, 8.0)
        assert_allclose(m.weights, w_true, atol=0.06)

    def test_determinism(self):
        rng = np.random.default_rng(2015)
        X = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
        y = (rng.uniform(size=200) < 0.5).astype(float)
        m1 = fit_logistic(X, y, 4.0)
        m2 = fit_logistic(X, y, 4.0)
        assert np.array_equal(m1.weights, m2.weights)

    def test_single_class_rejected(self):
        X = np.ones((5, 1))
        with pytest.raises(DataError, match="single-class"):
            fit_logistic(X, np.zeros(5), 4.0)

    def test_bad_labels_rejected(self):
        X = np.ones((3, 1))
        with pytest.raises(DataError, match="0/1"):
            fit_logistic(X, np.array([0.0, 0.5, 1.0]), 4.0)

    def test_bad_horizon_rejected(self):
        X = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
        with pytest.raises(DataError, match="horizon"):
            fit_logistic(X, np.array([0.0, 1.0, 0.0, 1.0]), 0.0)


class TestPersistence:
    def fit_pair(self):
        rng = np.random.default_rng(2016)
        schema = FeatureSchema.build(base=["p0", "p1"], badge="badge_count")
        X, t, delta = sample_aft(rng, 400, [1.0, 0.3, -0.2, 0.1], 1.4, censor_at=10.0)
        aft = fit_aft(make_obs(X, t, delta), schema=schema)
        y = (rng.uniform(size=400) < 0.4).astype(float)
        logit = fit_logistic(X, y, 12.0, schema=schema)
        return aft, logit

    def test_aft_round_trip(self):
        aft, _ = self.fit_pair()
        doc = json.loads(json.dumps(model_to_dict(aft)))
        back = model_from_dict(doc)
        assert isinstance(back, WeibullAftModel)
        assert back.feature_names == aft.feature_names
        assert np.array_equal(back.coefficients, aft.coefficients)
        assert back.log_sigma == aft.log_sigma
        assert back.schema == aft.schema

    def test_logistic_round_trip(self):
        _, logit = self.fit_pair()
        doc = json.loads(json.dumps(model_to_dict(logit)))
        back = model_from_dict(doc)
        assert isinstance(back, LogisticModel)
        assert np.array_equal(back.weights, logit.weights)
        assert back.horizon_t_hours == logit.horizon_t_hours

    def test_version_check(self):
        aft, _ = self.fit_pair()
        doc = model_to_dict(aft)
        doc["format_version"] = 999
        with pytest.raises(DataError, match="format_version"):
            model_from_dict(doc)

    def test_unknown_type(self):
        aft, _ = self.fit_pair()
        doc = model_to_dict(aft)
        doc["model_type"] = "cox"
        with pytest.raises(DataError, match="model_type"):
            model_from_dict(doc)
