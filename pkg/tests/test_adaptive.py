import json
import math

import mpmath
import numpy as np
import pytest

from prsdc.adaptive import (
    SplitTestResult,
    TestConfig,
    TestReport,
    cauchy_combine,
    cauchy_pvalue,
    cauchy_statistic,
    cauchy_transform,
    combine_splits,
    t1_from_parts,
    t1_test,
    t_gamma_test,
    tc_test,
    tdc_test,
)
from prsdc.errors import InputError
from prsdc.glm import (
    BINOMIAL,
    GAUSSIAN,
    ScoreVector,
    SigmaS,
    estimate_score_covariance,
    fit_null_glm,
    score_vector,
    standardize,
)
from prsdc.quadform import davies_pvalue
from prsdc.simulate import SimDesign, simulate_dataset
from prsdc.splitting import ScreenSet, make_split_plan, repeated_splits, screen_and_weight


class TestCauchy:
    def test_single_half(self):
        assert cauchy_combine([0.5]) == pytest.approx(0.5, abs=1e-15)

    def test_fixed_point(self):
        for p in (1e-10, 0.003, 0.2, 0.7, 0.999):
            assert cauchy_combine([p] * 7) == pytest.approx(p, rel=1e-9)

    def test_two_values(self):
        mpmath.mp.dps = 40
        t = mpmath.tan(0.49 * mpmath.pi) / 2
        ref = float(mpmath.mpf("0.5") - mpmath.atan(t) / mpmath.pi)
        assert cauchy_statistic([0.01, 0.5]) == pytest.approx(15.9103, abs=1e-4)
        assert cauchy_combine([0.01, 0.5]) == pytest.approx(ref, rel=1e-12)
        assert round(cauchy_combine([0.01, 0.5]), 4) == 0.0200

    def test_min_p_dominance(self):
        p = cauchy_combine([1e-12, 0.5, 0.5, 0.5, 0.5])
        assert p == pytest.approx(5e-12, rel=1e-3)

    def test_one_is_finite(self):
        t = cauchy_transform([1.0])[0]
        assert np.isfinite(t) and t < -1e15
        assert 0 < cauchy_combine([1.0, 1.0]) <= 1.0

    def test_tiny_p_branch_continuous(self):
        a = cauchy_transform([1e-8 * (1 - 1e-12)])[0]
        b = cauchy_transform([1e-8 * (1 + 1e-12)])[0]
        assert a == pytest.approx(b, rel=1e-7)

    def test_large_t(self):
        assert cauchy_pvalue(1e300) >= 1e-300
        assert cauchy_pvalue(1e10) == pytest.approx(1 / (1e10 * math.pi), rel=1e-12)

    def test_monotone(self):
        base = [0.2, 0.4, 0.6]
        ref = cauchy_combine(base)
        for i in range(3):
            lower = list(base)
            lower[i] *= 0.9
            assert cauchy_combine(lower) < ref

    @pytest.mark.parametrize("bad", [[], [0.0], [1.2], [float("nan")]])
    def test_rejects(self, bad):
        with pytest.raises(InputError):
            cauchy_combine(bad)


def _split_data(n=120, J=12, seed=0, family=BINOMIAL):
    rng = np.random.default_rng(seed)
    g = standardize(rng.normal(size=(n, J))).values
    eta = 0.4 + 0.3 * g[:, 0]
    if family.is_binomial:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = eta + rng.normal(size=n)
    return y, g


class TestT1:
    def test_score_identity(self):
        y, g = _split_data(family=GAUSSIAN)
        w = np.random.default_rng(1).normal(size=g.shape[1])
        fit = fit_null_glm(y, None, GAUSSIAN)
        sig = estimate_score_covariance(fit, g)
        t1, _, _ = t1_from_parts(fit, g, w, sig)
        s = score_vector(fit, g).s
        assert t1 == pytest.approx(fit.n * float(w @ s), rel=1e-10)

    def test_orthogonal_residuals(self):
        n = 40
        g = np.ones((n, 1))
        g[::2] = -1.0
        y = np.where(np.arange(n) % 4 < 2, 1.0, 3.0)
        # residuals (+-1 pattern of period 4) are orthogonal to the alternating column
        screen = ScreenSet(np.array([0]), np.array([0.7]), np.array([1.0]), "marginal-z")
        t1, p1 = t1_test(y, None, g, screen, GAUSSIAN)
        assert t1 == 0.0 and p1 == 1.0

    def test_equal_weights_burden(self):
        y, g = _split_data(family=GAUSSIAN)
        fit = fit_null_glm(y, None, GAUSSIAN)
        sig = estimate_score_covariance(fit, g)
        t_a, p_a, _ = t1_from_parts(fit, g, np.full(g.shape[1], 2.0), sig)
        burden = fit.n * score_vector(fit, g).s.sum()
        assert t_a == pytest.approx(2.0 * burden, rel=1e-10)
        assert t1_from_parts(fit, g, np.ones(g.shape[1]), sig)[1] == pytest.approx(p_a)

    def test_zero_weights(self):
        y, g = _split_data()
        fit = fit_null_glm(y, None, BINOMIAL)
        t1, p1, flag = t1_from_parts(fit, g, np.zeros(g.shape[1]), estimate_score_covariance(fit, g))
        assert (t1, p1, flag) == (0.0, 1.0, True)


class TestTGamma:
    def test_hand_example(self):
        sig = SigmaS(np.eye(2) * math.sqrt(0.5), 0.0, 0.5)
        score = ScoreVector(np.array([0.1, -0.2]), 100)
        T, p, _ = t_gamma_test(score, sig, np.array([1.0, 2.0]), 4)
        assert T == pytest.approx(4.25)
        # unnormalized weights (1, 4) give T = 17 and the same tail probability
        lam_unnorm = np.array([4.0, 1.0]) * 0.5
        assert 100 * (1 * 0.01 + 4 * 0.04) == pytest.approx(17.0)
        assert p == pytest.approx(davies_pvalue(lam_unnorm, 17.0).p, abs=1e-9)

    def test_gamma_two_unit_weights(self):
        y, g = _split_data()
        fit = fit_null_glm(y, None, BINOMIAL)
        score = score_vector(fit, g)
        sig = estimate_score_covariance(fit, g)
        T, _, _ = t_gamma_test(score, sig, np.random.default_rng(2).normal(size=12), 2)
        assert T == pytest.approx(fit.n * np.sum(score.s ** 2), rel=1e-12)

    def test_zero_score(self):
        sig = SigmaS(np.eye(3), 0.0, 1.0)
        assert t_gamma_test(ScoreVector(np.zeros(3), 50), sig, np.ones(3), 4)[:2] == (0.0, 1.0)

    def test_weight_scale_invariance(self):
        y, g = _split_data(seed=3)
        fit = fit_null_glm(y, None, BINOMIAL)
        score = score_vector(fit, g)
        sig = estimate_score_covariance(fit, g)
        w = np.random.default_rng(4).normal(size=12)
        for gamma in (4, 6, 42):
            base = t_gamma_test(score, sig, w, gamma)[1]
            for c in (-1.0, 1e-3, 250.0):
                assert t_gamma_test(score, sig, c * w, gamma)[1] == pytest.approx(base, abs=1e-9)

    def test_spu2_proportional(self):
        # without splitting and gamma = 2 the statistic is n times the SPU(2) sum of squares
        y, g = _split_data(seed=5)
        fit = fit_null_glm(y, None, BINOMIAL)
        u = g.T @ fit.residuals
        score = score_vector(fit, g)
        sig = estimate_score_covariance(fit, g)
        T = t_gamma_test(score, sig, np.ones(12), 2)[0]
        assert T == pytest.approx(np.sum(u ** 2) / fit.n, rel=1e-12)


class TestTc:
    def test_five_components(self):
        y, g = _split_data(n=200, seed=6)
        plan = make_split_plan(200, 0.5, y, seed=1)
        tr, te = plan.train_indices, plan.test_indices
        screen = screen_and_weight(y[tr], None, g[tr], BINOMIAL, 12)
        res = tc_test(y[te], None, g[te], screen, BINOMIAL)
        assert len(res.component_pvalues) == 5
        assert res.p_c == pytest.approx(cauchy_combine(res.component_pvalues), rel=1e-12)
        assert all(0 < p <= 1 for p in res.component_pvalues)

    def test_roundtrip(self):
        y, g = _split_data(n=200, seed=7)
        report = tdc_test(y, None, g, TestConfig(m=3, master_seed=1))
        text = json.dumps(report.to_dict())
        back = TestReport.from_dict(json.loads(text))
        assert back.to_dict() == report.to_dict()


class TestTdc:
    def test_single_split_equals_tc(self):
        y, g = _split_data(n=200, seed=8)
        rep = tdc_test(y, None, g, TestConfig(m=1, master_seed=3))
        assert rep.p_dc == pytest.approx(rep.per_split[0].p_c, rel=1e-12)

    def test_deterministic(self):
        y, g = _split_data(n=160, seed=9)
        cfg = TestConfig(m=4, master_seed=11)
        a = json.dumps(tdc_test(y, None, g, cfg).to_dict(), sort_keys=True)
        b = json.dumps(tdc_test(y, None, g, cfg).to_dict(), sort_keys=True)
        assert a == b

    def test_order_invariance(self):
        y, g = _split_data(n=160, seed=10)
        cfg = TestConfig(m=6, master_seed=2)
        rep = tdc_test(y, None, g, cfg)
        shuffled = combine_splits(rep.per_split[::-1], cfg)
        assert shuffled.p_dc == pytest.approx(rep.p_dc, rel=1e-12)
        assert shuffled.t_dc == pytest.approx(rep.t_dc, rel=1e-10)

    def test_t_dc_is_mean_transform(self):
        y, g = _split_data(n=160, seed=11)
        rep = tdc_test(y, None, g, TestConfig(m=5))
        t = np.mean(cauchy_transform([s.p_c for s in rep.per_split]))
        assert rep.t_dc == pytest.approx(t, rel=1e-10)

    def test_failed_split_flagged(self):
        # one outcome class of 10, J2 = all; some training halves separate
        rng = np.random.default_rng(12)
        g = rng.normal(size=(40, 3))
        y = np.zeros(40)
        y[np.argsort(g[:, 0])[-4:]] = 1.0
        g[:, 0] *= 100
        rep = tdc_test(y, None, g, TestConfig(m=3))
        assert 0 < rep.p_dc <= 1
        for s in rep.per_split:
            if s.flags and s.flags[0].startswith("failed"):
                assert s.p_c == 1.0

    def test_covariates_and_modes(self):
        y, g = _split_data(n=200, seed=13, family=GAUSSIAN)
        X = np.column_stack([np.ones(200), np.random.default_rng(0).normal(size=200)])
        for nuisance in ("refit", "train"):
            rep = tdc_test(y, X, g, TestConfig(family="gaussian", m=2, nuisance=nuisance))
            assert 0 < rep.p_dc <= 1

    def test_signal_detected(self):
        d = SimDesign(n_total=400, J=20, rho=0.3, sparsity=2, effect_size=0.8, seed=1)
        data = simulate_dataset(d, 0)
        assert tdc_test(data.y, None, data.G, TestConfig(m=5)).p_dc < 1e-4

    def test_input_checks(self):
        with pytest.raises(InputError):
            tdc_test(np.zeros(10), None, np.ones((10, 2)))
        y, g = _split_data()
        with pytest.raises(InputError):
            tdc_test(y[:-1], None, g)
        with pytest.raises(InputError):
            TestConfig(gammas=(3,))
        with pytest.raises(InputError):
            TestConfig(J2="some")
        with pytest.raises(InputError):
            TestConfig(family="poisson")

    def test_J2_rules(self):
        assert TestConfig().resolve_J2(4000, 750) == 750
        assert TestConfig(J2="all").resolve_J2(4000, 750) == 4000
        assert TestConfig(J2=1500).resolve_J2(4000, 750) == 1500
