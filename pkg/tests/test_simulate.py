import math

import numpy as np
import pytest

from prsdc.errors import InputError
from prsdc.simulate import (
    SimDesign,
    estimate_snr,
    gen_ar1_genotypes,
    gen_phenotype,
    place_signals,
    signal_count,
    simulate_dataset,
)


class TestGenotypes:
    def test_ar1_correlation(self):
        n = 10 ** 5
        x = gen_ar1_genotypes(n, 5, 0.5, seed=1).values
        c = np.corrcoef(x, rowvar=False)
        assert abs(c[0, 2] - 0.25) < 3 / math.sqrt(n)
        for i, j in ((0, 1), (1, 4), (2, 3)):
            assert abs(c[i, j] - 0.5 ** abs(i - j)) < 4 / math.sqrt(n)
        np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.02)

    def test_independent(self):
        n = 20000
        x = gen_ar1_genotypes(n, 4, 0.0, seed=2).values
        off = np.corrcoef(x, rowvar=False)[np.triu_indices(4, 1)]
        assert np.all(np.abs(off) < 4 / math.sqrt(n))

    def test_seeded(self):
        a = gen_ar1_genotypes(10, 3, 0.2, seed=5).values
        np.testing.assert_array_equal(a, gen_ar1_genotypes(10, 3, 0.2, seed=5).values)

    def test_rho_range(self):
        with pytest.raises(InputError):
            gen_ar1_genotypes(10, 3, 1.0)


class TestSignals:
    @pytest.mark.parametrize("prop,count", [(0.001, 4), (0.01, 40), (0.05, 200), (0.1, 400)])
    def test_counts(self, prop, count):
        beta = place_signals(4000, prop, 0.3, seed=1)
        assert np.count_nonzero(beta) == count
        assert np.sum(beta > 0) == count // 2 == np.sum(beta < 0)
        assert set(np.abs(beta[beta != 0])) == {0.3}

    def test_zero(self):
        assert not np.any(place_signals(10, 0, 1.0))

    def test_odd_count(self):
        beta = place_signals(20, 5, 1.0, seed=3)
        assert np.sum(beta > 0) == 3 and np.sum(beta < 0) == 2
        assert SimDesign(J=20, sparsity=5).sign_imbalance == 1

    def test_too_many(self):
        with pytest.raises(InputError):
            place_signals(3, 4, 1.0)
        with pytest.raises(InputError):
            signal_count(10, 2.5)


class TestPhenotype:
    def test_logistic_null_mean(self):
        n = 200000
        G = np.zeros((n, 2))
        y = gen_phenotype(G, np.zeros(2), "binomial", 1.0, seed=4)
        p = 1 / (1 + math.exp(-1))
        assert p == pytest.approx(0.73106, abs=1e-5)
        assert abs(y.mean() - p) < 4 * math.sqrt(p * (1 - p) / n)

    def test_gaussian_null(self):
        y = gen_phenotype(np.zeros((50000, 1)), [0.0], "gaussian", 0.0, seed=5)
        assert abs(y.mean()) < 4 / math.sqrt(50000)
        assert y.std() == pytest.approx(1.0, abs=0.02)

    def test_effect_sign(self):
        G = gen_ar1_genotypes(2000, 3, 0.0, seed=6)
        y = gen_phenotype(G, [2.0, 0.0, 0.0], "binomial", 0.0, seed=7)
        assert np.corrcoef(y, G.values[:, 0])[0, 1] > 0.3

    def test_dimension_check(self):
        with pytest.raises(InputError):
            gen_phenotype(np.zeros((5, 2)), [1.0], "gaussian")


def test_design_roundtrip():
    d = SimDesign(n_total=100, J=30, rho=0.2, sparsity=0.1, effect_size=0.5, seed=3)
    assert SimDesign.from_dict(d.to_dict()) == d
    assert d.signal_count == 3
    with pytest.raises(InputError):
        SimDesign(rho=-1.0)
    with pytest.raises(InputError):
        SimDesign(scenario="lasso")


def test_dataset_support_without_effect():
    d = SimDesign(n_total=50, J=20, sparsity=4, effect_size=0.0, seed=1)
    data = simulate_dataset(d, 3)
    assert data.support.size == 4 and not np.any(data.beta)
    d2 = SimDesign(n_total=50, J=20, sparsity=4, effect_size=0.5, seed=1)
    data2 = simulate_dataset(d2, 3)
    np.testing.assert_array_equal(data.support, data2.support)
    np.testing.assert_array_equal(data.G.values, data2.G.values)


class TestSnr:
    def test_gaussian_null_zero(self):
        d = SimDesign(n_total=200, J=10, rho=0.3, family="gaussian", intercept=0.0)
        est = estimate_snr(d, 100, mc_reps=10 ** 4, beta=np.zeros(10))
        assert est.mu_n_beta == pytest.approx(0.0, abs=1e-12)
        assert est.snr_n == pytest.approx(0.0, abs=1e-12)
        assert est.sigma_n1 > 0 and est.sigma_2n1 > 0

    def test_oracle_beats_uniform(self):
        J = 40
        d = SimDesign(n_total=400, J=J, rho=0.3, family="gaussian", intercept=0.0)
        beta = place_signals(J, 8, 0.3, seed=2)
        support = np.flatnonzero(beta)
        oracle = estimate_snr(d, 200, support, None, 10 ** 4, seed=1, beta=beta)
        uniform = estimate_snr(d, 200, None, None, 10 ** 4, seed=1, beta=beta)
        assert oracle.snr_n >= uniform.snr_n

    def test_linear_in_n(self):
        J = 10
        d = SimDesign(n_total=400, J=J, rho=0.3, family="gaussian", intercept=0.0)
        beta = place_signals(J, 4, 0.2, seed=3)
        a = estimate_snr(d, 200, mc_reps=10 ** 4, seed=4, beta=beta)
        b = estimate_snr(d, 400, mc_reps=10 ** 4, seed=4, beta=beta)
        # mu = tr(R Xi) + (n - 1) Delta' R Delta, so the increment is exactly linear
        c = estimate_snr(d, 800, mc_reps=10 ** 4, seed=4, beta=beta)
        assert (c.mu_n_beta - b.mu_n_beta) == pytest.approx(2 * (b.mu_n_beta - a.mu_n_beta),
                                                            rel=1e-9)
        assert b.mu_n_beta / a.mu_n_beta == pytest.approx(2.0, rel=0.05)

    def test_deterministic_and_se_shrinks(self):
        d = SimDesign(n_total=200, J=8, rho=0.5, sparsity=2, effect_size=0.4)
        a = estimate_snr(d, 100, mc_reps=10 ** 4, seed=7)
        assert a == estimate_snr(d, 100, mc_reps=10 ** 4, seed=7)
        b = estimate_snr(d, 100, mc_reps=4 * 10 ** 4, seed=7)
        ratio = b.mc_se["mu_n_beta"] / a.mc_se["mu_n_beta"]
        assert 0.25 < ratio < 0.9

    def test_centered_logit_null(self):
        d = SimDesign(n_total=200, J=6, rho=0.3)
        raw = estimate_snr(d, 100, mc_reps=10 ** 4, beta=np.zeros(6))
        cen = estimate_snr(d, 100, mc_reps=10 ** 4, beta=np.zeros(6), centered=True)
        assert cen.mu_n_beta == 0.0 and raw.mu_n_beta > 0

    def test_min_reps(self):
        with pytest.raises(InputError):
            estimate_snr(SimDesign(), 50, mc_reps=100)
