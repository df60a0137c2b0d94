import numpy as np
import pytest

from prsdc.errors import InputError, NumericalError
from prsdc.glm import BINOMIAL, GAUSSIAN, GenotypeMatrix
from prsdc.splitting import (
    make_split_plan,
    repeated_splits,
    screen_and_weight,
    split_seed,
)


def test_even_partition():
    plan = make_split_plan(10, 0.5, seed=1)
    assert plan.train_indices.size == 5 and plan.test_indices.size == 5
    assert set(plan.train_indices).isdisjoint(plan.test_indices)
    assert sorted(np.concatenate([plan.train_indices, plan.test_indices])) == list(range(10))


def test_uneven_sizes():
    plan = make_split_plan(1409, 409 / 1409, seed=0)
    assert plan.train_indices.size == 409 and plan.test_indices.size == 1000


def test_deterministic():
    a = make_split_plan(50, 0.33, seed=7)
    b = make_split_plan(50, 0.33, seed=7)
    np.testing.assert_array_equal(a.train_indices, b.train_indices)


def test_stratified_keeps_both_classes():
    y = np.array([1] * 30 + [0] * 10)
    for s in range(20):
        plan = make_split_plan(40, 0.5, y, seed=s)
        assert plan.train_indices.size == 20
        assert y[plan.train_indices].sum() == 15
        assert plan.stratified


def test_stratified_total_size_odd():
    y = np.array([1] * 7 + [0] * 6)
    plan = make_split_plan(13, 0.5, y, seed=0)
    assert plan.train_indices.size == 7


def test_split_validation():
    with pytest.raises(InputError):
        make_split_plan(10, 1.0)
    with pytest.raises(InputError):
        make_split_plan(10, 0.5, np.array([1] + [0] * 9))


def test_repeated_splits():
    plans = repeated_splits(100, 0.5, 10, master_seed=3)
    assert len({tuple(p.train_indices) for p in plans}) == 10
    one = repeated_splits(100, 0.5, 1, master_seed=3)[0]
    ref = make_split_plan(100, 0.5, seed=split_seed(3, 0))
    np.testing.assert_array_equal(one.train_indices, ref.train_indices)
    assert one.seed == ref.seed


def test_master_seeds_differ():
    seqs = {tuple(tuple(p.train_indices) for p in repeated_splits(40, 0.5, 2, master_seed=s))
            for s in range(100)}
    assert len(seqs) == 100


def _planted(n=200, J=5, seed=0):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, J))
    y = 1.5 * g[:, 3] + 0.2 * rng.normal(size=n)
    return y, g


def test_strong_signal_selected():
    y, g = _planted()
    s = screen_and_weight(y, None, g, GAUSSIAN, 1)
    assert s.selected.tolist() == [3]
    assert s.screen_stats[0] > 10
    order = np.argsort(-s.screen_stats)
    assert s.method == "marginal-z" and s.J2 == 1 and order[0] == 0


def test_all_variants_identity():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(200, 5))
    yb = (rng.random(200) < 0.6).astype(float)
    for method, kw in (("marginal-z", {}), ("external-ranking", {"ranking": [4, 2, 0, 1, 3]})):
        s = screen_and_weight(yb, None, g, BINOMIAL, 5, method, **kw)
        assert sorted(s.selected.tolist()) == [0, 1, 2, 3, 4]


def test_ties_lower_index():
    g = np.tile(np.array([[1.0], [-1.0], [2.0], [-2.0], [0.5], [-0.5]]), (1, 3))
    y = np.array([1.0, -1.0, 2.0, -2.5, 0.2, -0.1])
    s = screen_and_weight(y, None, g, GAUSSIAN, 2)
    assert s.selected.tolist() == [0, 1]


def test_external_ranking_oracle():
    y, g = _planted(J=8)
    s = screen_and_weight(y, None, g, GAUSSIAN, 2, "external-ranking", ranking=[5, 3, 1])
    assert s.selected.tolist() == [5, 3]
    assert s.weights[1] == pytest.approx(np.cov(y, g[:, 3])[0, 1] / np.var(g[:, 3], ddof=1))


def test_constant_columns_excluded():
    y, g = _planted()
    g[:, 0] = 1.0
    G = GenotypeMatrix(g, None, constant=np.array([True, False, False, False, False]))
    s = screen_and_weight(y, None, G, GAUSSIAN, 5)
    assert 0 not in s.selected


def test_all_fits_fail():
    x = np.linspace(-1, 1, 20)
    y = (x > 0).astype(float)
    with pytest.raises(NumericalError):
        screen_and_weight(y, None, np.column_stack([x, 2 * x]), BINOMIAL, 1)


def test_bad_method():
    with pytest.raises(InputError):
        screen_and_weight(np.zeros(5), None, np.ones((5, 2)), GAUSSIAN, 1, "lasso")
