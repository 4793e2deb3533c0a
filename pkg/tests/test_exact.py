import numpy as np
import pytest

from gocart.data import Dataset, EmptyDataset
from gocart.dpt import TooLarge
from gocart.exact import ExactConfig, PenalizedFitter, fit_heldout, fit_penalized
from gocart.greedy import GreedyConfig, grow
from gocart.risk import heldout_risk

CFG = ExactConfig(min_leaf=5, num_lambdas=6)


def regimes(rng, n, d=1, p=2, shift=4.0):
    x = rng.random((n, d))
    y = rng.standard_normal((n, p)) + np.where(x[:, :1] < 0.5, -shift, shift)
    return Dataset(x, y)


def test_candidate_counts(rng):
    data = regimes(rng, 100)
    _, rep = fit_heldout(data, regimes(rng, 100), 1, 1, CFG)
    assert rep.n_candidates == 2
    data2 = regimes(rng, 100, d=2)
    _, rep2 = fit_heldout(data2, regimes(rng, 100, d=2), 2, 1, CFG)
    assert rep2.n_candidates == 9
    _, rep3 = fit_penalized(data, 1, 2, 1.0, CFG)
    assert rep3.n_candidates == 5


def test_zero_budget_returns_root(rng):
    ft, rep = fit_heldout(regimes(rng, 50), regimes(rng, 50), 1, 0, CFG)
    assert rep.n_candidates == 1 and ft.tree.n_leaves == 1


def test_heldout_search_finds_regimes(rng):
    ft, rep = fit_heldout(regimes(rng, 200), regimes(rng, 200), 1, 2, CFG)
    assert ft.tree.n_leaves >= 2
    assert ft.tree.root.split_dim == 0
    best = rep.rows[rep.best_index]
    assert best.risk == min(r.risk for r in rep.rows)


def test_huge_penalty_gives_root(rng):
    ft, _ = fit_penalized(regimes(rng, 200, d=2), 2, 1, 1e6, CFG)
    assert ft.tree.n_leaves == 1


def test_no_penalty_prefers_split_on_separated_regimes(rng):
    ft, rep = fit_penalized(regimes(rng, 200), 1, 1, 0.0, CFG)
    root_obj = rep.rows[0].objective
    assert ft.tree.n_leaves == 2
    assert rep.rows[rep.best_index].objective < root_obj


def test_penalty_column(rng):
    from gocart.risk import pen
    data = regimes(rng, 120, d=2)
    _, rep = fit_penalized(data, 2, 1, 0.7, CFG)
    for r in rep.rows:
        if r.feasible:
            assert r.penalty == pen(r.n_leaves, 2, 120, 2, 0.7)
            assert r.objective == r.risk + r.penalty
    assert rep.to_csv().splitlines()[0] == "tree_index,n_leaves,feasible,risk,penalty,objective"


def test_exhaustive_dominates_greedy(rng):
    g = GreedyConfig(K=2, min_leaf=5, num_lambdas=6)
    for _ in range(3):
        train, held = regimes(rng, 150, d=2, shift=1.0), regimes(rng, 150, d=2, shift=1.0)
        ex, _ = fit_heldout(train, held, 2, 2, ExactConfig.from_greedy(g))
        gr = grow(train, held, g)
        assert heldout_risk(ex, held) <= heldout_risk(gr, held)


def test_min_leaf_marks_trees_infeasible(rng):
    data = regimes(rng, 40)
    _, rep = fit_heldout(data, regimes(rng, 40), 1, 2, ExactConfig(min_leaf=15, num_lambdas=4))
    assert rep.n_feasible < rep.n_candidates
    assert rep.rows[0].feasible


def test_penalized_fitter_respects_l1_bound(rng):
    y = rng.multivariate_normal(np.zeros(3), [[1, .8, .5], [.8, 1, .6], [.5, .6, 1]], size=300)
    loose = PenalizedFitter(l1_bound=None)(y)
    tight = PenalizedFitter(l1_bound=3.5)(y)
    assert np.abs(tight.prec.omega).sum() <= 3.5
    assert tight.prec.lam >= loose.prec.lam


def test_errors(rng):
    with pytest.raises(TooLarge):
        fit_heldout(regimes(rng, 50, d=3), regimes(rng, 50, d=3), 3, 3, ExactConfig(cap=1000))
    with pytest.raises(EmptyDataset):
        fit_penalized(Dataset(np.empty((0, 1)), np.empty((0, 2))), 1, 1, 1.0, CFG)
    with pytest.raises(ValueError):
        fit_heldout(regimes(rng, 50), regimes(rng, 50), 2, 1, CFG)
