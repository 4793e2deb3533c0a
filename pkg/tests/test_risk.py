import logging
import math

import numpy as np
import pytest

from gocart.data import Dataset, EmptyDataset
from gocart.dpt import DyadicTree, Hyperrectangle, make_split
from gocart.glasso import PrecisionEstimate
from gocart.risk import (FittedTree, LeafFitter, LeafModel, TheoryConstants, cell_risks,
                         check_bounds, empirical_risk, evaluate_split, heldout_risk, pen,
                         phi_n, point_terms, root_only, split_gain, theorem1_pen)

# reference values evaluated at 40 significant digits
PEN_4_2_1000_5 = 0.6540757987960931634
PEN_1_10_10000_20_HALF = 0.02539608220384604819
PEN_22_10_10000_20 = 2.387998398376359212
C1 = 49.60135674110035427
C2 = 70.14691141537026442
THM1 = 41.95587955437728040
PHI = 62.48158752450358794


def test_pen_values():
    assert pen(4, 2, 1000, 5, 1.0) == pytest.approx(PEN_4_2_1000_5, abs=1e-12)
    assert pen(1, 10, 10_000, 20, 0.5) == pytest.approx(PEN_1_10_10000_20_HALF, abs=1e-12)
    assert pen(22, 10, 10_000, 20, 1.0) == pytest.approx(PEN_22_10_10000_20, abs=1e-12)
    assert pen(3, 2, 100, 4, 0.0) == 0.0


def test_pen_increases_with_leaves():
    vals = [pen(m, 3, 500, 6, 1.0) for m in range(1, 30)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_theory_penalties():
    tc = TheoryConstants(B=2.0, v1=3.0, v2=5.0, L_n=1.5, delta=0.1)
    assert tc.C1 == pytest.approx(C1, abs=1e-12)
    assert tc.C2 == pytest.approx(C2, abs=1e-12)
    assert theorem1_pen(4, 2, 1000, 5, tc) == pytest.approx(THM1, abs=1e-12)
    assert phi_n(4, 2, 1000, 5, tc) == pytest.approx(PHI, abs=1e-12)
    with pytest.raises(ValueError):
        TheoryConstants(1, 1, 1, 1, delta=1.5)


def _model(mu, omega, n=0):
    return LeafModel(np.asarray(mu, float), PrecisionEstimate.from_omega(np.asarray(omega, float), 0.0), n)


def test_point_terms_closed_form():
    m = _model([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
    y = np.array([[2.0, 0.0], [1.0, -1.0]])
    # (1,1) Omega (1,1)' = 2 + 1 + 1 = 4 ; log det = log 1.75
    assert point_terms(m, y) == pytest.approx([4 - math.log(1.75), -math.log(1.75)], abs=1e-14)


def test_root_risk_is_trace_formula(rng):
    y = rng.standard_normal((300, 3))
    x = rng.random((300, 2))
    mu = y.mean(axis=0)
    S = (y - mu).T @ (y - mu) / 300
    omega = np.linalg.inv(S + 0.1 * np.eye(3))
    ft = root_only(_model(mu, omega), 2)
    want = np.trace(S @ omega) - np.linalg.slogdet(omega)[1]
    assert empirical_risk(ft, Dataset(x, y)) == pytest.approx(want, abs=1e-12)


def _two_leaf_tree(rng):
    tree = DyadicTree(make_split(Hyperrectangle.unit(2), 0))
    models = [_model(rng.standard_normal(3), np.eye(3) * (j + 1)) for j in range(2)]
    return FittedTree(tree, models)


def test_risk_is_row_order_invariant(rng):
    ft = _two_leaf_tree(rng)
    data = Dataset(rng.random((500, 2)), rng.standard_normal((500, 3)) * 3)
    perm = rng.permutation(500)
    assert heldout_risk(ft, data) == heldout_risk(ft, data.subset(perm))


def test_cell_risks_sum_to_total(rng):
    ft = _two_leaf_tree(rng)
    data = Dataset(rng.random((400, 2)), rng.standard_normal((400, 3)))
    assert math.fsum(cell_risks(ft, data)) == pytest.approx(empirical_risk(ft, data), abs=1e-12)


def test_empty_dataset_rejected(rng):
    ft = _two_leaf_tree(rng)
    with pytest.raises(EmptyDataset):
        heldout_risk(ft, Dataset(np.empty((0, 2)), np.empty((0, 3))))


def test_leaf_count_mismatch():
    tree = DyadicTree(make_split(Hyperrectangle.unit(1), 0))
    with pytest.raises(ValueError):
        FittedTree(tree, [_model([0.0], [[1.0]])])


def test_split_gain_zero_when_children_reuse_parent(rng):
    parent = _model(np.zeros(2), np.eye(2))
    train = Dataset(rng.random((200, 1)), rng.standard_normal((200, 2)))
    held = Dataset(rng.random((200, 1)), rng.standard_normal((200, 2)))
    g = split_gain(Hyperrectangle.unit(1), 0, train, held, lambda yt, yh: parent,
                   K=4, min_leaf=1, parent=parent)
    assert g == 0.0


def test_split_guards(rng):
    train = Dataset(rng.random((100, 1)), rng.standard_normal((100, 2)))
    held = Dataset(rng.random((100, 1)), rng.standard_normal((100, 2)))
    fitter = LeafFitter(num_lambdas=5)
    small = Hyperrectangle((0.0,), (0.5,))
    assert split_gain(small, 0, train, held, fitter, K=1, min_leaf=1) == -math.inf
    assert split_gain(Hyperrectangle.unit(1), 0, train, held, fitter, K=3, min_leaf=80) == -math.inf


def test_split_gain_detects_mean_shift(rng):
    n = 400
    x = rng.random((n, 1))
    y = rng.standard_normal((n, 2)) + np.where(x < 0.5, -3.0, 3.0)
    xh = rng.random((n, 1))
    yh = rng.standard_normal((n, 2)) + np.where(xh < 0.5, -3.0, 3.0)
    ev = evaluate_split(Hyperrectangle.unit(1), 0, Dataset(x, y), Dataset(xh, yh),
                        LeafFitter(num_lambdas=5), LeafFitter(num_lambdas=5)(y, yh), 4, 10)
    assert ev.gain > 1.0
    assert np.allclose(ev.left.mu, -3, atol=0.3) and np.allclose(ev.right.mu, 3, atol=0.3)


def test_leaf_fitter_without_heldout_uses_largest_penalty(rng):
    y = rng.standard_normal((50, 3))
    m = LeafFitter(num_lambdas=4)(y, np.empty((0, 3)))
    assert m.edges == frozenset()
    assert m.n_train == 50
    with pytest.raises(EmptyDataset):
        LeafFitter()(np.empty((0, 3)), y)


def test_check_bounds_warns(caplog):
    m = _model([3.0, 0.0], [[2.0, 0.5], [0.5, 2.0]])
    with caplog.at_level(logging.WARNING):
        issues = check_bounds(m, B=1.0, L=4.0)
    assert len(issues) == 2
    assert check_bounds(m, B=5.0, L=10.0) == []


def test_predict_on_boundary_uses_upper_cell(rng):
    ft = _two_leaf_tree(rng)
    mu, omega, edges = ft.predict([0.5, 0.2])
    assert np.array_equal(mu, ft.leaf_models[1].mu)
