"""Exhaustive tree search for tiny problems.

Two reference estimators over every tree with per-dimension split budget
``K``: penalized empirical risk minimization on the training set, and
held-out risk minimization. Both are meant for validating the greedy grower,
so they favour exactness over speed.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, EmptyDataset, check_pair
from .dpt import Hyperrectangle, enumerate_trees
from .glasso import Infeasible, glasso_solve, lambda_max
from .numerics import DEFAULT_NUMERICS, NumericsConfig
from .risk import FittedTree, LeafFitter, LeafModel, pen, point_terms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExactConfig:
    min_leaf: int = 10
    num_lambdas: int = 30
    lambda_ratio: float = 0.01
    refit: bool = True
    # penalized variant: lambda grid as fractions of lambda_max, optional l1 radius
    lambda_fractions: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625)
    l1_bound: float | None = None
    cap: int = 10**6
    numerics: NumericsConfig = DEFAULT_NUMERICS

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if not self.lambda_fractions or min(self.lambda_fractions) <= 0:
            raise ValueError("lambda_fractions must be positive")

    @classmethod
    def from_greedy(cls, g) -> "ExactConfig":
        return cls(min_leaf=g.min_leaf, num_lambdas=g.num_lambdas,
                   lambda_ratio=g.lambda_ratio, refit=g.refit, numerics=g.numerics)


@dataclass(frozen=True)
class RiskRow:
    index: int
    n_leaves: int
    feasible: bool
    risk: float
    penalty: float
    objective: float


@dataclass(frozen=True)
class RiskReport:
    method: str
    n_candidates: int
    n_feasible: int
    best_index: int
    rows: tuple

    def to_csv(self) -> str:
        from .data import format_float
        lines = ["tree_index,n_leaves,feasible,risk,penalty,objective"]
        for r in self.rows:
            lines.append(",".join([str(r.index), str(r.n_leaves), str(int(r.feasible)),
                                   format_float(r.risk), format_float(r.penalty),
                                   format_float(r.objective)]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PenalizedFitter:
    """Sample mean plus glasso at the smallest grid lambda whose estimate has
    ``|Omega|_1 <= l1_bound`` (largest lambda if none does)."""

    lambda_fractions: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625)
    l1_bound: float | None = None
    numerics: NumericsConfig = DEFAULT_NUMERICS

    def __call__(self, y_train, y_heldout=None) -> LeafModel:
        y = np.asarray(y_train, dtype=float)
        if y.shape[0] == 0:
            raise EmptyDataset("cannot fit a cell without training points")
        mu = y.mean(axis=0)
        D = y - mu
        S = D.T @ D / y.shape[0]
        lmax = lambda_max(S)
        lams = sorted({f * lmax for f in self.lambda_fractions})
        warm = None
        chosen = None
        for lam in reversed(lams):
            est = glasso_solve(S, lam, warm, self.numerics)
            warm = est
            if self.l1_bound is None or np.abs(est.omega).sum() <= self.l1_bound:
                chosen = est
            elif chosen is None:
                chosen = est
                break
            else:
                break
        return LeafModel(mu, chosen, y.shape[0])


class _CellCache:
    """Per-rectangle fits and point terms, shared across candidate trees."""

    def __init__(self, train: Dataset, heldout: Dataset | None, fitter, min_leaf: int,
                 eval_on_train: bool):
        self.train, self.heldout = train, heldout
        self.fitter = fitter
        self.min_leaf = min_leaf
        self.eval_on_train = eval_on_train
        self.d = train.d
        self._fits: dict = {}

    def get(self, rect: Hyperrectangle):
        """``(model, terms)`` for ``rect``, or ``None`` if the cell is too small."""
        if rect in self._fits:
            return self._fits[rect]
        t_idx = np.flatnonzero(rect.mask(self.train.x))
        h_idx = None if self.heldout is None else np.flatnonzero(rect.mask(self.heldout.x))
        is_root = rect == Hyperrectangle.unit(self.d)
        counts = [t_idx.size] + ([] if h_idx is None else [h_idx.size])
        if not is_root and min(counts) < self.min_leaf:
            out = None
        else:
            y_h = None if h_idx is None else self.heldout.y[h_idx]
            model = self.fitter(self.train.y[t_idx], y_h)
            y_eval = self.train.y[t_idx] if self.eval_on_train else y_h
            out = (model, point_terms(model, y_eval).tolist())
        self._fits[rect] = out
        return out


def _search(trees, cache: _CellCache, n_eval: int, penalty_of, method: str):
    rows = []
    best = None
    best_key = None
    chosen = None
    for i, tree in enumerate(trees):
        leaves = tree.root.leaves()
        fits = [cache.get(r) for r in leaves]
        m = len(leaves)
        if any(f is None for f in fits):
            rows.append(RiskRow(i, m, False, math.inf, math.nan, math.inf))
            continue
        risk = math.fsum(itertools.chain.from_iterable(f[1] for f in fits)) / n_eval
        penalty = penalty_of(m)
        obj = risk + penalty
        rows.append(RiskRow(i, m, True, risk, penalty, obj))
        key = (obj, m, i)
        if best_key is None or key < best_key:
            best_key, best, chosen = key, i, (tree, [f[0] for f in fits])
    n_feasible = sum(r.feasible for r in rows)
    log.info("%s: evaluated %d trees (%d feasible)", method, len(rows), n_feasible)
    if chosen is None:
        raise Infeasible("no feasible tree in the class")
    report = RiskReport(method, len(rows), n_feasible, best, tuple(rows))
    return FittedTree(chosen[0], chosen[1]), report


def _check_dims(data: Dataset, d: int, K: int) -> None:
    if data.d != d:
        raise ValueError(f"data has d={data.d}, search requested d={d}")
    if K < 0:
        raise ValueError("K must be nonnegative")


def fit_heldout(train: Dataset, heldout: Dataset, d: int, K: int,
                cfg: ExactConfig = ExactConfig()):
    """Tree minimizing held-out risk, with leaf models fitted on ``train``.

    Leaves use the same held-out-selected glasso as the greedy grower and the
    same ``min_leaf`` rule, so this is an argmin over a superset of what
    greedy growth can return.
    """
    check_pair(train, heldout)
    _check_dims(train, d, K)
    fitter = LeafFitter(cfg.num_lambdas, cfg.lambda_ratio, cfg.refit, cfg.numerics)
    cache = _CellCache(train, heldout, fitter, cfg.min_leaf, eval_on_train=False)
    return _search(enumerate_trees(d, K, cfg.cap), cache, heldout.n, lambda m: 0.0,
                   "exact-heldout")


def fit_penalized(train: Dataset, d: int, K: int, gamma_n: float,
                  cfg: ExactConfig = ExactConfig()):
    """Tree minimizing training risk plus ``pen(m_T, d, n, p, gamma_n)``."""
    if train.n == 0:
        raise EmptyDataset("training data must be nonempty")
    _check_dims(train, d, K)
    if gamma_n < 0:
        raise ValueError("gamma_n must be nonnegative")
    fitter = PenalizedFitter(tuple(cfg.lambda_fractions), cfg.l1_bound, cfg.numerics)
    cache = _CellCache(train, None, fitter, cfg.min_leaf, eval_on_train=True)
    n, p = train.n, train.p
    return _search(enumerate_trees(d, K, cfg.cap), cache, n,
                   lambda m: pen(m, d, n, p, gamma_n), "exact-penalized")
