"""Risk functionals, complexity penalties and the held-out split gain."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .data import Dataset, EmptyDataset
from .dpt import DyadicTree, Hyperrectangle, Node, OutOfDomain, prefix_code_len
from .glasso import PrecisionEstimate, reg_path, select_by_heldout
from .numerics import DEFAULT_NUMERICS, NumericsConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LeafModel:
    mu: np.ndarray
    prec: PrecisionEstimate
    n_train: int = 0

    @property
    def edges(self):
        return self.prec.edges


@dataclass
class FittedTree:
    tree: DyadicTree
    leaf_models: list
    # accepted splits in order: (node_id, split_dim, gain, heldout_risk_after)
    split_history: list = field(default_factory=list)
    root_heldout_risk: Optional[float] = None

    def __post_init__(self):
        if self.tree.n_leaves != len(self.leaf_models):
            raise ValueError(f"{self.tree.n_leaves} cells but {len(self.leaf_models)} leaf models")

    @property
    def partition(self):
        return self.tree.partition()

    def leaf_index(self, x) -> int:
        return int(self.tree.assign(np.asarray(x, dtype=float)[None, :])[0])

    def predict(self, x):
        m = self.leaf_models[self.leaf_index(x)]
        return m.mu, m.prec.omega, m.prec.edges


@numba.njit(cache=True)
def _quad_terms(D, omega, logdet):
    n, p = D.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(p):
            r = 0.0
            for k in range(p):
                r += omega[j, k] * D[i, k]
            acc += D[i, j] * r
        out[i] = acc - logdet
    return out


def point_terms(model: LeafModel, Y) -> np.ndarray:
    """Per-observation ``(y - mu)' Omega (y - mu) - log|Omega|``."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] == 0:
        return np.empty(0)
    D = np.ascontiguousarray(Y - model.mu)
    return _quad_terms(D, np.ascontiguousarray(model.prec.omega), float(model.prec.logdet))


def tree_terms(ft: FittedTree, data: Dataset) -> list:
    """Per-cell arrays of point terms, in partition order."""
    idx = ft.tree.assign(data.x)
    return [point_terms(m, data.y[idx == j]) for j, m in enumerate(ft.leaf_models)]


def _risk(ft: FittedTree, data: Dataset) -> float:
    if data.n == 0:
        raise EmptyDataset("risk of an empty dataset is undefined")
    terms = tree_terms(ft, data)
    return math.fsum(v for t in terms for v in t.tolist()) / data.n


def empirical_risk(ft: FittedTree, data: Dataset) -> float:
    """Average negative Gaussian log-likelihood (up to constants) of ``data``
    under the piecewise-constant model."""
    return _risk(ft, data)


def heldout_risk(ft: FittedTree, heldout: Dataset) -> float:
    return _risk(ft, heldout)


def cell_risks(ft: FittedTree, data: Dataset) -> list:
    """Restricted risk of each cell, normalized by the full sample size."""
    if data.n == 0:
        raise EmptyDataset("risk of an empty dataset is undefined")
    return [math.fsum(t.tolist()) / data.n for t in tree_terms(ft, data)]


# ---------------------------------------------------------------------------
# penalties

def pen(m_T: int, d: int, n: int, p: int, gamma_n: float) -> float:
    """Complexity penalty ``gamma * m * sqrt(([[T]] log 2 + 2 log(np)) / n)``."""
    code = prefix_code_len(m_T, d)
    return gamma_n * m_T * math.sqrt((code * math.log(2) + 2 * math.log(n * p)) / n)


@dataclass(frozen=True)
class TheoryConstants:
    B: float
    v1: float
    v2: float
    L_n: float
    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if min(self.B, self.v1, self.v2, self.L_n) < 0:
            raise ValueError("constants must be nonnegative")

    @property
    def C1(self) -> float:
        return 8 * math.sqrt(self.v2) + 8 * self.B * math.sqrt(self.v1) + self.B ** 2

    @property
    def C2(self) -> float:
        return (8 * math.sqrt(2 * self.v2) + 8 * self.B * math.sqrt(2 * self.v1)
                + math.sqrt(2) * self.B ** 2)


def theorem1_pen(m_T: int, d: int, n: int, p: int, tc: TheoryConstants) -> float:
    code = prefix_code_len(m_T, d)
    root = math.sqrt((code * math.log(2) + 2 * math.log(p) + math.log(48 / tc.delta)) / n)
    return (tc.C1 + 1) * tc.L_n * m_T * root


def phi_n(m_T: int, d: int, n: int, p: int, tc: TheoryConstants) -> float:
    code = prefix_code_len(m_T, d)
    root = math.sqrt((code * math.log(2) + 2 * math.log(p) + math.log(384 / tc.delta)) / n)
    return (tc.C2 + math.sqrt(2)) * tc.L_n * m_T * root


def check_bounds(model: LeafModel, B: float | None = None, L: float | None = None) -> list:
    """Warn (and report) when a fitted leaf leaves the declared mean/precision sets."""
    issues = []
    if B is not None and np.abs(model.mu).max() > B:
        issues.append(f"|mu|_inf = {np.abs(model.mu).max():.4g} exceeds B = {B}")
    if L is not None and np.abs(model.prec.omega).sum() > L:
        issues.append(f"|Omega|_1 = {np.abs(model.prec.omega).sum():.4g} exceeds L = {L}")
    for msg in issues:
        log.warning(msg)
    return issues


# ---------------------------------------------------------------------------
# per-cell fitting and split gains

Fitter = Callable[[np.ndarray, np.ndarray], LeafModel]


@dataclass(frozen=True)
class LeafFitter:
    """Sample mean plus held-out-selected (optionally refit) glasso."""

    num_lambdas: int = 30
    lambda_ratio: float = 0.01
    refit: bool = True
    numerics: NumericsConfig = DEFAULT_NUMERICS

    def __call__(self, y_train, y_heldout) -> LeafModel:
        y_train = np.asarray(y_train, dtype=float)
        if y_train.shape[0] == 0:
            raise EmptyDataset("cannot fit a cell without training points")
        mu = y_train.mean(axis=0)
        D = y_train - mu
        S = D.T @ D / y_train.shape[0]
        path = reg_path(S, self.num_lambdas, self.lambda_ratio, self.numerics)
        y_heldout = np.asarray(y_heldout, dtype=float)
        if y_heldout.shape[0] == 0:
            prec = path.estimates[0]
        else:
            prec = select_by_heldout(path, y_heldout - mu, self.refit, self.numerics)
        return LeafModel(mu, prec, y_train.shape[0])


@dataclass(frozen=True)
class SplitEvaluation:
    gain: float
    left: Optional[LeafModel] = None
    right: Optional[LeafModel] = None
    left_idx: Optional[tuple] = None
    right_idx: Optional[tuple] = None


def evaluate_split(rect: Hyperrectangle, k: int, train: Dataset, heldout: Dataset,
                   fitter: Fitter, parent: LeafModel, K: int, min_leaf: int,
                   train_idx=None, held_idx=None) -> SplitEvaluation:
    """Held-out risk decrease from splitting ``rect`` along ``k``.

    ``train_idx``/``held_idx`` are the rows inside ``rect``; ``-inf`` is
    returned when the side length is below ``2**(1-K)`` or a child would hold
    fewer than ``min_leaf`` training or held-out points.
    """
    if train_idx is None:
        train_idx = np.flatnonzero(rect.mask(train.x))
    if held_idx is None:
        held_idx = np.flatnonzero(rect.mask(heldout.x))
    if rect.side_length(k) < 2.0 ** (-K + 1):
        return SplitEvaluation(-math.inf)
    mid = (rect.lower[k] + rect.upper[k]) / 2
    t_left = train.x[train_idx, k] < mid
    h_left = heldout.x[held_idx, k] < mid
    counts = (t_left.sum(), (~t_left).sum(), h_left.sum(), (~h_left).sum())
    if min(counts) < min_leaf:
        return SplitEvaluation(-math.inf)
    tl, tr = train_idx[t_left], train_idx[~t_left]
    hl, hr = held_idx[h_left], held_idx[~h_left]
    left = fitter(train.y[tl], heldout.y[hl])
    right = fitter(train.y[tr], heldout.y[hr])
    parent_terms = point_terms(parent, heldout.y[held_idx])
    left_terms = point_terms(left, heldout.y[hl])
    right_terms = point_terms(right, heldout.y[hr])
    total = math.fsum(parent_terms.tolist() + (-left_terms).tolist() + (-right_terms).tolist())
    return SplitEvaluation(total / heldout.n, left, right, (tl, hl), (tr, hr))


def split_gain(cell: Hyperrectangle, k: int, train: Dataset, heldout: Dataset,
               fitter: Fitter, K: int = 10, min_leaf: int = 10,
               parent: LeafModel | None = None) -> float:
    """Decrease in held-out risk when ``cell`` is dyadically split along ``k``.

    Children are fitted on their own training points; all restricted risks use
    the global held-out normalization so gains telescope.
    """
    train_idx = np.flatnonzero(cell.mask(train.x))
    held_idx = np.flatnonzero(cell.mask(heldout.x))
    if parent is None:
        if train_idx.size == 0:
            return -math.inf
        parent = fitter(train.y[train_idx], heldout.y[held_idx])
    return evaluate_split(cell, k, train, heldout, fitter, parent, K, min_leaf,
                          train_idx, held_idx).gain


def root_only(model: LeafModel, d: int, K: int | None = None) -> FittedTree:
    return FittedTree(DyadicTree(Node(Hyperrectangle.unit(d)), K), [model])


__all__ = [
    "LeafModel", "FittedTree", "TheoryConstants", "LeafFitter", "SplitEvaluation",
    "empirical_risk", "heldout_risk", "cell_risks", "point_terms", "pen", "theorem1_pen",
    "phi_n", "split_gain", "evaluate_split", "check_bounds", "root_only", "OutOfDomain",
]
