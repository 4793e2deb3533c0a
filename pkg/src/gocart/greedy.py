"""Greedy tree growth by held-out risk minimization."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, check_pair
from .dpt import DyadicTree, Hyperrectangle, Node
from .numerics import DEFAULT_NUMERICS, NumericsConfig
from .risk import FittedTree, LeafFitter, LeafModel, evaluate_split, point_terms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GreedyConfig:
    K: int = 10
    min_leaf: int = 10
    num_lambdas: int = 30
    lambda_ratio: float = 0.01
    refit: bool = True
    seed: int = 0
    numerics: NumericsConfig = DEFAULT_NUMERICS

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")

    def fitter(self) -> LeafFitter:
        return LeafFitter(self.num_lambdas, self.lambda_ratio, self.refit, self.numerics)


@dataclass(frozen=True)
class GrowthRecord:
    node_id: int
    rect: Hyperrectangle
    dim: int
    gain: float
    accepted: bool


@dataclass
class _Cell:
    node_id: int
    rect: Hyperrectangle
    train_idx: np.ndarray
    held_idx: np.ndarray
    model: LeafModel
    split_dim: int | None = None
    children: tuple = field(default_factory=tuple)


def grow(train: Dataset, heldout: Dataset, cfg: GreedyConfig = GreedyConfig(),
         trace: list | None = None) -> FittedTree:
    """Grow a dyadic tree greedily, splitting while held-out risk decreases.

    Every frontier cell tries all dimensions; the best split (smallest index on
    ties) is accepted when its gain is strictly positive. Cells are processed
    in creation order. When ``trace`` is a list, one :class:`GrowthRecord`
    per evaluated (cell, dimension) pair is appended to it.
    """
    check_pair(train, heldout)
    fitter = cfg.fitter()
    d = train.d
    root = _Cell(0, Hyperrectangle.unit(d), np.arange(train.n), np.arange(heldout.n),
                 fitter(train.y, heldout.y))
    cells = {0: root}
    frontier = deque([root])
    next_id = 1
    risk = math.fsum(point_terms(root.model, heldout.y).tolist()) / heldout.n
    root_risk = risk
    history = []

    while frontier:
        cell = frontier.popleft()
        best_k, best = None, None
        evals = []
        for k in range(d):
            ev = evaluate_split(cell.rect, k, train, heldout, fitter, cell.model,
                                cfg.K, cfg.min_leaf, cell.train_idx, cell.held_idx)
            evals.append(ev)
            if best is None or ev.gain > best.gain:
                best_k, best = k, ev
        accepted = best.gain > 0
        if trace is not None:
            for k, ev in enumerate(evals):
                trace.append(GrowthRecord(cell.node_id, cell.rect, k, ev.gain,
                                          accepted and k == best_k))
        if not accepted:
            continue
        lo_rect, hi_rect = cell.rect.split(best_k)
        left = _Cell(next_id, lo_rect, best.left_idx[0], best.left_idx[1], best.left)
        right = _Cell(next_id + 1, hi_rect, best.right_idx[0], best.right_idx[1], best.right)
        next_id += 2
        cell.split_dim = best_k
        cell.children = (left.node_id, right.node_id)
        cells[left.node_id] = left
        cells[right.node_id] = right
        frontier.extend([left, right])
        risk -= best.gain
        history.append((cell.node_id, best_k, best.gain, risk))
        log.debug("split node %d on x%d, gain %.6g", cell.node_id, best_k + 1, best.gain)

    leaf_models = []

    def build(cell: _Cell) -> Node:
        if cell.split_dim is None:
            leaf_models.append(cell.model)
            return Node(cell.rect)
        left, right = (build(cells[c]) for c in cell.children)
        return Node(cell.rect, cell.split_dim, left, right)

    tree = DyadicTree(build(root), cfg.K)
    return FittedTree(tree, leaf_models, history, root_risk)


def predict(ft: FittedTree, x):
    """Mean, precision matrix and edge set of the leaf containing ``x``."""
    return ft.predict(np.asarray(x, dtype=float))
