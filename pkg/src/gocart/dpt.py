"""Dyadic partitioning trees over the unit hypercube."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np


class OutOfDomain(ValueError):
    """A point lies outside [0, 1]^d."""


class TooLarge(ValueError):
    """The requested tree class exceeds the enumeration cap."""


@dataclass(frozen=True)
class Hyperrectangle:
    """Axis-aligned box ``prod_l [lower_l, upper_l]`` with dyadic endpoints."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper have different lengths")
        for a, b in zip(self.lower, self.upper):
            if not 0.0 <= a < b <= 1.0:
                raise ValueError(f"invalid interval [{a}, {b}]")
            m = math.log2(b - a)
            if m != int(m):
                raise ValueError(f"side length {b - a} is not a power of two")

    @classmethod
    def unit(cls, d: int) -> "Hyperrectangle":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def side_length(self, k: int) -> float:
        return self.upper[k] - self.lower[k]

    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def split(self, k: int) -> tuple["Hyperrectangle", "Hyperrectangle"]:
        if not 0 <= k < self.dim:
            raise IndexError(f"split dimension {k} out of range for d={self.dim}")
        mid = (self.lower[k] + self.upper[k]) / 2
        left = Hyperrectangle(self.lower, self.upper[:k] + (mid,) + self.upper[k + 1:])
        right = Hyperrectangle(self.lower[:k] + (mid,) + self.lower[k + 1:], self.upper)
        return left, right

    def contains(self, x) -> bool:
        """Half-open membership, closed on the upper face of the domain."""
        for a, b, v in zip(self.lower, self.upper, x):
            if v < a or v > b or (v == b and b != 1.0):
                return False
        return True

    def mask(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        inside = (X >= lo) & ((X < hi) | ((X == hi) & (hi == 1.0)))
        return np.all(inside, axis=1)

    def contains_rect(self, other: "Hyperrectangle") -> bool:
        return all(a <= c and d <= b for a, b, c, d in
                   zip(self.lower, self.upper, other.lower, other.upper))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, obj) -> "Hyperrectangle":
        return cls(tuple(float(v) for v in obj["lower"]), tuple(float(v) for v in obj["upper"]))


def split(rect: Hyperrectangle, k: int):
    return rect.split(k)


def side_length(rect: Hyperrectangle, k: int) -> float:
    return rect.side_length(k)


@dataclass(frozen=True)
class Node:
    rect: Hyperrectangle
    split_dim: Optional[int] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.split_dim is None

    def leaves(self) -> list:
        if self.is_leaf:
            return [self.rect]
        return self.left.leaves() + self.right.leaves()

    def internal_nodes(self) -> Iterator["Node"]:
        if not self.is_leaf:
            yield self
            yield from self.left.internal_nodes()
            yield from self.right.internal_nodes()


def make_split(rect: Hyperrectangle, k: int, left: Node | None = None, right: Node | None = None) -> Node:
    lo, hi = rect.split(k)
    return Node(rect, k, left or Node(lo), right or Node(hi))


@dataclass(frozen=True)
class Partition:
    cells: tuple

    def __len__(self):
        return len(self.cells)

    def assign(self, X) -> np.ndarray:
        """Cell index of each row of ``X``."""
        X = _check_points(X, self.cells[0].dim)
        out = np.full(X.shape[0], -1, dtype=np.int64)
        for j, cell in enumerate(self.cells):
            out[cell.mask(X)] = j
        return out


def _check_points(X, d) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != d:
        raise ValueError(f"points have {X.shape[1]} coordinates, expected {d}")
    if X.size and (np.any(~np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0):
        raise OutOfDomain("covariates must lie in [0, 1]^d")
    return X


@dataclass(frozen=True)
class DyadicTree:
    root: Node
    K: Optional[int] = None

    @property
    def dim(self) -> int:
        return self.root.rect.dim

    def partition(self) -> Partition:
        return Partition(tuple(self.root.leaves()))

    @property
    def n_leaves(self) -> int:
        return len(self.root.leaves())

    def split_dims(self) -> list:
        return [n.split_dim for n in self.root.internal_nodes()]

    def assign(self, X) -> np.ndarray:
        """Leaf index (in ``partition()`` order) of each row of ``X``."""
        X = _check_points(X, self.dim)
        out = np.empty(X.shape[0], dtype=np.int64)
        counter = [0]

        def walk(node, idx):
            if node.is_leaf:
                out[idx] = counter[0]
                counter[0] += 1
                return
            k = node.split_dim
            mid = node.left.rect.upper[k]
            goes_left = X[idx, k] < mid
            walk(node.left, idx[goes_left])
            walk(node.right, idx[~goes_left])

        walk(self.root, np.arange(X.shape[0]))
        return out

    def to_dict(self) -> dict:
        counter = [0]

        def enc(node):
            out = {"rect": node.rect.to_dict(), "leaf": node.is_leaf}
            if node.is_leaf:
                out["model_ref"] = f"leaf_{counter[0]:04d}"
                counter[0] += 1
            else:
                out["split_dim"] = node.split_dim
                out["children"] = [enc(node.left), enc(node.right)]
            return out

        return {"dims": self.dim, "K": self.K, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, obj) -> "DyadicTree":
        def dec(o):
            rect = Hyperrectangle.from_dict(o["rect"])
            if o["leaf"]:
                return Node(rect)
            k = int(o["split_dim"])
            left, right = (dec(c) for c in o["children"])
            if (left.rect, right.rect) != rect.split(k):
                raise ValueError("children do not match the dyadic split of their parent")
            return Node(rect, k, left, right)

        root = dec(obj["root"])
        if root.rect != Hyperrectangle.unit(root.rect.dim):
            raise ValueError("tree root must cover the unit hypercube")
        return cls(root, obj.get("K"))


def locate(partition: Partition, x) -> int:
    """Index of the cell containing ``x``."""
    x = _check_points(x, partition.cells[0].dim)[0]
    for j, cell in enumerate(partition.cells):
        if cell.contains(x):
            return j
    raise OutOfDomain(f"point {x} is not covered by the partition")


def prefix_code_len(m_T: int, d: int) -> float:
    """Code length ``3 m - 1 + (m - 1) log2(d)`` of a tree with ``m`` leaves."""
    if m_T < 1 or d < 1:
        raise ValueError("m_T and d must be positive")
    return 3 * m_T - 1 + (m_T - 1) * math.log2(d)


@lru_cache(maxsize=None)
def _count(budget: tuple) -> int:
    total = 1
    for k, b in enumerate(budget):
        if b > 0:
            sub = budget[:k] + (b - 1,) + budget[k + 1:]
            total += _count(sub) ** 2
    return total


def count_trees(d: int, K: int) -> int:
    """Number of dyadic trees whose leaves have side length >= 2**-K."""
    return _count((K,) * d)


def enumerate_trees(d: int, K: int, cap: int = 10**6) -> Iterator[DyadicTree]:
    """Yield every tree in the class with per-dimension split budget ``K``."""
    total = count_trees(d, K)
    if total > cap:
        raise TooLarge(f"{total} trees for d={d}, K={K} exceeds cap {cap}")

    def gen(rect, budget):
        yield Node(rect)
        for k in range(d):
            if budget[k] == 0:
                continue
            sub = budget[:k] + (budget[k] - 1,) + budget[k + 1:]
            lo, hi = rect.split(k)
            rights = list(gen(hi, sub))
            for left in gen(lo, sub):
                for right in rights:
                    yield Node(rect, k, left, right)

    for root in gen(Hyperrectangle.unit(d), (K,) * d):
        yield DyadicTree(root, K)
