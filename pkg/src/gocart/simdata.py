"""Synthetic covariate-dependent Gaussian graphical models.

Three designs are provided:

* ``gen_regions22`` -- a fixed 22-cell dyadic layout of the (x1, x2) square,
  one random graph per cell, and irrelevant uniform covariates x3..xd;
* ``gen_chain`` -- equally spaced scalar covariates with a slowly mutating
  graph sequence;
* ``gen_grid`` -- the two-dimensional analogue of the chain, built along
  anti-diagonals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .dpt import Hyperrectangle, Partition
from .glasso import Infeasible, normalize_edges
from .numerics import SpdFactor, cholesky_logdet, sample_mvn

OFFDIAG = 0.245


@dataclass(frozen=True)
class GraphTruth:
    p: int
    edges: frozenset
    max_deg: int = 4

    def __post_init__(self):
        edges = normalize_edges(self.edges)
        object.__setattr__(self, "edges", edges)
        if any(b >= self.p for _, b in edges):
            raise ValueError("edge index out of range")
        deg = self.degrees()
        if deg.size and deg.max() > self.max_deg:
            raise ValueError(f"degree {deg.max()} exceeds cap {self.max_deg}")

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.p, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def edge_list(self) -> list:
        return [list(e) for e in sorted(self.edges)]


def gen_er_graph(p: int, num_edges: int, max_deg: int, rng: np.random.Generator,
                 max_restarts: int = 100) -> GraphTruth:
    """Random graph with exactly ``num_edges`` edges and degrees ``<= max_deg``.

    Edges are drawn one at a time as uniform vertex pairs; a draw is rejected
    if it is already an edge or would push an endpoint over the cap. If no
    admissible pair remains the construction restarts.
    """
    if num_edges > p * (p - 1) // 2 or 2 * num_edges > p * max_deg:
        raise Infeasible(f"{num_edges} edges cannot fit p={p} with max degree {max_deg}")
    for _ in range(max_restarts):
        edges: set = set()
        deg = np.zeros(p, dtype=int)
        while len(edges) < num_edges:
            open_ = deg < max_deg
            if open_.sum() < 2 or not _any_admissible(edges, open_):
                break
            while True:
                a, b = sorted(rng.choice(p, size=2, replace=False).tolist())
                if (a, b) not in edges and deg[a] < max_deg and deg[b] < max_deg:
                    break
            edges.add((a, b))
            deg[a] += 1
            deg[b] += 1
        if len(edges) == num_edges:
            return GraphTruth(p, frozenset(edges), max_deg)
    raise Infeasible(f"no graph found after {max_restarts} restarts")


def _any_admissible(edges, open_) -> bool:
    idx = np.flatnonzero(open_)
    for i, a in enumerate(idx):
        for b in idx[i + 1:]:
            if (int(a), int(b)) not in edges:
                return True
    return False


def omega_from_graph(g: GraphTruth, offdiag: float = OFFDIAG) -> np.ndarray:
    """Unit diagonal, ``offdiag`` on edges; checked positive definite."""
    omega = np.eye(g.p)
    for a, b in g.edges:
        omega[a, b] = omega[b, a] = offdiag
    cholesky_logdet(omega)
    return omega


def covariance_factor(omega) -> SpdFactor:
    f, _ = cholesky_logdet(np.linalg.inv(omega))
    return f


# ---------------------------------------------------------------------------
# 22-region layout

def _r(x0, x1, y0, y1):
    return Hyperrectangle((x0, y0), (x1, y1))


# (x1-interval, x2-interval) of each cell; ids are assigned by increasing area.
# The four smallest cells form one 2x2 block so their recovery does not hinge
# on which of the two axes is split first.
CANONICAL_REGIONS = (
    _r(0.5, 1.0, 0.5, 1.0),
    _r(0.5, 0.75, 0.0, 0.5),
    _r(0.75, 1.0, 0.0, 0.25),
    _r(0.75, 1.0, 0.25, 0.5),
    _r(0.0, 0.125, 0.0, 0.125),
    _r(0.125, 0.25, 0.0, 0.125),
    _r(0.0, 0.125, 0.125, 0.25),
    _r(0.125, 0.25, 0.125, 0.25),
    _r(0.25, 0.5, 0.0, 0.125),
    _r(0.25, 0.5, 0.125, 0.25),
    _r(0.0, 0.25, 0.25, 0.375),
    _r(0.0, 0.25, 0.375, 0.5),
    _r(0.25, 0.375, 0.25, 0.5),
    _r(0.375, 0.5, 0.25, 0.5),
    _r(0.0, 0.125, 0.5, 0.75),
    _r(0.125, 0.25, 0.5, 0.75),
    _r(0.25, 0.5, 0.5, 0.625),
    _r(0.25, 0.5, 0.625, 0.75),
    _r(0.0, 0.25, 0.75, 0.875),
    _r(0.0, 0.25, 0.875, 1.0),
    _r(0.25, 0.375, 0.75, 1.0),
    _r(0.375, 0.5, 0.75, 1.0),
)


def canonical_layout() -> list:
    """The 22 cells ordered by (area, x2, x1); index ``t`` is region ``t + 1``."""
    return sorted(CANONICAL_REGIONS, key=lambda r: (r.volume(), r.lower[1], r.lower[0]))


@dataclass(frozen=True)
class RegionLayout:
    rects: tuple
    graphs: tuple
    omegas: tuple

    def __post_init__(self):
        if not (len(self.rects) == len(self.graphs) == len(self.omegas)):
            raise ValueError("rects, graphs and omegas must align")
        check_tiling(self.rects)

    def __len__(self):
        return len(self.rects)

    def region_of(self, x2) -> np.ndarray:
        return Partition(tuple(self.rects)).assign(np.asarray(x2)[:, :2])

    def partition(self, d: int) -> Partition:
        """The layout lifted to ``[0,1]^d`` (free in x3..xd)."""
        pad = d - 2
        return Partition(tuple(Hyperrectangle(r.lower + (0.0,) * pad, r.upper + (1.0,) * pad)
                               for r in self.rects))

    def to_dict(self) -> dict:
        return {"regions": [{"id": t + 1, "rect": r.to_dict(), "edges": g.edge_list()}
                            for t, (r, g) in enumerate(zip(self.rects, self.graphs))],
                "p": self.graphs[0].p if self.graphs else 0}


def check_tiling(rects) -> None:
    vol = sum(r.volume() for r in rects)
    if vol != 1.0:
        raise ValueError(f"layout cells have total area {vol}, expected 1")
    for i, a in enumerate(rects):
        for b in rects[i + 1:]:
            if all(max(a.lower[k], b.lower[k]) < min(a.upper[k], b.upper[k]) for k in range(a.dim)):
                raise ValueError(f"layout cells {a} and {b} overlap")


def load_layout(path) -> list:
    """Rectangles from a layout JSON file (``{"regions": [{"rect": ...}, ...]}``)."""
    obj = json.loads(Path(path).read_text())
    rects = [Hyperrectangle.from_dict(r["rect"]) for r in obj["regions"]]
    check_tiling(rects)
    return rects


def _sample_regions(x, layout: RegionLayout, factors, rng) -> np.ndarray:
    region = layout.region_of(x)
    y = np.empty((x.shape[0], layout.graphs[0].p))
    for t, f in enumerate(factors):
        idx = np.flatnonzero(region == t)
        y[idx] = sample_mvn(np.zeros(f.order), f, idx.size, rng)
    return y


def gen_regions22(n: int = 10_000, d: int = 10, rng: np.random.Generator | None = None, *,
                  p: int = 20, num_edges: int = 10, max_deg: int = 4,
                  offdiag: float = OFFDIAG, rects=None):
    """Uniform covariates on ``[0,1]^d`` whose first two coordinates select a
    region; responses are ``N(0, Omega_t^{-1})`` with one random graph per
    region. Returns ``(train, heldout, layout)`` with equal-size splits."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    rng = np.random.default_rng() if rng is None else rng
    rects = tuple(canonical_layout() if rects is None else rects)
    graphs = tuple(gen_er_graph(p, num_edges, max_deg, rng) for _ in rects)
    omegas = tuple(omega_from_graph(g, offdiag) for g in graphs)
    layout = RegionLayout(rects, graphs, omegas)
    factors = [covariance_factor(o) for o in omegas]
    out = []
    for _ in range(2):
        x = rng.random((n, d))
        out.append(Dataset(x, _sample_regions(x, layout, factors, rng)))
    return out[0], out[1], layout


# ---------------------------------------------------------------------------
# chain and grid

def mutate_graph(g: GraphTruth, rng: np.random.Generator, prob: float = 0.05,
                 band: tuple = (5, 15)) -> GraphTruth:
    """With probability ``prob`` drop a uniform edge, then with probability
    ``prob`` add a uniform admissible non-edge. A step that would leave the
    edge-count band (or has no admissible pair) is skipped."""
    edges = sorted(g.edges)
    if rng.random() < prob and len(edges) - 1 >= band[0]:
        edges.pop(int(rng.integers(len(edges))))
    if rng.random() < prob and len(edges) + 1 <= band[1]:
        deg = np.zeros(g.p, dtype=int)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        present = set(edges)
        cands = [(a, b) for a in range(g.p) for b in range(a + 1, g.p)
                 if (a, b) not in present and deg[a] < g.max_deg and deg[b] < g.max_deg]
        if cands:
            edges.append(cands[int(rng.integers(len(cands)))])
    if len(edges) == len(g.edges) and set(edges) == g.edges:
        return g
    return GraphTruth(g.p, frozenset(edges), g.max_deg)


def _sample_per_point(graphs, offdiag, rng) -> np.ndarray:
    cache = {}
    z = rng.standard_normal((len(graphs), graphs[0].p))
    y = np.empty_like(z)
    for i, g in enumerate(graphs):
        f = cache.get(g.edges)
        if f is None:
            f = cache[g.edges] = covariance_factor(omega_from_graph(g, offdiag))
        y[i] = f.lower @ z[i]
    return y


def gen_chain(n: int = 10_000, p: int = 20, rng: np.random.Generator | None = None, *,
              num_edges: int = 10, max_deg: int = 4, offdiag: float = OFFDIAG,
              prob: float = 0.05, band: tuple = (5, 15)):
    """Equally spaced x on [0, 1] with one response per point.

    Returns ``(train, heldout, graphs)``; ``graphs[t]`` is the truth at the
    ``t``-th covariate value, shared by both splits.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng() if rng is None else rng
    graphs = [gen_er_graph(p, num_edges, max_deg, rng)]
    for _ in range(1, n):
        graphs.append(mutate_graph(graphs[-1], rng, prob, band))
    x = np.linspace(0.0, 1.0, n)[:, None]
    train = Dataset(x, _sample_per_point(graphs, offdiag, rng))
    heldout = Dataset(x.copy(), _sample_per_point(graphs, offdiag, rng))
    return train, heldout, graphs


def gen_grid(side: int = 100, p: int = 20, rng: np.random.Generator | None = None, *,
             num_edges: int = 10, max_deg: int = 4, offdiag: float = OFFDIAG,
             prob: float = 0.05, band: tuple = (5, 15)):
    """``side x side`` equally spaced points on [0, 1]^2.

    Graphs are built along anti-diagonals: each cell mutates the graph of its
    left or lower neighbour (chosen with equal probability when both exist).
    Returns ``(train, heldout, grid)`` with ``grid[i][j]`` the truth at
    ``x = (i, j) / (side - 1)``; points are ordered row-major in ``(i, j)``.
    """
    if side < 2:
        raise ValueError("need side >= 2")
    rng = np.random.default_rng() if rng is None else rng
    grid = [[None] * side for _ in range(side)]
    grid[0][0] = gen_er_graph(p, num_edges, max_deg, rng)
    for s in range(1, 2 * side - 1):
        for i in range(max(0, s - side + 1), min(s, side - 1) + 1):
            j = s - i
            preds = [grid[a][b] for a, b in ((i - 1, j), (i, j - 1)) if a >= 0 and b >= 0]
            base = preds[int(rng.integers(2))] if len(preds) == 2 else preds[0]
            grid[i][j] = mutate_graph(base, rng, prob, band)
    ticks = np.linspace(0.0, 1.0, side)
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    x = np.column_stack([ticks[ii.ravel()], ticks[jj.ravel()]])
    flat = [grid[i][j] for i, j in zip(ii.ravel(), jj.ravel())]
    train = Dataset(x, _sample_per_point(flat, offdiag, rng))
    heldout = Dataset(x.copy(), _sample_per_point(flat, offdiag, rng))
    return train, heldout, grid
