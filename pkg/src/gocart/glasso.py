"""Graphical lasso, its regularization path, pattern refitting and held-out
model selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    DEFAULT_NUMERICS,
    NoConvergence,
    NotPositiveDefinite,
    NumericsConfig,
    _glasso_sweeps,
    _omega_from_blocks,
    _refit_sweeps,
    cholesky_logdet,
    spd_inverse,
    symmetrize,
)

Edge = tuple[int, int]


class Infeasible(ValueError):
    """No positive-definite matrix satisfies the requested constraints."""


def edge_set(omega, threshold: float = DEFAULT_NUMERICS.zero_threshold) -> frozenset[Edge]:
    omega = np.asarray(omega)
    rows, cols = np.nonzero(np.abs(np.triu(omega, k=1)) > threshold)
    return frozenset(zip(rows.tolist(), cols.tolist()))


def normalize_edges(edges) -> frozenset[Edge]:
    out = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self-loop ({a}, {b}) is not an edge")
        out.add((min(a, b), max(a, b)))
    return frozenset(out)


@dataclass(frozen=True)
class PrecisionEstimate:
    omega: np.ndarray
    sigma: np.ndarray
    lam: float
    edges: frozenset
    logdet: float

    @classmethod
    def from_omega(cls, omega, lam, cfg: NumericsConfig = DEFAULT_NUMERICS):
        omega = symmetrize(omega)
        f, logdet = cholesky_logdet(omega)
        return cls(omega, spd_inverse(f), float(lam), edge_set(omega, cfg.zero_threshold), logdet)

    @property
    def order(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class RegPath:
    S: np.ndarray
    lambdas: np.ndarray
    estimates: list = field(default_factory=list)

    def __len__(self):
        return len(self.estimates)


def glasso_objective(S, omega, lam) -> float:
    """``tr(S Omega) - log|Omega| + lam * sum_jk |Omega_jk|``."""
    _, logdet = cholesky_logdet(omega)
    return float(np.sum(S * omega) - logdet + lam * np.abs(omega).sum())


def glasso_kkt_residual(S, omega, sigma, lam, threshold=DEFAULT_NUMERICS.zero_threshold) -> float:
    """Max-norm stationarity residual of ``S - Sigma + lam * d|Omega|_1``."""
    g = np.asarray(S) - np.asarray(sigma)
    nz = np.abs(omega) > threshold
    r_nz = np.abs(g + lam * np.sign(omega))
    r_z = np.maximum(np.abs(g) - lam, 0.0)
    return float(np.max(np.where(nz, r_nz, r_z)))


def _check_cov(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("matrix is not symmetric")
    if np.any(np.diag(S) < 0):
        raise ValueError("matrix has a negative diagonal entry")
    return symmetrize(S)


def _scale(S) -> float:
    m = float(np.mean(np.diag(S)))
    return m if m > 0 else 1.0


def glasso_solve(S, lam: float, warm: PrecisionEstimate | None = None,
                 cfg: NumericsConfig = DEFAULT_NUMERICS) -> PrecisionEstimate:
    """Solve ``argmin tr(S W) - log|W| + lam * |W|_1`` over SPD matrices.

    The diagonal is penalized. Columns are updated one at a time by solving a
    lasso problem against the current working covariance; ``warm`` seeds the
    working covariance and the per-column coefficients.

    Raises
    ------
    NoConvergence
        If the stationarity residual is above ``cfg.glasso_tol`` after
        ``cfg.glasso_max_iter`` passes.
    NotPositiveDefinite
        If ``lam == 0`` and ``S`` is singular.
    """
    S = _check_cov(S)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    p = S.shape[0]
    if lam == 0:
        f, _ = cholesky_logdet(S)
        return PrecisionEstimate.from_omega(spd_inverse(f), 0.0, cfg)

    if warm is not None and warm.order == p:
        W = np.array(warm.sigma, dtype=float)
        B = -warm.omega / np.diag(warm.omega)[None, :]
        np.fill_diagonal(B, 0.0)
    else:
        W = S.copy()
        B = np.zeros((p, p))
    W = np.ascontiguousarray(W)
    B = np.ascontiguousarray(B)

    scale = _scale(S)
    tol = cfg.sweep_tol * scale
    resid = np.inf
    for _ in range(4):
        passes = _glasso_sweeps(S, float(lam), W, B, tol, tol, cfg.glasso_max_iter, cfg.lasso_max_sweeps)
        omega = _omega_from_blocks(W, B)
        try:
            est = PrecisionEstimate.from_omega(omega, lam, cfg)
        except NotPositiveDefinite:
            est = None
        if est is not None:
            resid = glasso_kkt_residual(S, est.omega, est.sigma, lam, cfg.zero_threshold)
            if resid <= cfg.glasso_tol:
                return est
        if passes < 0:
            break
        tol *= 1e-2
    raise NoConvergence(f"glasso at lambda={lam:.6g}: stationarity residual {resid:.3g}")


def lambda_max(S) -> float:
    """Smallest penalty giving a diagonal solution (floored at 1e-3)."""
    S = np.asarray(S, dtype=float)
    off = np.abs(S - np.diag(np.diag(S)))
    m = float(off.max()) if off.size else 0.0
    return m if m > 0 else 1e-3


def reg_path(S, num_lambdas: int = 30, ratio: float = 0.01,
             cfg: NumericsConfig = DEFAULT_NUMERICS) -> RegPath:
    """Warm-started glasso fits on a log-spaced grid from ``lambda_max(S)``
    down to ``ratio * lambda_max(S)``."""
    if num_lambdas < 2:
        raise ValueError("num_lambdas must be at least 2")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    S = _check_cov(S)
    lmax = lambda_max(S)
    lambdas = np.geomspace(lmax, ratio * lmax, num_lambdas)
    lambdas[0] = lmax
    estimates = []
    warm = None
    for lam in lambdas:
        try:
            warm = glasso_solve(S, float(lam), warm=warm, cfg=cfg)
        except NoConvergence as exc:
            raise NoConvergence(f"regularization path failed at lambda={lam:.6g}: {exc}") from exc
        estimates.append(warm)
    return RegPath(S, lambdas, estimates)


def refit_pattern(S, edges, cfg: NumericsConfig = DEFAULT_NUMERICS) -> PrecisionEstimate:
    """Unpenalized Gaussian MLE of the precision matrix with zeros forced
    outside ``edges``.

    Uses modified-regression sweeps: each column regresses on its allowed
    neighbours under the current covariance estimate.

    Raises
    ------
    Infeasible
        If no positive-definite solution is reached (e.g. a dense pattern on a
        singular ``S``).
    NoConvergence
        If the free-entry residual stays above ``cfg.refit_tol``.
    """
    S = _check_cov(S)
    p = S.shape[0]
    edges = normalize_edges(edges)
    mask = np.zeros((p, p), dtype=np.bool_)
    for a, b in edges:
        if b >= p:
            raise ValueError(f"edge ({a}, {b}) out of range for order {p}")
        mask[a, b] = mask[b, a] = True
    if np.any(np.diag(S) <= 0):
        raise Infeasible("zero variance on the diagonal")

    W = S.copy()
    B = np.zeros((p, p))
    scale = _scale(S)
    tol = cfg.sweep_tol * scale
    resid = np.inf
    for _ in range(4):
        passes = _refit_sweeps(S, mask, W, B, tol, cfg.refit_max_iter)
        if passes == -2:
            raise Infeasible("pattern-constrained MLE does not exist for this covariance")
        omega = _omega_from_blocks(W, B)
        omega[~mask & ~np.eye(p, dtype=bool)] = 0.0
        try:
            f, logdet = cholesky_logdet(omega)
        except NotPositiveDefinite:
            raise Infeasible("refit produced a non positive-definite matrix") from None
        sigma = spd_inverse(f)
        free = mask | np.eye(p, dtype=bool)
        resid = float(np.max(np.abs(sigma - S)[free]))
        if resid <= cfg.refit_tol * max(1.0, scale):
            return PrecisionEstimate(omega, sigma, 0.0, edge_set(omega, cfg.zero_threshold), logdet)
        if passes < 0:
            break
        tol *= 1e-2
    raise NoConvergence(f"refit residual {resid:.3g} above tolerance")


def second_moment(centered) -> np.ndarray:
    centered = np.asarray(centered, dtype=float)
    return centered.T @ centered / centered.shape[0]


def gaussian_risk(S_out, est: PrecisionEstimate) -> float:
    """``tr(S_out Omega) - log|Omega|``."""
    return float(np.sum(S_out * est.omega) - est.logdet)


def select_by_heldout(path: RegPath, heldout_centered, refit: bool = True,
                      cfg: NumericsConfig = DEFAULT_NUMERICS) -> PrecisionEstimate:
    """Pick the path entry with the smallest held-out Gaussian risk.

    ``heldout_centered`` are held-out responses minus the training mean. With
    ``refit`` every candidate is first refit on its own sparsity pattern and
    the refit risk is compared. Ties go to the larger penalty.
    """
    if len(path) == 0:
        raise ValueError("empty regularization path")
    S_out = second_moment(heldout_centered)
    refits: dict = {}
    best, best_risk = None, np.inf
    for lam, est in zip(path.lambdas, path.estimates):
        cand = est
        if refit:
            if est.edges not in refits:
                try:
                    refits[est.edges] = refit_pattern(path.S, est.edges, cfg)
                except (Infeasible, NoConvergence):
                    refits[est.edges] = None
            r = refits[est.edges]
            if r is None:
                continue
            cand = PrecisionEstimate(r.omega, r.sigma, float(lam), r.edges, r.logdet)
        risk = gaussian_risk(S_out, cand)
        if np.isfinite(risk) and risk < best_risk:
            best, best_risk = cand, risk
    if best is None:
        return path.estimates[0]
    return best
