"""Dense symmetric-matrix primitives and the l1 coordinate-descent kernels.

The hot loops (lasso coordinate descent, the graphical lasso block sweep and
the pattern-constrained refit sweep) are compiled with numba; everything else
is plain numpy/scipy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg


class NotPositiveDefinite(ValueError):
    """Raised when a matrix expected to be SPD has a non-positive pivot."""


class NoConvergence(RuntimeError):
    """Raised when an iterative solver misses its tolerance."""


@dataclass(frozen=True)
class NumericsConfig:
    lasso_tol: float = 1e-6
    lasso_max_sweeps: int = 10_000
    glasso_tol: float = 1e-4
    glasso_max_iter: int = 500
    # sweep-level stopping rule inside the glasso / refit kernels (relative to mean diag)
    sweep_tol: float = 1e-9
    refit_tol: float = 1e-5
    refit_max_iter: int = 500
    zero_threshold: float = 1e-8
    inverse_tol: float = 1e-8


DEFAULT_NUMERICS = NumericsConfig()


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor ``lower`` with ``lower @ lower.T == matrix``."""

    lower: np.ndarray

    @property
    def order(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def cholesky_logdet(m) -> tuple[SpdFactor, float]:
    """Cholesky-factor a symmetric matrix and return its log-determinant.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    diag = np.diag(lower)
    if not np.all(diag > 0) or not np.all(np.isfinite(lower)):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factor")
    f = SpdFactor(lower)
    return f, f.logdet()


def spd_inverse(f: SpdFactor) -> np.ndarray:
    p = f.order
    inv = scipy.linalg.cho_solve((f.lower, True), np.eye(p))
    return symmetrize(inv)


def sample_mvn(mean, cov_factor: SpdFactor, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` rows from N(mean, L L^T) as ``mean + L z``."""
    mean = np.asarray(mean, dtype=float)
    p = cov_factor.order
    if mean.shape != (p,):
        raise ValueError(f"mean has shape {mean.shape}, factor has order {p}")
    z = rng.standard_normal((count, p))
    return mean + z @ cov_factor.lower.T


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@numba.njit(cache=True)
def _lasso_kkt(V, s, beta, lam):
    m = beta.shape[0]
    worst = 0.0
    for i in range(m):
        g = s[i]
        for k in range(m):
            g -= V[i, k] * beta[k]
        # g = s - V beta; KKT: |g| <= lam on zeros, g = lam*sign(beta) on nonzeros
        if beta[i] == 0.0:
            r = abs(g) - lam
            if r < 0.0:
                r = 0.0
        elif beta[i] > 0.0:
            r = abs(g - lam)
        else:
            r = abs(g + lam)
        if r > worst:
            worst = r
    return worst


@numba.njit(cache=True)
def _lasso_cd(V, s, lam, beta, tol, max_sweeps):
    """Cyclic coordinate descent on 1/2 b'Vb - s'b + lam |b|_1, in place."""
    m = beta.shape[0]
    grad = np.empty(m)
    for i in range(m):
        g = s[i]
        for k in range(m):
            g -= V[i, k] * beta[k]
        grad[i] = g
    for sweep in range(max_sweeps):
        for i in range(m):
            old = beta[i]
            vii = V[i, i]
            new = _soft(grad[i] + vii * old, lam) / vii
            if new != old:
                delta = new - old
                beta[i] = new
                for k in range(m):
                    grad[k] -= V[k, i] * delta
        worst = 0.0
        for i in range(m):
            if beta[i] == 0.0:
                r = abs(grad[i]) - lam
                if r < 0.0:
                    r = 0.0
            elif beta[i] > 0.0:
                r = abs(grad[i] - lam)
            else:
                r = abs(grad[i] + lam)
            if r > worst:
                worst = r
        if worst <= tol:
            exact = _lasso_kkt(V, s, beta, lam)
            if exact <= tol:
                return sweep + 1, exact
            for i in range(m):
                g = s[i]
                for k in range(m):
                    g -= V[i, k] * beta[k]
                grad[i] = g
    return -1, _lasso_kkt(V, s, beta, lam)


@numba.njit(cache=True)
def _glasso_sweeps(S, lam, W, B, tol, lasso_tol, max_iter, lasso_max_sweeps):
    """Block coordinate descent for the diagonally-penalized graphical lasso.

    ``W`` is the working covariance and column ``j`` of ``B`` holds the lasso
    coefficients for column ``j`` (entry ``B[j, j]`` unused). Both are updated
    in place. Returns the number of passes, or -1 on failure.
    """
    p = S.shape[0]
    for j in range(p):
        W[j, j] = S[j, j] + lam
    V = np.empty((p - 1, p - 1))
    s = np.empty(p - 1)
    beta = np.empty(p - 1)
    for it in range(max_iter):
        change = 0.0
        for j in range(p):
            a = 0
            for i in range(p):
                if i == j:
                    continue
                b = 0
                for k in range(p):
                    if k == j:
                        continue
                    V[a, b] = W[i, k]
                    b += 1
                s[a] = S[i, j]
                beta[a] = B[i, j]
                a += 1
            sweeps, _ = _lasso_cd(V, s, lam, beta, lasso_tol, lasso_max_sweeps)
            if sweeps < 0:
                return -1
            a = 0
            for i in range(p):
                if i == j:
                    continue
                B[i, j] = beta[a]
                w = 0.0
                for b in range(p - 1):
                    w += V[a, b] * beta[b]
                d = abs(w - W[i, j])
                if d > change:
                    change = d
                W[i, j] = w
                W[j, i] = w
                a += 1
        if change <= tol:
            return it + 1
    return -1


@numba.njit(cache=True)
def _chol_solve_inplace(A, b, n):
    """Solve A x = b for the leading n x n block of A; False if not SPD."""
    L = np.zeros((n, n))
    for i in range(n):
        for k in range(i + 1):
            acc = A[i, k]
            for m in range(k):
                acc -= L[i, m] * L[k, m]
            if i == k:
                if acc <= 0.0:
                    return False
                L[i, i] = np.sqrt(acc)
            else:
                L[i, k] = acc / L[k, k]
    for i in range(n):
        acc = b[i]
        for m in range(i):
            acc -= L[i, m] * b[m]
        b[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for m in range(i + 1, n):
            acc -= L[m, i] * b[m]
        b[i] = acc / L[i, i]
    return True


@numba.njit(cache=True)
def _refit_sweeps(S, mask, W, B, tol, max_iter):
    """Modified-regression sweeps for the Gaussian MLE with a fixed zero pattern.

    For each column the free neighbours ``A`` solve ``W[A, A] beta = S[A, j]``
    and the column of ``W`` is reset to ``W[:, A] beta``. Returns passes, -1
    when the tolerance is not met, -2 when a block is not positive definite.
    """
    p = S.shape[0]
    for j in range(p):
        W[j, j] = S[j, j]
    idx = np.empty(p, dtype=np.int64)
    A = np.empty((p, p))
    b = np.empty(p)
    for it in range(max_iter):
        change = 0.0
        for j in range(p):
            n = 0
            for i in range(p):
                if i != j and mask[i, j]:
                    idx[n] = i
                    n += 1
            for a in range(n):
                for c in range(n):
                    A[a, c] = W[idx[a], idx[c]]
                b[a] = S[idx[a], j]
            if n > 0 and not _chol_solve_inplace(A, b, n):
                return -2
            for i in range(p):
                B[i, j] = 0.0
            for a in range(n):
                B[idx[a], j] = b[a]
            for i in range(p):
                if i == j:
                    continue
                w = 0.0
                for a in range(n):
                    w += W[i, idx[a]] * b[a]
                d = abs(w - W[i, j])
                if d > change:
                    change = d
                W[i, j] = w
                W[j, i] = w
        if change <= tol:
            return it + 1
    return -1


@numba.njit(cache=True)
def _omega_from_blocks(W, B):
    p = W.shape[0]
    omega = np.zeros((p, p))
    for j in range(p):
        acc = W[j, j]
        for i in range(p):
            if i != j:
                acc -= W[i, j] * B[i, j]
        ojj = 1.0 / acc
        omega[j, j] = ojj
        for i in range(p):
            if i != j:
                omega[i, j] = -B[i, j] * ojj
    out = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            out[i, j] = 0.5 * (omega[i, j] + omega[j, i])
    return out


def lasso_cov(V, s, lam: float, cfg: NumericsConfig = DEFAULT_NUMERICS, warm=None) -> np.ndarray:
    """Minimize ``0.5 b'Vb - s'b + lam * |b|_1`` by cyclic coordinate descent.

    Convergence is declared on the coordinate-wise KKT residual.

    Raises
    ------
    NoConvergence
        If the KKT residual exceeds ``cfg.lasso_tol`` after
        ``cfg.lasso_max_sweeps`` sweeps.
    """
    V = np.ascontiguousarray(V, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if V.shape != (s.size, s.size):
        raise ValueError(f"shape mismatch: V {V.shape}, s {s.shape}")
    beta = np.zeros(s.size) if warm is None else np.array(warm, dtype=float)
    if s.size == 0:
        return beta
    sweeps, resid = _lasso_cd(V, s, float(lam), beta, cfg.lasso_tol, cfg.lasso_max_sweeps)
    if sweeps < 0:
        raise NoConvergence(f"lasso KKT residual {resid:.3g} after {cfg.lasso_max_sweeps} sweeps")
    return beta


def lasso_objective(V, s, lam, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(0.5 * beta @ V @ beta - s @ beta + lam * np.abs(beta).sum())
