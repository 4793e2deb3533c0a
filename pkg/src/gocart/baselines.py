"""Comparison estimators: joint-Gaussian conditioning, kernel smoothing and a
single pooled graph that ignores the covariates."""
from __future__ import annotations

import numpy as np

from .data import Dataset, EmptyDataset
from .glasso import PrecisionEstimate, glasso_solve
from .numerics import DEFAULT_NUMERICS, NumericsConfig, symmetrize
from .risk import LeafFitter, LeafModel


class DegenerateWeights(ValueError):
    pass


def _joint_cov(data: Dataset) -> np.ndarray:
    Z = np.hstack([data.x, data.y])
    Z = Z - Z.mean(axis=0)
    return Z.T @ Z / data.n


def conditional_covariance(data: Dataset, lambda_x: float,
                           cfg: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """``S_Y - S_YX Omega_X S_XY`` with ``Omega_X`` the glasso estimate of
    the covariate precision at ``lambda_x``."""
    if data.n < 2:
        raise EmptyDataset("need at least two observations")
    d = data.d
    S = _joint_cov(data)
    omega_x = glasso_solve(S[:d, :d], lambda_x, cfg=cfg).omega
    s_yx = S[d:, :d]
    return symmetrize(S[d:, d:] - s_yx @ omega_x @ s_yx.T)


def parametric_fit(data: Dataset, lambda_x: float, lambda_y: float,
                   cfg: NumericsConfig = DEFAULT_NUMERICS) -> PrecisionEstimate:
    """Graph of ``Y | X`` under a joint Gaussian model; the same for every x."""
    return glasso_solve(conditional_covariance(data, lambda_x, cfg), lambda_y, cfg=cfg)


def kernel_moments(data: Dataset, x0, h: float):
    """Gaussian-kernel weighted mean and covariance of the responses at ``x0``."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    if data.n == 0:
        raise EmptyDataset("no observations")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != data.d:
        raise ValueError(f"x0 has {x0.size} coordinates, data has d={data.d}")
    r = np.linalg.norm(data.x - x0, axis=1) / h
    w = np.exp(-0.5 * r * r) / np.sqrt(2 * np.pi)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeights(f"all kernel weights underflow at bandwidth {h}")
    mu = w @ data.y / total
    D = data.y - mu
    sigma = (D * w[:, None]).T @ D / total
    return mu, symmetrize(sigma)


def kernel_fit(data: Dataset, x0, h: float, lam: float,
               cfg: NumericsConfig = DEFAULT_NUMERICS) -> PrecisionEstimate:
    _, sigma = kernel_moments(data, x0, h)
    return glasso_solve(sigma, lam, cfg=cfg)


def pooled_glasso(train: Dataset, heldout: Dataset, fitter: LeafFitter = LeafFitter()) -> LeafModel:
    """One held-out-selected glasso fit on all responses, ignoring covariates."""
    return fitter(train.y, heldout.y)
