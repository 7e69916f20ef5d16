"""Reward / estimation-error tradeoff objective over allocations.

For an allocation ``lam`` on the simplex and arms with means ``mu`` and
standard deviations ``sigma``::

    rho(lam) = sum_i lam_i * mu_i
    eps(lam) = (1/K) * sum_i sigma_i / sqrt(lam_i)
    f(lam)   = w * rho(lam) - (1 - w) * eps(lam)

Every evaluator broadcasts over leading axes, so a stack of allocations of
shape ``(..., K)`` is evaluated in one call. Arms enter only through their
``means`` and ``sigmas`` attributes, which lets the same code run on true and
on estimated parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

import numpy as np


class HasMoments(Protocol):
    @property
    def means(self) -> np.ndarray: ...

    @property
    def sigmas(self) -> np.ndarray: ...


class Moments(NamedTuple):
    """Bare (means, standard deviations) pair, e.g. empirical estimates."""

    means: np.ndarray
    sigmas: np.ndarray

    @property
    def k(self) -> int:
        return len(self.means)


@dataclass(frozen=True)
class TradeoffParams:
    w: float
    lambda_min: float = 0.0
    eta: float = 1.0
    delta: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if self.lambda_min < 0.0:
            raise ValueError(f"lambda_min must be >= 0, got {self.lambda_min}")
        if not self.eta > 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def check_arms(self, k: int) -> None:
        if self.lambda_min * k > 1.0 + 1e-12:
            raise ValueError(f"lambda_min={self.lambda_min} too large for K={k} arms")


@dataclass(frozen=True)
class ConcavityConstants:
    alpha: float
    beta: float


def _moments(inst: HasMoments, k: int) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(inst.means, dtype=float)
    sigma = np.asarray(inst.sigmas, dtype=float)
    if mu.shape[-1] != k:
        raise ValueError(f"allocation has {k} components but the instance has {mu.shape[-1]} arms")
    return mu, sigma


def check_allocation(lam, k: int | None = None, lambda_min: float = 0.0, atol: float = 1e-12) -> np.ndarray:
    """Validate a single allocation and return it as a float array."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ValueError("an allocation is a 1-d vector")
    if k is not None and lam.shape[0] != k:
        raise ValueError(f"expected {k} components, got {lam.shape[0]}")
    if abs(lam.sum() - 1.0) > atol:
        raise ValueError(f"allocation sums to {lam.sum()!r}, not 1")
    if np.any(lam < lambda_min - atol):
        raise ValueError(f"allocation has a component below lambda_min={lambda_min}")
    return lam


def eval_rho(lam, inst: HasMoments):
    lam = np.asarray(lam, dtype=float)
    mu, _ = _moments(inst, lam.shape[-1])
    return np.sum(lam * mu, axis=-1)


def eval_epsilon(lam, inst: HasMoments):
    """Average sqrt(n)-scaled RMSE; ``inf`` if a noisy arm gets no mass.

    Zero-variance arms contribute nothing, whatever their allocation.
    """
    lam = np.asarray(lam, dtype=float)
    k = lam.shape[-1]
    _, sigma = _moments(inst, k)
    sigma = np.broadcast_to(sigma, lam.shape)
    noisy = sigma > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(
            noisy,
            np.where(lam > 0, sigma / np.sqrt(np.where(lam > 0, lam, 1.0)), np.inf),
            0.0,
        )
    return np.sum(terms, axis=-1) / k


def eval_f(lam, inst: HasMoments, p: TradeoffParams):
    """Tradeoff value; ``-inf`` where the error term is infinite and ``w < 1``."""
    rho = eval_rho(lam, inst)
    if p.w == 1.0:
        return rho
    return p.w * rho - (1.0 - p.w) * eval_epsilon(lam, inst)


def grad_f(lam, inst: HasMoments, p: TradeoffParams) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    k = lam.shape[-1]
    mu, sigma = _moments(inst, k)
    sigma = np.broadcast_to(sigma, lam.shape)
    noisy = sigma > 0
    if p.w < 1.0 and np.any(noisy & (lam <= 0)):
        raise ValueError("gradient undefined at a zero component with positive variance")
    safe = np.where(noisy, lam, 1.0)
    err = np.where(noisy, sigma / (2.0 * k * safe**1.5), 0.0)
    return p.w * mu + (1.0 - p.w) * err


def neg_hessian_diag(lam, inst: HasMoments, p: TradeoffParams) -> np.ndarray:
    """Diagonal of ``-d^2 f / d lam_i^2`` (the Hessian is diagonal)."""
    lam = np.asarray(lam, dtype=float)
    k = lam.shape[-1]
    _, sigma = _moments(inst, k)
    return 3.0 * (1.0 - p.w) * sigma / (4.0 * k * lam**2.5)


def concavity_constants(inst: HasMoments, p: TradeoffParams) -> ConcavityConstants:
    """Strong-concavity and smoothness moduli of ``f`` on the restricted simplex."""
    sigma = np.asarray(inst.sigmas, dtype=float)
    k = sigma.shape[0]
    if p.w >= 1.0:
        raise ValueError("concavity constants undefined for w = 1")
    if p.lambda_min <= 0.0:
        raise ValueError("smoothness constant undefined for lambda_min = 0")
    if sigma.min() <= 0.0:
        raise ValueError("strong concavity constant undefined when some sigma_i = 0")
    scale = 3.0 * (1.0 - p.w) / (4.0 * k)
    return ConcavityConstants(
        alpha=scale * float(sigma.min()),
        beta=scale * float(sigma.max()) / p.lambda_min**2.5,
    )
