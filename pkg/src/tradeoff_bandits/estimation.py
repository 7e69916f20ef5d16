"""Online per-arm statistics and concentration radii."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import Moments, TradeoffParams

# Which union-bound schedule to use for delta_n: "prop" -> delta / (4Kn(n+1)),
# "cover" -> delta / (4Kn^2(n+1)) (the one needed for the uniform bound over a
# cover of the restricted simplex).
SCHEDULES = ("prop", "cover")


class EmpiricalStats:
    """Pull counts, running means and sums of squared deviations for K arms.

    Updates use Welford's recurrence, so each observation costs O(1) and the
    result does not depend on the order of the samples up to rounding.
    """

    __slots__ = ("counts", "means", "m2", "t")

    def __init__(self, k: int) -> None:
        if k < 1:
            raise ValueError("need at least one arm")
        self.counts = [0] * k
        self.means = [0.0] * k
        self.m2 = [0.0] * k
        self.t = 0

    @property
    def k(self) -> int:
        return len(self.counts)

    def update(self, arm: int, x: float) -> "EmpiricalStats":
        if not 0 <= arm < len(self.counts):
            raise IndexError(f"arm {arm} out of range for K={len(self.counts)}")
        if not math.isfinite(x):
            raise ValueError(f"non-finite observation {x!r}")
        n = self.counts[arm] + 1
        delta = x - self.means[arm]
        mean = self.means[arm] + delta / n
        self.m2[arm] += delta * (x - mean)
        self.means[arm] = mean
        self.counts[arm] = n
        self.t += 1
        return self

    def variance(self, arm: int) -> float:
        n = self.counts[arm]
        if n < 2:
            raise ValueError(f"arm {arm} has {n} sample(s); the variance needs at least 2")
        return max(self.m2[arm], 0.0) / (n - 1)

    def sigma_hat(self, floor: float = 0.0) -> list[float]:
        """Per-arm standard deviations, 0 for arms with fewer than 2 samples."""
        out = []
        for n, m2 in zip(self.counts, self.m2):
            s = math.sqrt(max(m2, 0.0) / (n - 1)) if n >= 2 else 0.0
            out.append(s if s > floor else floor)
        return out

    def moments(self, sigma_floor: float = 0.0) -> Moments:
        return Moments(np.array(self.means), np.array(self.sigma_hat(sigma_floor)))

    def allocation(self) -> np.ndarray:
        """Realised pull frequencies ``T_i / t``."""
        if self.t == 0:
            raise ValueError("no pulls yet")
        return np.array(self.counts, dtype=float) / self.t

    def copy(self) -> "EmpiricalStats":
        other = EmpiricalStats(self.k)
        other.counts = list(self.counts)
        other.means = list(self.means)
        other.m2 = list(self.m2)
        other.t = self.t
        return other


def update(stats: EmpiricalStats, arm: int, x: float) -> EmpiricalStats:
    return stats.update(arm, x)


def empirical_sigma(stats: EmpiricalStats, arm: int) -> float:
    return math.sqrt(stats.variance(arm))


def delta_n(delta: float, k: int, n: int, schedule: str = "prop") -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if schedule == "prop":
        return delta / (4.0 * k * n * (n + 1))
    if schedule == "cover":
        return delta / (4.0 * k * n * n * (n + 1))
    raise ValueError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")


@dataclass(frozen=True)
class ConfidenceRadii:
    eps_mu: float
    eps_sigma: float
    delta_n: float


def mean_radius(count: int, dn: float) -> float:
    return math.sqrt(math.log(1.0 / dn) / (2.0 * count))


def sigma_radius(count: int, dn: float) -> float:
    return math.sqrt(2.0 * math.log(2.0 / dn) / count)


def confidence_radii(
    stats: EmpiricalStats, arm: int, p: TradeoffParams, n: int, schedule: str = "prop"
) -> ConfidenceRadii:
    """High-probability radii for the mean and the standard deviation of ``arm``."""
    count = stats.counts[arm]
    if count < 1:
        raise ValueError(f"arm {arm} has not been pulled")
    dn = delta_n(p.delta, stats.k, n, schedule)
    return ConfidenceRadii(mean_radius(count, dn), sigma_radius(count, dn), dn)


def function_error_bound(
    stats: EmpiricalStats, p: TradeoffParams, lambda_min: float, n: int, schedule: str = "prop"
) -> float:
    """Uniform bound on |f(lam; true) - f(lam; estimated)| over the restricted simplex.

    Reported as a diagnostic only. Undefined for ``lambda_min = 0``.
    """
    if lambda_min <= 0.0:
        raise ValueError("the uniform function-error bound needs lambda_min > 0")
    if min(stats.counts) < 1:
        raise ValueError("every arm must be pulled at least once")
    dn = delta_n(p.delta, stats.k, n, schedule)
    worst = min(stats.counts)
    return math.sqrt(2.0 * stats.k * math.log(2.0 / dn) / (lambda_min * worst))


def pointwise_error_bound(lam, eps_mu, eps_sigma, w: float) -> float:
    """Right-hand side of the fixed-allocation error bound:
    ``w * max eps_mu + (1 - w) / sqrt(min lam) * max eps_sigma``."""
    lam = np.asarray(lam, dtype=float)
    return w * float(np.max(eps_mu)) + (1.0 - w) / math.sqrt(float(lam.min())) * float(np.max(eps_sigma))
