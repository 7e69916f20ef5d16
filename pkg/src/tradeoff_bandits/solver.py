"""Optimal allocation of the tradeoff objective on the (restricted) simplex.

Stationarity of the Lagrangian gives, for every arm above the floor,

    w * mu_i + (1 - w) * sigma_i / (2K * lam_i^{3/2}) = nu

so ``lam_i(nu) = (c_i / (nu - w mu_i))^{2/3}`` with ``c_i = (1 - w) sigma_i / (2K)``.
The clamped total ``S(nu) = sum_i max(lam_min, lam_i(nu))`` is continuous,
strictly decreasing and convex on ``nu > w * max_i mu_i``; we locate
``S(nu) = 1`` by a bracketed search that takes Newton steps from the left of
the root (where convexity keeps them inside the bracket) and falls back to
bisection otherwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .objective import HasMoments, TradeoffParams, eval_epsilon, eval_f, eval_rho

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
_MAX_ITER = 400


class DegenerateInstanceError(ValueError):
    """The objective has no unique maximiser (e.g. every sigma is zero and w < 1)."""


@dataclass(frozen=True)
class SolveReport:
    allocation: np.ndarray
    objective_value: float
    kkt_multiplier: float
    active_floor_set: frozenset = field(default_factory=frozenset)
    iterations: int = 0
    residual: float = 0.0
    unique: bool = True

    @property
    def lambda_star_min(self) -> float:
        return float(self.allocation.min())


def _linear_allocation(mu, lam_min):
    # Linear objective: floors everywhere, the remaining mass on the best arm.
    k = len(mu)
    best = max(mu)
    top = mu.index(best)
    lam = [lam_min] * k
    lam[top] = 1.0 - (k - 1) * lam_min
    unique = mu.count(best) == 1 or lam_min * k >= 1.0
    floors = frozenset(i for i in range(k) if i != top)
    return lam, top, unique, floors


def kkt_allocation(mu, sigma, w, lam_min=0.0, tol=DEFAULT_TOL, nu_hint=None):
    """Solve the KKT system on plain sequences of floats.

    Returns ``(lam, nu, floors, iterations, unique)`` with ``lam`` a list. This
    is the hot path used by the online policies; :func:`solve_allocation` wraps
    it with validation and reporting.
    """
    k = len(mu)
    mu = [float(m) for m in mu]
    sigma = [float(s) for s in sigma]
    if lam_min * k >= 1.0 - 1e-15:
        return [1.0 / k] * k, math.nan, frozenset(range(k)), 0, True

    noisy = [i for i in range(k) if sigma[i] > 0.0]
    if w >= 1.0 or not noisy:
        if w < 1.0:
            raise DegenerateInstanceError("every arm has zero variance and w < 1")
        lam, top, unique, floors = _linear_allocation(mu, lam_min)
        return lam, w * mu[top], floors, 0, unique

    quiet = [i for i in range(k) if sigma[i] == 0.0]
    scale = (1.0 - w) / (2.0 * k)
    c = [scale * sigma[i] for i in noisy]
    base = max(w * mu[i] for i in noisy)
    top_quiet = None
    if quiet and w > 0.0:
        best_quiet = max(mu[i] for i in quiet)
        if w * best_quiet > base:
            base = w * best_quiet
            top_quiet = [i for i in quiet if mu[i] == best_quiet]
    gaps = [base - w * mu[i] for i in noisy]
    quiet_mass = lam_min * len(quiet)
    target = 1.0 - quiet_mass
    two_thirds = 2.0 / 3.0

    def total(d):
        s = 0.0
        ds = 0.0
        for ci, ai in zip(c, gaps):
            x = d + ai
            g = (ci / x) ** two_thirds
            if g > lam_min:
                s += g
                ds -= two_thirds * g / x
            else:
                s += lam_min
        return s, ds

    iterations = 0
    if top_quiet is not None:
        s0 = sum(max(lam_min, (ci / ai) ** two_thirds) for ci, ai in zip(c, gaps))
        if s0 <= target:
            # A zero-variance arm carries the best mean: it absorbs the slack.
            lam = [lam_min] * k
            for i, ci, ai in zip(noisy, c, gaps):
                lam[i] = max(lam_min, (ci / ai) ** two_thirds)
            lam[top_quiet[0]] += 1.0 - lam_min * len(quiet) - sum(lam[i] for i in noisy)
            floors = frozenset(i for i in range(k) if i != top_quiet[0] and lam[i] <= lam_min)
            return lam, base, floors, 0, len(top_quiet) == 1

    # Left end: either the arm whose lam_i(nu) = 1, or nu = base when base is
    # set by a zero-variance arm (then every gap is positive and S(0) > target).
    d_left = max(0.0, max(ci - ai for ci, ai in zip(c, gaps)))
    d = d_left
    if nu_hint is not None and math.isfinite(nu_hint):
        dh = nu_hint - base
        if dh > d_left:
            sh, dsh = total(dh)
            iterations += 1
            if sh >= target:
                d = dh
            elif dsh < 0.0:
                dn = dh - (sh - target) / dsh
                if dn > d_left:
                    sn, _ = total(dn)
                    iterations += 1
                    if sn >= target:
                        d = dn

    lo, hi = d, math.inf
    while iterations < _MAX_ITER:
        s, ds = total(d)
        iterations += 1
        err = s - target
        if abs(err) <= tol:
            break
        if err > 0.0:
            lo = d
        else:
            hi = d
        step = d - err / ds if ds < 0.0 else math.inf
        if lo < step < hi and step != d:
            d = step
        elif math.isinf(hi):
            d = 2.0 * d + 1e-300 if d > 0.0 else max(c)
        else:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            d = mid
    else:
        log.warning("KKT search hit the iteration cap (residual %.3g)", err)

    lam = [lam_min] * k
    floors = set(quiet)
    free_sum = 0.0
    for i, ci, ai in zip(noisy, c, gaps):
        g = (ci / (d + ai)) ** two_thirds
        if g > lam_min:
            lam[i] = g
            free_sum += g
        else:
            floors.add(i)
    free_mass = 1.0 - lam_min * len(floors)
    if free_sum > 0.0:
        ratio = free_mass / free_sum
        for i in noisy:
            if i not in floors:
                lam[i] *= ratio
    return lam, base + d, frozenset(floors), iterations, True


def _residual(lam: np.ndarray, lam_min: float) -> float:
    return abs(float(lam.sum()) - 1.0) + max(0.0, float(np.max(lam_min - lam)))


def solve_allocation(inst: HasMoments, p: TradeoffParams, tol: float = DEFAULT_TOL) -> SolveReport:
    """Maximiser of the tradeoff objective over the simplex restricted to ``p.lambda_min``."""
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    mu = np.asarray(inst.means, dtype=float)
    sigma = np.asarray(inst.sigmas, dtype=float)
    k = mu.shape[0]
    p.check_arms(k)
    lam, nu, floors, iterations, unique = kkt_allocation(
        mu.tolist(), sigma.tolist(), p.w, p.lambda_min, tol
    )
    if not unique:
        log.warning("optimal allocation is not unique (tied best means); lowest index chosen")
    lam = np.asarray(lam)
    return SolveReport(
        allocation=lam,
        objective_value=float(eval_f(lam, inst, p)),
        kkt_multiplier=float(nu),
        active_floor_set=floors,
        iterations=iterations,
        residual=_residual(lam, p.lambda_min),
        unique=unique,
    )


def _grid(k: int, n: int, j_min: int):
    """All integer compositions ``j`` of ``n`` into ``k`` parts with ``j_i >= j_min``."""
    rest = n - j_min * k
    if rest < 0:
        return np.empty((0, k), dtype=np.int64)
    if k == 2:
        a = np.arange(rest + 1)
        pts = np.stack([a, rest - a], axis=1)
    elif k == 3:
        a, b = np.meshgrid(np.arange(rest + 1), np.arange(rest + 1), indexing="ij")
        keep = a + b <= rest
        a, b = a[keep], b[keep]
        pts = np.stack([a, b, rest - a - b], axis=1)
    else:
        chunks = []
        for a in range(rest + 1):
            sub = _grid(k - 1, rest - a, 0)
            chunks.append(np.column_stack([np.full(len(sub), a), sub]))
        pts = np.concatenate(chunks)
    return pts + j_min


def brute_force_allocation(inst: HasMoments, p: TradeoffParams, grid_resolution: int) -> np.ndarray:
    """Best point of the grid ``{j / grid_resolution}`` inside the restricted simplex.

    Exhaustive, so only meant as an independent check for ``K <= 4``.
    """
    k = len(inst.means)
    if k > 4:
        raise ValueError(f"exhaustive grid search is limited to K <= 4, got K={k}")
    if grid_resolution < 10:
        raise ValueError("grid_resolution must be >= 10")
    p.check_arms(k)
    n = int(grid_resolution)
    if p.lambda_min * k >= 1.0 - 1e-15:
        return np.full(k, 1.0 / k)
    j_min = math.ceil(p.lambda_min * n - 1e-9)
    pts = _grid(k, n, j_min)
    if len(pts) == 0:
        raise ValueError("grid has no point inside the restricted simplex; raise grid_resolution")
    values = eval_f(pts / n, inst, p)
    return pts[int(np.argmax(values))] / n


def pareto_point(inst: HasMoments, w: float, lambda_min: float = 0.0) -> tuple[float, float]:
    """(average reward, estimation error) of the optimal allocation for weight ``w``."""
    lam = solve_allocation(inst, TradeoffParams(w=w, lambda_min=lambda_min)).allocation
    return float(eval_rho(lam, inst)), float(eval_epsilon(lam, inst))


def pareto_sweep(inst: HasMoments, ws, lambda_min: float = 0.0) -> list[tuple[float, float, float, np.ndarray]]:
    """Rows ``(w, rho, epsilon, lambda_star)`` over a sweep of weights."""
    rows = []
    for w in ws:
        lam = solve_allocation(inst, TradeoffParams(w=float(w), lambda_min=lambda_min)).allocation
        rows.append((float(w), float(eval_rho(lam, inst)), float(eval_epsilon(lam, inst)), lam))
    return rows
