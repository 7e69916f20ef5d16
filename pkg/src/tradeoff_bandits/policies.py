"""Online arm-selection rules.

Arms are 0-indexed. ``t`` is the 1-based index of the step being decided, so
when ``select_arm(state, t)`` is called the statistics hold ``t - 1`` pulls.
Every argmax/argmin breaks ties towards the lowest arm index.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .arms import RngStream
from .estimation import EmpiricalStats, delta_n
from .objective import TradeoffParams
from .solver import DegenerateInstanceError, kkt_allocation

log = logging.getLogger(__name__)

# Empirical deviations are floored here before solving when lambda_min = 0, so
# an arm whose samples happen to coincide does not make the objective degenerate.
SIGMA_FLOOR = 1e-12
NAIVE_UCB_SIGMA_FLOOR = 0.01


class PolicyKind(str, enum.Enum):
    FORCING_BALANCE = "forcing_balance"
    FORCING_BALANCE_NO_TRACK = "forcing_balance_no_track"
    NAIVE_UCB = "naive_ucb"
    UCB1 = "ucb1"
    GAFS_ERROR = "gafs_error"
    UNIFORM = "uniform"


@dataclass
class PolicyState:
    kind: PolicyKind
    stats: EmpiricalStats
    params: TradeoffParams
    last_lambda_hat: Optional[list] = None
    recompute_every: int = 1
    forcing_plus_one: bool = False
    delta_schedule: str = "prop"
    fallbacks: int = 0
    branch: str = ""
    _nu_hint: Optional[float] = field(default=None, repr=False)
    _solved_at: int = field(default=-(10**9), repr=False)

    def __post_init__(self) -> None:
        self.kind = PolicyKind(self.kind)
        if self.recompute_every < 1:
            raise ValueError("recompute_every must be >= 1")

    @property
    def k(self) -> int:
        return self.stats.k


def make_policy(kind, k: int, params: TradeoffParams, **options) -> PolicyState:
    params.check_arms(k)
    return PolicyState(PolicyKind(kind), EmpiricalStats(k), params, **options)


def forcing_arm(state: PolicyState, t: int) -> Optional[int]:
    """Least-pulled arm if its count is below the forcing threshold, else ``None``."""
    counts = state.stats.counts
    u = min(range(len(counts)), key=counts.__getitem__)
    threshold = state.params.eta * math.sqrt(t)
    if state.forcing_plus_one:
        threshold += 1.0
    return u if counts[u] < threshold else None


def track(lambda_hat, counts, t: int) -> int:
    """Arm with the largest deficit ``lambda_hat_i - T_i / t``."""
    best, best_gap = 0, -math.inf
    for i, (lh, c) in enumerate(zip(lambda_hat, counts)):
        gap = lh - c / t
        if gap > best_gap:
            best, best_gap = i, gap
    return best


def _solve(state: PolicyState, means, sigmas, remember: bool = True) -> list:
    p = state.params
    lam, nu, *_ = kkt_allocation(means, sigmas, p.w, p.lambda_min, nu_hint=state._nu_hint)
    if remember:
        state._nu_hint = nu
    return lam


def estimated_allocation(state: PolicyState, t: int) -> list:
    """Optimal allocation for the current empirical means and deviations.

    Raises :class:`DegenerateInstanceError` when every deviation is zero and
    ``lambda_min > 0`` (with ``lambda_min = 0`` deviations are floored instead).
    """
    if state.last_lambda_hat is not None and t - state._solved_at < state.recompute_every:
        return state.last_lambda_hat
    floor = SIGMA_FLOOR if state.params.lambda_min == 0.0 else 0.0
    lam = _solve(state, state.stats.means, state.stats.sigma_hat(floor))
    state.last_lambda_hat = lam
    state._solved_at = t
    return lam


def _forced_or_estimate(state: PolicyState, t: int):
    u = forcing_arm(state, t)
    if u is not None:
        state.branch = "forcing"
        return u, None
    try:
        return None, estimated_allocation(state, t)
    except DegenerateInstanceError:
        state.fallbacks += 1
        log.debug("degenerate empirical instance at t=%d; forcing the least-pulled arm", t)
        state.branch = "fallback"
        counts = state.stats.counts
        return min(range(len(counts)), key=counts.__getitem__), None


def forcing_balance_step(state: PolicyState, t: int) -> int:
    """Forcing when some arm is under-sampled, tracking of the estimated optimum otherwise."""
    forced, lam = _forced_or_estimate(state, t)
    if forced is not None:
        return forced
    state.branch = "tracking"
    return track(lam, state.stats.counts, t)


def categorical(weights, u: float) -> int:
    acc = 0.0
    last = 0
    for i, wi in enumerate(weights):
        if wi > 0.0:
            last = i
        acc += wi
        if u < acc:
            return i
    return last


def forcing_balance_no_track_step(state: PolicyState, t: int, rng: RngStream) -> int:
    """As ForcingBalance, but the non-forced arm is drawn at random from the estimate."""
    forced, lam = _forced_or_estimate(state, t)
    if forced is not None:
        return forced
    state.branch = "sampling"
    return categorical(lam, rng.random())


def upper_bound_allocation(state: PolicyState, t: int, remember: bool = True) -> list:
    """Maximiser of the optimistic objective: inflated means, deflated deviations."""
    stats = state.stats
    dn = delta_n(state.params.delta, stats.k, t, state.delta_schedule)
    log_mu = math.log(1.0 / dn)
    log_sigma = math.log(2.0 / dn)
    means = []
    sigmas = []
    for c, m, s in zip(stats.counts, stats.means, stats.sigma_hat()):
        means.append(m + math.sqrt(log_mu / (2.0 * c)))
        sigmas.append(max(s - math.sqrt(2.0 * log_sigma / c), NAIVE_UCB_SIGMA_FLOOR))
    lam = _solve(state, means, sigmas, remember)
    if remember:
        state.last_lambda_hat = lam
    return lam


def naive_ucb_step(state: PolicyState, t: int) -> int:
    """Optimism on the whole objective, with no forced exploration."""
    k = state.k
    if t <= 2 * k:
        state.branch = "init"
        return (t - 1) % k
    state.branch = "tracking"
    return track(upper_bound_allocation(state, t), state.stats.counts, t)


def error_allocation(stats: EmpiricalStats) -> list:
    """Error-minimising allocation ``sigma_i^{2/3} / sum_j sigma_j^{2/3}`` from estimates."""
    weights = [s ** (2.0 / 3.0) for s in stats.sigma_hat()]
    total = sum(weights)
    if total == 0.0:
        return [1.0 / stats.k] * stats.k
    return [x / total for x in weights]


def baseline_step(state: PolicyState, t: int) -> int:
    kind = state.kind
    stats = state.stats
    k = stats.k
    if kind is PolicyKind.UNIFORM:
        state.branch = "round_robin"
        return (t - 1) % k
    if kind is PolicyKind.UCB1:
        if t <= k:
            state.branch = "init"
            return t - 1
        state.branch = "ucb"
        two_log_t = 2.0 * math.log(t)
        best, best_val = 0, -math.inf
        for i, (c, m) in enumerate(zip(stats.counts, stats.means)):
            val = m + math.sqrt(two_log_t / c)
            if val > best_val:
                best, best_val = i, val
        return best
    if kind is PolicyKind.GAFS_ERROR:
        u = forcing_arm(state, t)
        if u is not None:
            state.branch = "forcing"
            return u
        state.branch = "tracking"
        lam = error_allocation(stats)
        state.last_lambda_hat = lam
        return track(lam, stats.counts, t)
    raise ValueError(f"{kind.value} is not a baseline policy")


def select_arm(state: PolicyState, t: int, rng: Optional[RngStream] = None) -> int:
    if t < 1:
        raise ValueError("steps are 1-based")
    kind = state.kind
    if kind is PolicyKind.FORCING_BALANCE:
        return forcing_balance_step(state, t)
    if kind is PolicyKind.FORCING_BALANCE_NO_TRACK:
        if rng is None:
            raise ValueError("the no-tracking variant needs a random stream")
        return forcing_balance_no_track_step(state, t, rng)
    if kind is PolicyKind.NAIVE_UCB:
        return naive_ucb_step(state, t)
    return baseline_step(state, t)


def current_lambda_hat(state: PolicyState, t: int) -> Optional[list]:
    """The policy's own target allocation given the present statistics, if it has one."""
    kind = state.kind
    if kind in (PolicyKind.FORCING_BALANCE, PolicyKind.FORCING_BALANCE_NO_TRACK):
        floor = SIGMA_FLOOR if state.params.lambda_min == 0.0 else 0.0
        try:
            return _solve(state, state.stats.means, state.stats.sigma_hat(floor), remember=False)
        except DegenerateInstanceError:
            return None
    if kind is PolicyKind.NAIVE_UCB:
        if min(state.stats.counts) < 1:
            return None
        return upper_bound_allocation(state, max(t, 1), remember=False)
    if kind is PolicyKind.GAFS_ERROR:
        return error_allocation(state.stats)
    return None
