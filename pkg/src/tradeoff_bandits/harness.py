"""Seeded Monte-Carlo episodes, metrics and aggregation."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .arms import BanditInstance, RngStream, sampler
from .estimation import EmpiricalStats, delta_n
from .objective import TradeoffParams, concavity_constants, eval_epsilon, eval_f, eval_rho
from .policies import PolicyKind, current_lambda_hat, make_policy, select_arm
from .solver import solve_allocation

log = logging.getLogger(__name__)

# Stream id of the policy's own randomness; arm i uses stream id i.
POLICY_STREAM = 2**32


@dataclass
class EpisodeTrace:
    kind: PolicyKind
    seed: int
    pulled: np.ndarray
    lambda_tilde_checkpoints: dict
    lambda_hat_checkpoints: dict
    final_stats: EmpiricalStats
    fallbacks: int = 0

    @property
    def horizon(self) -> int:
        return len(self.pulled)

    @property
    def steps(self) -> list[int]:
        return sorted(self.lambda_tilde_checkpoints)

    def counts_at(self, n: int) -> np.ndarray:
        return np.bincount(self.pulled[:n], minlength=self.final_stats.k)


@dataclass(frozen=True)
class MetricCurve:
    steps: np.ndarray
    mean: np.ndarray
    q95: np.ndarray
    runs: int


def checkpoint_grid(horizon: int, points: int = 50, extra: Iterable[int] = ()) -> list[int]:
    """Roughly geometric grid of ``points`` steps in ``[1, horizon]``, plus the horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    grid = {int(round(x)) for x in np.geomspace(1, horizon, max(points, 2))}
    grid.add(horizon)
    grid.update(int(s) for s in extra if 1 <= int(s) <= horizon)
    return sorted(grid)


def run_episode(
    kind,
    inst: BanditInstance,
    params: TradeoffParams,
    horizon: int,
    seed: int,
    checkpoints: Optional[Sequence[int]] = None,
    **policy_options,
) -> EpisodeTrace:
    """Play one policy for ``horizon`` steps on reward streams keyed by ``seed``.

    Arm ``i``'s s-th pull returns the s-th draw of stream ``(seed, i)``, so
    policies run with the same seed see identical reward tables.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    state = make_policy(kind, inst.k, params, **policy_options)
    draws = [sampler(arm, RngStream(seed, i)) for i, arm in enumerate(inst.arms)]
    policy_rng = RngStream(seed, POLICY_STREAM)
    checkpoints = set(checkpoint_grid(horizon) if checkpoints is None else checkpoints)
    checkpoints.add(horizon)

    stats = state.stats
    update = stats.update
    pulled = np.empty(horizon, dtype=np.int32)
    tilde: dict[int, np.ndarray] = {}
    hat: dict[int, Optional[np.ndarray]] = {}
    for t in range(1, horizon + 1):
        arm = select_arm(state, t, policy_rng)
        update(arm, draws[arm]())
        pulled[t - 1] = arm
        if t in checkpoints:
            tilde[t] = np.array(stats.counts, dtype=float) / t
            lh = current_lambda_hat(state, t)
            hat[t] = None if lh is None else np.array(lh)
    return EpisodeTrace(state.kind, int(seed), pulled, tilde, hat, stats, state.fallbacks)


def _episode_job(args):
    kind, inst, params, horizon, seed, checkpoints, options = args
    return run_episode(kind, inst, params, horizon, seed, checkpoints, **options)


def run_many(
    kinds: Sequence,
    inst: BanditInstance,
    params: TradeoffParams,
    horizon: int,
    runs: int,
    seed: int = 0,
    checkpoints: Optional[Sequence[int]] = None,
    jobs: int = 1,
    **policy_options,
) -> dict[PolicyKind, list[EpisodeTrace]]:
    """Episodes for every (policy, run); run ``r`` uses seed ``seed + r`` for all policies."""
    kinds = [PolicyKind(k) for k in kinds]
    tasks = [
        (kind, inst, params, horizon, seed + r, checkpoints, policy_options)
        for kind in kinds
        for r in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_episode_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        traces = [_episode_job(t) for t in tasks]
    out: dict[PolicyKind, list[EpisodeTrace]] = {k: [] for k in kinds}
    for tr in sorted(traces, key=lambda tr: (tr.seed, tr.kind.value)):
        out[tr.kind].append(tr)
    return out


def regret(lam, inst: BanditInstance, p: TradeoffParams, f_star: Optional[float] = None) -> float:
    """Pseudo-regret ``f* - f(lam)`` under the true arm parameters."""
    if f_star is None:
        f_star = solve_allocation(inst, p).objective_value
    return float(f_star - eval_f(np.asarray(lam, dtype=float), inst, p))


def rescaled_regret(lam, n: int, inst: BanditInstance, p: TradeoffParams, f_star=None) -> float:
    return math.sqrt(n) * regret(lam, inst, p, f_star)


def _ranking(values) -> list[int]:
    # Arms sorted by decreasing value; ties keep the lower index first.
    return sorted(range(len(values)), key=lambda i: (-values[i], i))


def rank_metrics(mu_hat: Sequence[float], mu: Sequence[float]) -> tuple[float, float]:
    """Relative DCG loss and mean absolute rank displacement of the estimated ranking.

    ``DCG(order) = sum_k mu[order[k]] / log(k + 1)`` with 1-based positions and
    natural logarithms; the relative DCG is ``nan`` unless every true mean is
    positive.
    """
    mu_hat = [float(x) for x in mu_hat]
    mu = [float(x) for x in mu]
    if len(mu_hat) != len(mu):
        raise ValueError(f"length mismatch: {len(mu_hat)} estimates for {len(mu)} arms")
    k = len(mu)
    best = _ranking(mu)
    est = _ranking(mu_hat)

    def dcg(order):
        return sum(mu[arm] / math.log(pos + 1) for pos, arm in enumerate(order, start=1))

    if min(mu) > 0:
        ideal = dcg(best)
        rel_dcg = (ideal - dcg(est)) / ideal
    else:
        rel_dcg = math.nan
    true_pos = {arm: pos for pos, arm in enumerate(best)}
    est_pos = {arm: pos for pos, arm in enumerate(est)}
    rank_err = sum(abs(true_pos[i] - est_pos[i]) for i in range(k)) / k
    return rel_dcg, rank_err


def nearest_rank_quantile(values, q: float = 0.95) -> float:
    """Smallest sample value with at least a fraction ``q`` of the samples at or below it."""
    xs = np.sort(np.asarray(values, dtype=float))
    if xs.size == 0:
        raise ValueError("empty sample")
    idx = max(math.ceil(q * xs.size - 1e-9), 1) - 1
    return float(xs[idx])


def _curve(steps, rows) -> MetricCurve:
    arr = np.asarray(rows, dtype=float)  # (runs, steps)
    with np.errstate(invalid="ignore"):
        mean = arr.mean(axis=0)
    q95 = np.array([nearest_rank_quantile(arr[:, j]) for j in range(arr.shape[1])])
    return MetricCurve(np.asarray(steps), mean, q95, arr.shape[0])


def aggregate(traces: Sequence[EpisodeTrace], inst: BanditInstance, p: TradeoffParams) -> dict[str, MetricCurve]:
    """Per-checkpoint mean and 0.95-quantile of every tracked metric.

    Only checkpoints shared by all traces are reported.
    """
    if not traces:
        raise ValueError("cannot aggregate an empty set of traces")
    traces = sorted(traces, key=lambda tr: (tr.seed, tr.kind.value))
    steps = sorted(set.intersection(*(set(tr.lambda_tilde_checkpoints) for tr in traces)))
    star = solve_allocation(inst, p)
    lam_star, f_star = star.allocation, star.objective_value
    k = inst.k
    nan = np.full(k, np.nan)

    rows: dict[str, list] = {
        "regret": [], "rescaled_regret": [], "lambda_tilde_linf": [], "lambda_hat_linf": [],
        "rho": [], "epsilon": [],
    }
    per_arm_tilde = [[] for _ in range(k)]
    per_arm_hat = [[] for _ in range(k)]
    for tr in traces:
        tl = np.array([tr.lambda_tilde_checkpoints[s] for s in steps])
        hl = np.array([nan if tr.lambda_hat_checkpoints.get(s) is None else tr.lambda_hat_checkpoints[s] for s in steps])
        f = eval_f(tl, inst, p)
        r = f_star - f
        rows["regret"].append(r)
        rows["rescaled_regret"].append(np.sqrt(steps) * r)
        rows["lambda_tilde_linf"].append(np.abs(tl - lam_star).max(axis=1))
        rows["lambda_hat_linf"].append(np.abs(hl - lam_star).max(axis=1))
        rows["rho"].append(eval_rho(tl, inst))
        rows["epsilon"].append(eval_epsilon(tl, inst))
        for i in range(k):
            per_arm_tilde[i].append(tl[:, i])
            per_arm_hat[i].append(hl[:, i])

    curves = {name: _curve(steps, vals) for name, vals in rows.items()}
    for i in range(k):
        curves[f"lambda_tilde_{i + 1}"] = _curve(steps, per_arm_tilde[i])
        curves[f"lambda_hat_{i + 1}"] = _curve(steps, per_arm_hat[i])
    return curves


def forcing_phase_end(k: int, eta: float, plus_one: bool = False) -> int:
    """First step at which the round-robin opening stops forcing.

    Before this step every pull is a forcing pull, taken in round-robin order.
    """
    t = 1
    while True:
        threshold = eta * math.sqrt(t) + (1.0 if plus_one else 0.0)
        if (t - 1) // k >= threshold:
            return t
        t += 1


def phase_diagnostics(inst: BanditInstance, p: TradeoffParams, horizon: Optional[int] = None) -> dict:
    """Theory-side constants for logging next to experiment outputs. Never asserted on."""
    k = inst.k
    n0 = k * (k * p.eta**2 + p.eta * math.sqrt(k) + 1.0)
    rec: dict = {
        "K": k,
        "w": p.w,
        "eta": p.eta,
        "lambda_min": p.lambda_min,
        "delta": p.delta,
        "n0": n0,
        "n0_ceil": math.ceil(n0),
        "forcing_phase_end": forcing_phase_end(k, p.eta),
        "alpha": None,
        "beta": None,
        "alpha_defined": False,
        "beta_defined": False,
        "lambda_star_min": None,
        "n2_over_C": None,
    }
    try:
        rec["lambda_star_min"] = solve_allocation(inst, p).lambda_star_min
    except ValueError as exc:
        log.info("optimal allocation unavailable: %s", exc)
    sigma = inst.sigmas
    if p.w < 1.0 and sigma.min() > 0:
        rec["alpha"] = 3.0 * (1.0 - p.w) * float(sigma.min()) / (4.0 * k)
        rec["alpha_defined"] = True
    if p.w < 1.0 and sigma.min() > 0 and p.lambda_min > 0:
        cc = concavity_constants(inst, p)
        rec["beta"] = cc.beta
        rec["beta_defined"] = True
        lsm = rec["lambda_star_min"]
        if horizon is not None and lsm:
            log_term = math.log(1.0 / delta_n(p.delta, k, horizon))
            rec["n2_over_C"] = k**10 / cc.alpha**4 * log_term**2 / (lsm**8 * p.lambda_min**2)
    return rec


# ---------------------------------------------------------------------------
# CSV output

def fmt(x) -> str:
    return format(float(x), ".17g")


def write_curve(path: os.PathLike, curve: MetricCurve) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "mean", "q95", "runs"])
        for s, m, q in zip(curve.steps, curve.mean, curve.q95):
            wr.writerow([int(s), fmt(m), fmt(q), curve.runs])


def write_allocations(path: os.PathLike, curves: dict[str, MetricCurve], k: int) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "arm", "lambda_tilde_mean", "lambda_hat_mean"])
        steps = curves["lambda_tilde_1"].steps
        for j, s in enumerate(steps):
            for i in range(1, k + 1):
                wr.writerow([int(s), i, fmt(curves[f"lambda_tilde_{i}"].mean[j]), fmt(curves[f"lambda_hat_{i}"].mean[j])])


def write_pareto(path: os.PathLike, rows) -> None:
    rows = list(rows)
    k = len(rows[0][3])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["w", "rho", "epsilon"] + [f"lambda_star_{i}" for i in range(1, k + 1)])
        for w, rho, eps, lam in rows:
            wr.writerow([fmt(w), fmt(rho), fmt(eps)] + [fmt(x) for x in lam])


def write_experiment(out_dir: Path, traces: Sequence[EpisodeTrace], inst: BanditInstance, p: TradeoffParams) -> list[Path]:
    """Aggregate ``traces`` and write one CSV per metric plus the allocations table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = aggregate(traces, inst, p)
    written = []
    for name, curve in curves.items():
        if name.startswith(("lambda_tilde_", "lambda_hat_")) and name[-1].isdigit():
            continue
        path = out_dir / f"{name}.csv"
        write_curve(path, curve)
        written.append(path)
    path = out_dir / "allocations.csv"
    write_allocations(path, curves, inst.k)
    written.append(path)
    return written
