"""Command-line entry point: ``solve``, ``pareto``, ``simulate`` and ``rank``.

Every subcommand reads one YAML config (see ``solve --print-defaults``) and
writes under ``<output_dir>/<experiment>/``, next to a ``manifest.yaml``
echoing the resolved config and the package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .harness import (
    fmt,
    phase_diagnostics,
    rank_metrics,
    run_many,
    write_experiment,
    write_pareto,
)
from .objective import eval_epsilon, eval_f, eval_rho
from .solver import DegenerateInstanceError, pareto_sweep, solve_allocation

log = logging.getLogger("tradeoff_bandits")

DEFAULT_SWEEP = [round(0.05 * i, 2) for i in range(20)]  # 0, 0.05, ..., 0.95


def _w_tag(w: float) -> str:
    return f"w{w:g}"


def _experiment_dir(cfg: ExperimentConfig, *parts: str) -> Path:
    name = "-".join([cfg.name, *parts])
    return Path(cfg.output_dir) / name


def _write_manifest(out: Path, cfg: ExperimentConfig, command: str, extra: Optional[dict] = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"version": __version__, "command": command, "config": cfg.to_dict()}
    if extra:
        doc.update(extra)
    path = out / "manifest.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
    return path


def _write_json(path: Path, rec) -> Path:
    path.write_text(json.dumps(rec, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _opt(x) -> str:
    return "undefined" if x is None else f"{x:.6g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: ExperimentConfig, args) -> list[Path]:
    inst = cfg.instance()
    out = _experiment_dir(cfg, "solve")
    written = [_write_manifest(out, cfg, "solve")]
    path = out / "allocation.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["w", "arm", "mean", "variance", "lambda_star"])
        for w in cfg.weights:
            p = cfg.params(w)
            rep = solve_allocation(inst, p)
            diag = phase_diagnostics(inst, p)
            print(f"w={w:g} lambda_min={p.lambda_min:g}")
            for i, (m, v, lam) in enumerate(zip(inst.means, inst.variances, rep.allocation), start=1):
                print(f"  arm {i}: mean={m:g} variance={v:g} lambda*={lam:.6f}")
                wr.writerow([fmt(w), i, fmt(m), fmt(v), fmt(lam)])
            print(
                f"  f*={rep.objective_value:.10g} lambda*_min={rep.lambda_star_min:.6g} "
                f"alpha={_opt(diag['alpha'])} beta={_opt(diag['beta'])}"
                + ("" if rep.unique else " (not unique: tied best means)")
            )
    written.append(path)
    return written


def cmd_pareto(cfg: ExperimentConfig, args) -> list[Path]:
    inst = cfg.instance()
    ws = cfg.weights if cfg.is_sweep else DEFAULT_SWEEP
    out = _experiment_dir(cfg, "pareto")
    written = [_write_manifest(out, cfg, "pareto", {"weights": list(ws)})]
    rows = pareto_sweep(inst, ws, cfg.lambda_min)
    path = out / "pareto.csv"
    write_pareto(path, rows)
    written.append(path)
    for w, rho, eps, _ in rows:
        print(f"w={w:g} rho={rho:.6g} epsilon={eps:.6g}")
    return written


def _run(cfg: ExperimentConfig, w: float, jobs: int):
    inst = cfg.instance()
    p = cfg.params(w)
    steps = cfg.checkpoints.steps(cfg.horizon)
    traces = run_many(
        cfg.policies, inst, p, cfg.horizon, cfg.runs, seed=cfg.seed,
        checkpoints=steps, jobs=jobs, **cfg.options.as_kwargs(),
    )
    return inst, p, traces


def cmd_simulate(cfg: ExperimentConfig, args) -> list[Path]:
    written = []
    for w in cfg.weights:
        inst, p, traces = _run(cfg, w, args.jobs)
        diag = phase_diagnostics(inst, p, cfg.horizon)
        for kind, trs in traces.items():
            parts = ([_w_tag(w)] if cfg.is_sweep else []) + [kind.value]
            out = _experiment_dir(cfg, *parts)
            written.append(_write_manifest(out, cfg, "simulate", {"policy": kind.value, "w": w}))
            written.extend(write_experiment(out, trs, inst, p))
            rec = dict(diag, policy=kind.value, runs=len(trs), fallbacks=sum(t.fallbacks for t in trs))
            written.append(_write_json(out / "diagnostics.json", rec))
            log.info("%s: wrote %s", kind.value, out)
    return written


RANK_COLUMNS = ["policy", "w", "rel_dcg", "rank_err", "rho", "epsilon", "rescaled_regret", "runs"]


def rank_table(traces, inst, p) -> list[dict]:
    """Run-mean ranking and tradeoff metrics at the horizon, one row per policy."""
    f_star = solve_allocation(inst, p).objective_value
    mu = inst.means
    rows = []
    for kind, trs in traces.items():
        dcg, err, rho, eps, rr = [], [], [], [], []
        for tr in trs:
            n = tr.horizon
            lam = tr.lambda_tilde_checkpoints[n]
            d, e = rank_metrics(tr.final_stats.means, mu)
            dcg.append(d)
            err.append(e)
            rho.append(float(eval_rho(lam, inst)))
            eps.append(float(eval_epsilon(lam, inst)))
            rr.append(math.sqrt(n) * (f_star - float(eval_f(lam, inst, p))))
        rows.append({
            "policy": kind.value,
            "w": p.w,
            "rel_dcg": None if any(math.isnan(x) for x in dcg) else float(np.mean(dcg)),
            "rank_err": float(np.mean(err)),
            "rho": float(np.mean(rho)),
            "epsilon": float(np.mean(eps)),
            "rescaled_regret": float(np.mean(rr)),
            "runs": len(trs),
        })
    return rows


def cmd_rank(cfg: ExperimentConfig, args) -> list[Path]:
    out = _experiment_dir(cfg, "rank")
    written = [_write_manifest(out, cfg, "rank")]
    rows = []
    for w in cfg.weights:
        inst, p, traces = _run(cfg, w, args.jobs)
        rows.extend(rank_table(traces, inst, p))
    path = out / "rank.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(RANK_COLUMNS)
        for r in rows:
            wr.writerow([
                r["policy"], fmt(r["w"]),
                "undefined" if r["rel_dcg"] is None else fmt(r["rel_dcg"]),
                fmt(r["rank_err"]), fmt(r["rho"]), fmt(r["epsilon"]), fmt(r["rescaled_regret"]), r["runs"],
            ])
    written.append(path)
    for r in rows:
        dcg = "undefined" if r["rel_dcg"] is None else f"{r['rel_dcg']:.4g}"
        print(
            f"{r['policy']:<26} w={r['w']:g} rel_dcg={dcg} rank_err={r['rank_err']:.4g} "
            f"rho={r['rho']:.4g} epsilon={r['epsilon']:.4g} rescaled_regret={r['rescaled_regret']:.4g}"
        )
    return written


COMMANDS = {"solve": cmd_solve, "pareto": cmd_pareto, "simulate": cmd_simulate, "rank": cmd_rank}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tradeoff-bandits",
        description="Reward vs. estimation-error tradeoff in multi-armed bandits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"{name} from a YAML config")
        sp.add_argument("--config", type=Path, help="YAML experiment config")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for episodes (default 1)")
        sp.add_argument("--seed", type=int, help="base seed, overrides the config")
        sp.add_argument("--output", type=Path, help="output directory, overrides the config")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            sp.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return parser


def _resolve(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.output is not None:
        cfg.output_dir = str(args.output)
    if args.jobs < 1:
        raise ConfigError("--jobs: must be >= 1")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "print_defaults", False):
        sys.stdout.write(ExperimentConfig().dump())
        return 0
    try:
        cfg = _resolve(args)
        written = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateInstanceError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else exc.__class__.__name__
        print(f"error: {args.command}: {msg}", file=sys.stderr)
        return 1
    missing = [p for p in written if not Path(p).is_file()]
    if missing:
        print(f"error: {args.command}: output not written: {missing[0]}", file=sys.stderr)
        return 1
    log.info("wrote %d files", len(written))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
