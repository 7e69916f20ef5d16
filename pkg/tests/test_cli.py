import subprocess
import sys

import pytest
import yaml

from tradeoff_bandits.cli import main
from tradeoff_bandits.config import ConfigError, ExperimentConfig, parse_config

SMALL = """
name: tiny
arms:
  - [1.0, 0.05]
  - [1.5, 0.1]
  - {mean: 0.5, variance: 0.25, family: scaled_bernoulli}
w: 0.7
horizon: 300
runs: 3
seed: 4
policies: [forcing_balance, uniform, ucb1]
checkpoints: {points: 10, extra: [150]}
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    again = parse_config(yaml.safe_load(cfg.dump()))
    assert again == cfg
    assert again.dump() == cfg.dump()


def test_round_trip_of_custom_config():
    cfg = parse_config(yaml.safe_load(SMALL))
    assert cfg.arms[0].family == "gaussian" and cfg.arms[2].family == "scaled_bernoulli"
    again = parse_config(yaml.safe_load(cfg.dump()))
    assert again == cfg
    sweep = parse_config({"w": [0, 0.5, 1]})
    assert parse_config(yaml.safe_load(sweep.dump())) == sweep
    assert sweep.weights == [0.0, 0.5, 1.0]


@pytest.mark.parametrize(
    "data, key",
    [
        ({"horizn": 10}, "horizn"),
        ({"options": {"recompute": 2}}, "recompute"),
        ({"checkpoints": {"every": True}}, "every"),
        ({"arms": [{"mean": 1, "variance": 1, "colour": "red"}, [0, 1]]}, "colour"),
        ({"arms": [[0.9, 0.25, "scaled_bernoulli"], [0, 1]]}, "arms[0]"),
        ({"arms": [[0, 1]]}, "arms"),
        ({"w": 1.5}, "w"),
        ({"w": "high"}, "w"),
        ({"lambda_min": 0.5}, "lambda_min"),
        ({"horizon": 0}, "horizon"),
        ({"runs": 2.5}, "runs"),
        ({"policies": ["thompson"]}, "policies"),
        ({"options": {"delta_schedule": "other"}}, "delta_schedule"),
        ({"options": {"forcing_rule": "loose"}}, "forcing_rule"),
    ],
)
def test_validation_names_offending_key(data, key):
    with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
        parse_config(data)


def test_print_defaults(capsys):
    assert main(["solve", "--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert parse_config(yaml.safe_load(out)) == ExperimentConfig()


def test_solve_writes_table(tmp_path, capsys):
    cfg = write(tmp_path, "w: 0.9\n")
    assert main(["solve", "--config", str(cfg), "--output", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "lambda*=0.890200" in out and "alpha=" in out and "beta=undefined" in out
    table = (tmp_path / "out" / "synthetic5-solve" / "allocation.csv").read_text().splitlines()
    assert table[0] == "w,arm,mean,variance,lambda_star"
    assert len(table) == 6
    manifest = yaml.safe_load((tmp_path / "out" / "synthetic5-solve" / "manifest.yaml").read_text())
    assert manifest["version"] == "0.1.0" and manifest["config"]["w"] == 0.9


def test_symmetric_solve(tmp_path):
    cfg = write(tmp_path, "arms: [[1, 1], [1, 1]]\nw: 0.5\noutput_dir: {}\n".format(tmp_path))
    assert main(["solve", "--config", str(cfg)]) == 0
    rows = (tmp_path / "synthetic5-solve" / "allocation.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[-1]) for r in rows] == [0.5, 0.5]


def test_pareto_monotone_columns(tmp_path):
    cfg = write(tmp_path, f"output_dir: {tmp_path}\n")
    assert main(["pareto", "--config", str(cfg)]) == 0
    lines = (tmp_path / "synthetic5-pareto" / "pareto.csv").read_text().splitlines()
    rows = [list(map(float, line.split(","))) for line in lines[1:]]
    assert len(rows) == 20
    for col in (1, 2):
        assert all(b[col] >= a[col] - 1e-12 for a, b in zip(rows, rows[1:]))


def test_simulate_layout_and_determinism(tmp_path):
    cfg = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--output", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--output", str(b), "--jobs", "2"]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) > 10
    for rel in files:
        if rel.name != "manifest.yaml":  # echoes the output directory
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    before = {rel: (a / rel).read_bytes() for rel in files}
    assert main(["simulate", "--config", str(cfg), "--output", str(a)]) == 0
    assert {rel: (a / rel).read_bytes() for rel in files} == before
    exp = a / "tiny-forcing_balance"
    for name in ("regret.csv", "rescaled_regret.csv", "allocations.csv", "diagnostics.json", "manifest.yaml"):
        assert (exp / name).is_file()
    assert "150," in (exp / "regret.csv").read_text()


def test_simulate_single_run_mean_is_trace(tmp_path):
    cfg = write(tmp_path, SMALL.replace("runs: 3", "runs: 1"))
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path)]) == 0
    for line in (tmp_path / "tiny-uniform" / "rho.csv").read_text().splitlines()[1:]:
        step, mean, q95, runs = line.split(",")
        assert mean == q95 and runs == "1"


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "b"), "--seed", "99"])
    f = "tiny-forcing_balance/regret.csv"
    assert (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()
    manifest = yaml.safe_load((tmp_path / "b" / "tiny-forcing_balance" / "manifest.yaml").read_text())
    assert manifest["config"]["seed"] == 99


def test_rank_table(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["rank", "--config", str(cfg), "--output", str(tmp_path)]) == 0
    lines = (tmp_path / "tiny-rank" / "rank.csv").read_text().splitlines()
    assert lines[0] == "policy,w,rel_dcg,rank_err,rho,epsilon,rescaled_regret,runs"
    assert [l.split(",")[0] for l in lines[1:]] == ["forcing_balance", "uniform", "ucb1"]


def test_rank_marks_undefined_dcg(tmp_path):
    cfg = write(tmp_path, "arms: [[0.0, 1.0], [1.0, 1.0]]\nhorizon: 50\nruns: 2\n")
    assert main(["rank", "--config", str(cfg), "--output", str(tmp_path)]) == 0
    row = (tmp_path / "synthetic5-rank" / "rank.csv").read_text().splitlines()[1]
    assert row.split(",")[2] == "undefined"


def test_errors_exit_nonzero_with_one_line(tmp_path, capsys):
    assert main(["simulate", "--config", str(write(tmp_path, "bogus: 1\n"))]) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "bogus" in err
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["solve"]) == 2
    assert main(["solve", "--config", str(write(tmp_path, "w: [0.5\n"))]) == 2
    assert main(["simulate", "--config", str(write(tmp_path, SMALL)), "--jobs", "0"]) == 2
    capsys.readouterr()
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve", "--config", str(write(tmp_path, "w: 0.5\n")), "--output", str(blocker)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[-1].startswith("error: solve:")


def test_degenerate_instance_reported(tmp_path, capsys):
    cfg = write(tmp_path, "arms: [[0.0, 0.0], [1.0, 0.0]]\nw: 0.5\n")
    assert main(["solve", "--config", str(cfg), "--output", str(tmp_path)]) == 1
    assert "zero variance" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "tradeoff_bandits", "solve", "--print-defaults"],
        capture_output=True, text=True, check=True,
    )
    assert "arms:" in res.stdout


def test_shipped_configs_are_valid():
    from pathlib import Path

    from tradeoff_bandits.config import load_config

    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert configs
    for path in configs:
        cfg = load_config(path)
        assert parse_config(yaml.safe_load(cfg.dump())) == cfg
