import json

import pytest

from macc import cli, harness
from macc.config import load_config
from macc.harness import FULL_MATRIX, ExperimentSpec, run_experiment
from macc.metrics import AGGREGATE_COLUMNS, CELL_COLUMNS, read_csv

TINY = ["topology.sim_duration=1.0", "topology.n_flows=2", "training.episodes=1",
        "training.minibatch=4", "training.hidden=[8]"]


def _spec(tmp_path, cells, seeds=(0,), extra=()):
    cfg = load_config(overrides=TINY + [f"experiment.cells={list(cells)!r}",
                                        f"experiment.seeds={list(seeds)!r}", *extra])
    return ExperimentSpec.from_config(cfg, tmp_path)


def test_single_cell_single_seed(tmp_path):
    res = run_experiment(_spec(tmp_path, ["droptail+newreno"]))
    rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    assert list(rows[0]) == CELL_COLUMNS
    assert list(read_csv(tmp_path / "aggregate.csv")[0]) == AGGREGATE_COLUMNS
    assert res.ok
    cell = tmp_path / "droptail+newreno" / "seed0"
    assert {"epochs.csv", "episodes.csv", "info.jsonl"} <= {p.name for p in cell.iterdir()}
    assert (tmp_path / "config.json").exists()


def test_full_matrix_rows(tmp_path):
    res = run_experiment(_spec(tmp_path, FULL_MATRIX, seeds=(0, 1)))
    assert len(res.rows) == 20 and res.ok
    assert [a["n_seeds"] for a in res.aggregates] == [2] * 10
    assert (tmp_path / "macc" / "seed1" / "models" / "agent2.qnet").exists()
    assert not (tmp_path / "red+newreno" / "seed0" / "models").exists()


def test_aggregate_is_seed_mean(tmp_path):
    res = run_experiment(_spec(tmp_path, ["red+newreno"], seeds=(0, 1, 2)))
    vals = [r["mean_throughput_mbps"] for r in res.rows]
    assert res.aggregates[0]["mean_throughput_mbps"] == pytest.approx(sum(vals) / 3)


def test_failed_cell_is_recorded(tmp_path, monkeypatch):
    real = harness.simulate

    def flaky(sc, *a, **kw):
        if sc.aqm.kind == "codel":
            raise RuntimeError("boom")
        return real(sc, *a, **kw)

    monkeypatch.setattr(harness, "simulate", flaky)
    res = run_experiment(_spec(tmp_path, ["codel+newreno", "red+newreno"]))
    assert [r["status"] for r in res.rows] == ["failed", "ok"]
    assert "boom" in (tmp_path / "codel+newreno" / "seed0" / "error.txt").read_text()
    assert [a["n_seeds"] for a in res.aggregates] == [0, 1]


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_rerun_is_byte_identical(tmp_path):
    cells = ["red+rl", "macc"]
    run_experiment(_spec(tmp_path / "a", cells))
    run_experiment(_spec(tmp_path / "b", cells))
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys()
    assert {k for k in a if a[k] != b[k]} == set()


def test_stale_cell_dir_replaced(tmp_path):
    spec = _spec(tmp_path, ["macc"])
    run_experiment(spec)
    (tmp_path / "macc" / "seed0" / "leftover").write_text("x")
    run_experiment(spec)
    assert not (tmp_path / "macc" / "seed0" / "leftover").exists()


def test_parallel_matches_serial(tmp_path):
    cells = ["red+newreno", "codel+fixedrate"]
    run_experiment(_spec(tmp_path / "s", cells, seeds=(0, 1)))
    run_experiment(_spec(tmp_path / "p", cells, seeds=(0, 1), extra=["experiment.workers=2"]))
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


# ---------------------------------------------------------------- CLI


def _cli(*args):
    flags = []
    for o in TINY:
        flags += ["--set", o]
    return cli.main([*args, *flags])


def test_cli_train_evaluate_inspect(tmp_path, capsys):
    out = tmp_path / "run"
    assert _cli("train", "--out", str(out), "--set", "transport.kind='rl'", "--set", "aqm.kind='rl'") == 0
    assert (out / "models" / "agent1.qnet").exists()
    assert _cli("train", "--out", str(out), "--set", "transport.kind='rl'", "--set", "aqm.kind='rl'") == 0
    assert "resumed from" in capsys.readouterr().out
    assert _cli("evaluate", "--out", str(out), "--set", "transport.kind='rl'", "--set", "aqm.kind='rl'") == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["steps"] == 5
    assert cli.main(["inspect-model", str(out / "models" / "agent1.qnet")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["layer_dims"] == [15, 8, 4] and info["finite"]


def test_cli_compare(tmp_path, capsys):
    assert _cli("compare", "--out", str(tmp_path), "--set", "experiment.cells=['red+newreno']") == 0
    assert "red+newreno" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert _cli("train", "--out", str(tmp_path), "--set", "training.gamma=2.0") == 2
    assert "training.gamma" in capsys.readouterr().err
    assert _cli("compare", "--out", str(tmp_path), "--set", "nosuch.key=1") == 2


def test_cli_bad_model_exit_code(tmp_path):
    (tmp_path / "x.qnet").write_bytes(b"garbage!" * 4)
    assert cli.main(["inspect-model", str(tmp_path / "x.qnet")]) == 1
    assert cli.main(["inspect-model", str(tmp_path / "missing.qnet")]) == 1


def test_cli_failed_cell_exit_code(tmp_path, monkeypatch):
    def broken(*a, **kw):
        raise RuntimeError("boom")

    monkeypatch.setattr(harness, "simulate", broken)
    assert _cli("compare", "--out", str(tmp_path)) == 1
