"""Comparison-matrix runner.

Each cell is an ``aqm+transport`` pair (or ``macc``) run for every seed.
Output layout under ``out_dir``::

    config.json                     resolved configuration
    summary.csv                     one row per (cell, seed)
    aggregate.csv                   mean and std across seeds per cell
    <cell>/seed<k>/epochs.csv       per-epoch series of the evaluation episode
    <cell>/seed<k>/episodes.csv     its one-row summary
    <cell>/seed<k>/info.jsonl       raw per-step info records
    <cell>/seed<k>/train_*.csv      training episodes (learning cells only)
    <cell>/seed<k>/models/          saved networks (learning cells only)
"""

from __future__ import annotations

import copy
import logging
import math
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import MACC_CELL, Config, ScenarioConfig, TrainingConfig, dump_config, parse_cell
from .metrics import AGGREGATE_COLUMNS, CELL_COLUMNS, EPOCH_COLUMNS, SUMMARY_COLUMNS, CsvTable, JsonlSink
from .sim.engine import derive_seed
from .training import evaluate, simulate, train

log = logging.getLogger(__name__)

# reference AQM and transport sets of the comparison, plus the baseline pair
MATRIX_AQM = ("red", "codel", "rl")
MATRIX_TRANSPORT = ("newreno", "fixedrate", "rl")
FULL_MATRIX = [f"{a}+{t}" for a in MATRIX_AQM for t in MATRIX_TRANSPORT] + [MACC_CELL]
BASELINE = "droptail+newreno"


def eval_seed(seed):
    """Seed of the scored episode; shared by every cell so they see the same noise."""
    return derive_seed(seed, "eval")


@dataclass
class ExperimentSpec:
    cells: list
    scenario: ScenarioConfig
    training: TrainingConfig
    seeds: list
    out_dir: Path
    mad_window: int | None = None
    workers: int = 1
    config: Config | None = field(default=None, repr=False)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        for c in self.cells:
            parse_cell(c)

    @classmethod
    def from_config(cls, cfg: Config, out_dir=None):
        e = cfg.experiment
        return cls(list(e.cells), cfg.scenario, cfg.training, [int(s) for s in e.seeds],
                   Path(out_dir if out_dir is not None else e.out_dir), e.mad_window, e.workers, cfg)

    def cell_scenario(self, cell):
        aqm, transport = parse_cell(cell)
        sc = copy.deepcopy(self.scenario)
        sc.aqm.kind = aqm
        sc.transport.kind = transport
        return sc.validate()

    def cell_training(self, cell, seed):
        tc = copy.deepcopy(self.training)
        tc.seed = int(seed)
        tc.model_dir = None
        # the joint learner only for the cooperative cell; RL baselines learn alone
        tc.mode = "vdn" if cell == MACC_CELL else "independent"
        return tc

    def cell_dir(self, cell, seed):
        return self.out_dir / cell / f"seed{seed}"


@dataclass
class ExperimentResult:
    out_dir: Path
    rows: list
    aggregates: list

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] != "ok"]

    @property
    def ok(self):
        return not self.failed


def is_learning(cell):
    aqm, transport = parse_cell(cell)
    return aqm == "rl" or transport == "rl"


def run_cell(spec: ExperimentSpec, cell, seed):
    """Run one (cell, seed); never raises, failures come back as the row status."""
    aqm, transport = parse_cell(cell)
    row = {"cell": cell, "aqm": aqm, "transport": transport, "seed": seed, "status": "ok"}
    out = spec.cell_dir(cell, seed)
    if out.exists():
        shutil.rmtree(out)  # stale models would otherwise be reloaded
    out.mkdir(parents=True)
    try:
        sc = spec.cell_scenario(cell)
        sink = JsonlSink(out / "info.jsonl")
        try:
            if is_learning(cell):
                tc = spec.cell_training(cell, seed)
                res = train(sc, tc, out_dir=out, model_dir=out / "models", mad_window=spec.mad_window)
                metrics = evaluate(res.nets, sc, eval_seed(seed), sink, tc.policy, tc.temperature,
                                   mad_window=spec.mad_window)
            else:
                metrics = simulate(sc, eval_seed(seed), sink, mad_window=spec.mad_window)
        finally:
            sink.close()
        with CsvTable(out / "epochs.csv", EPOCH_COLUMNS) as t:
            for r in metrics.rows():
                t.write(r)
        agg = metrics.aggregates()
        with CsvTable(out / "episodes.csv", SUMMARY_COLUMNS) as t:
            t.write(agg)
        row.update({k: v for k, v in agg.items() if k != "episode"})
    except Exception as exc:  # one bad cell must not sink the matrix
        log.error("cell %s seed %s failed: %s", cell, seed, exc)
        (out / "error.txt").write_text(traceback.format_exc())
        row["status"] = "failed"
    return row


def _mean_std(xs):
    xs = [x for x in xs if x is not None and not math.isnan(x)]
    if not xs:
        return float("nan"), float("nan")
    m = math.fsum(xs) / len(xs)
    return m, math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


def aggregate(rows, cells):
    """Per-cell mean and population std across the seeds that finished."""
    out = []
    for cell in cells:
        ok = [r for r in rows if r["cell"] == cell and r["status"] == "ok"]
        agg = {"cell": cell, "n_seeds": len(ok)}
        for key in ("throughput_mbps", "rtt_s"):
            agg[f"mean_{key}"], agg[f"std_{key}"] = _mean_std([r[f"mean_{key}"] for r in ok])
        for key in ("mad_cwnd_bytes", "mad_queue_len"):
            agg[key], agg[f"std_{key}"] = _mean_std([r[key] for r in ok])
        out.append(agg)
    return out


def _job(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    if spec.config is not None:
        dump_config(spec.config, spec.out_dir / "config.json")
    jobs = [(spec, cell, seed) for cell in spec.cells for seed in spec.seeds]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    with CsvTable(spec.out_dir / "summary.csv", CELL_COLUMNS) as t:
        for r in rows:
            t.write(r)
    aggs = aggregate(rows, spec.cells)
    with CsvTable(spec.out_dir / "aggregate.csv", AGGREGATE_COLUMNS) as t:
        for a in aggs:
            t.write(a)
    return ExperimentResult(spec.out_dir, rows, aggs)
