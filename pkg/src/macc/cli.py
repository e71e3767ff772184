"""``macc`` command line: train, evaluate, compare, inspect-model.

Exit status: 0 success, 1 run or cell failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import dump_config, load_config
from .env import MACCEnv
from .errors import ConfigError, MaccError
from .harness import ExperimentSpec, eval_seed, run_experiment
from .metrics import EPOCH_COLUMNS, SUMMARY_COLUMNS, CsvTable, JsonlSink
from .rl.persistence import load_model
from .training import evaluate, learning_agents, load_models, train

log = logging.getLogger("macc")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable); VALUE uses TOML syntax")
    p.add_argument("--out", help="output directory (default: experiment.out_dir)")
    p.add_argument("--seed", type=int, help="training / evaluation seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    p = argparse.ArgumentParser(prog="macc", description="Cross-layer congestion control experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", help="train the RL agents of the configured scenario")
    _common(t)
    e = sub.add_parser("evaluate", help="run one greedy episode with saved networks")
    _common(e)
    e.add_argument("--models", help="directory holding agent1.qnet / agent2.qnet (default: OUT/models)")
    c = sub.add_parser("compare", help="run the comparison matrix over experiment.cells x experiment.seeds")
    _common(c)
    i = sub.add_parser("inspect-model", help="print the header and statistics of a model file")
    i.add_argument("path")
    return p


def _load(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"training.seed={args.seed}")
    cfg = load_config(args.config, overrides)
    out = Path(args.out if args.out else cfg.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_train(args):
    cfg, out = _load(args)
    dump_config(cfg, out / "config.json")
    model_dir = cfg.training.model_dir or out / "models"

    def report(ep, m):
        a = m.aggregates()
        print(f"episode {ep}: throughput {a['mean_throughput_mbps']:.3f} Mbps, rtt {a['mean_rtt_s']:.4f} s, "
              f"reward {a['mean_reward1']:.3f} / {a['mean_reward2']:.3f}")

    res = train(cfg.scenario, cfg.training, out_dir=out, model_dir=model_dir, callback=report,
                mad_window=cfg.experiment.mad_window)
    if any(res.reloaded.values()):
        print(f"resumed from {model_dir}")
    print(f"models saved to {model_dir}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg, out = _load(args)
    dump_config(cfg, out / "config.json")
    agents = learning_agents(MACCEnv(cfg.scenario))
    model_dir = Path(args.models or cfg.training.model_dir or out / "models")
    nets = load_models(model_dir, cfg.scenario, cfg.training, agents) if agents else {}
    seed = eval_seed(cfg.training.seed)
    with JsonlSink(out / "info.jsonl") as sink:
        m = evaluate(nets, cfg.scenario, seed, sink, cfg.training.policy, cfg.training.temperature,
                     mad_window=cfg.experiment.mad_window)
    with CsvTable(out / "epochs.csv", EPOCH_COLUMNS) as t:
        for r in m.rows():
            t.write(r)
    a = m.aggregates()
    with CsvTable(out / "episodes.csv", SUMMARY_COLUMNS) as t:
        t.write(a)
    print(json.dumps({k: a[k] for k in ("steps", "mean_throughput_mbps", "mean_rtt_s",
                                         "mad_cwnd_bytes", "mad_queue_len")}))
    return EXIT_OK


def cmd_compare(args):
    cfg, out = _load(args)
    spec = ExperimentSpec.from_config(cfg, out)
    if args.seed is not None:
        spec.seeds = [args.seed]
    res = run_experiment(spec)
    for a in res.aggregates:
        print(f"{a['cell']:<20} n={a['n_seeds']} throughput {a['mean_throughput_mbps']:.3f} Mbps "
              f"rtt {a['mean_rtt_s']:.4f} s")
    for r in res.failed:
        print(f"FAILED {r['cell']} seed {r['seed']} (see {spec.cell_dir(r['cell'], r['seed'])}/error.txt)",
              file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_FAILED


def cmd_inspect(args):
    net = load_model(args.path)
    info = {
        "path": str(args.path),
        "agent_id": net.agent_id,
        "layer_dims": net.layer_dims,
        "n_params": int(sum(p.size for p in net.params)),
        "finite": bool(net.all_finite()),
        "max_abs_weight": float(max(abs(p).max() for p in net.params)),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "compare": cmd_compare, "inspect-model": cmd_inspect}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MaccError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
