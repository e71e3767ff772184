"""Experiment configuration: typed sections, validation and TOML/JSON loading.

Every default mirrors the reference scenario (20 Mbps / 100 ms / 3 % PER
bottleneck, 385-packet queue, 0.2 s epochs, 2000 s episodes) and every field
can be overridden from a config file or a ``section.key=value`` string.

Config file layout (TOML; JSON with the same nesting is also accepted)::

    [topology]          n_flows, queue_capacity, sim_duration, epoch
    [topology.bottleneck]  rate, prop_delay, per
    [topology.edge]        rate, prop_delay, per
    [transport]         kind, segment_size, header_size, ack_size, ...
    [aqm]               kind, red_*, codel_*
    [env]               history, lag, reward_mode, scale_*, normalize_states
    [training]          gamma, lr, minibatch, episodes, hidden, ...
    [experiment]        cells, seeds, out_dir, seed
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:  # pragma: no cover - exercised depending on interpreter version
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

TRANSPORT_KINDS = ("newreno", "fixedrate", "rl")
AQM_KINDS = ("droptail", "red", "codel", "rl")


@dataclass
class LinkConfig:
    rate: float = 20e6
    prop_delay: float = 0.1
    per: float = 0.0

    def validate(self, prefix="link"):
        if not self.rate > 0:
            raise ConfigError(f"{prefix}.rate", "must be > 0")
        if not self.prop_delay >= 0:
            raise ConfigError(f"{prefix}.prop_delay", "must be >= 0")
        if not 0.0 <= self.per <= 1.0:
            raise ConfigError(f"{prefix}.per", "must lie in [0, 1]")


def _bottleneck():
    return LinkConfig(rate=20e6, prop_delay=0.1, per=0.03)


def _edge():
    return LinkConfig(rate=100e6, prop_delay=0.001, per=0.0)


@dataclass
class TopologyConfig:
    n_flows: int = 4
    queue_capacity: int = 385
    sim_duration: float = 2000.0
    epoch: float = 0.2
    bottleneck: LinkConfig = field(default_factory=_bottleneck)
    edge: LinkConfig = field(default_factory=_edge)

    def validate(self):
        if self.n_flows < 1:
            raise ConfigError("topology.n_flows", "must be >= 1")
        if self.queue_capacity < 1:
            raise ConfigError("topology.queue_capacity", "must be >= 1")
        if not self.epoch > 0:
            raise ConfigError("topology.epoch", "must be > 0")
        if not self.sim_duration >= self.epoch:
            raise ConfigError("topology.sim_duration", "must be >= epoch")
        self.bottleneck.validate("topology.bottleneck")
        self.edge.validate("topology.edge")

    @property
    def n_steps(self):
        """Control epochs per episode, ``ceil(sim_duration / epoch)``."""
        # ns arithmetic so 2000 / 0.2 is exactly 10000
        return -(-round(self.sim_duration * 1e9) // round(self.epoch * 1e9))


@dataclass
class TransportConfig:
    # a single kind for every flow, or one entry per flow
    kind: Any = "newreno"
    segment_size: int = 1448
    header_size: int = 52
    ack_size: int = 52
    initial_cwnd: int = 10  # segments
    fixed_rate: float = 10e6
    action_mode: str = "corrected"
    initial_rto: float = 1.0
    min_rto: float = 0.2
    max_rto: float = 60.0
    # flow start offsets in seconds: scalar stagger (flow i starts at i*x) or a list
    start_times: Any = 0.0

    def validate(self, n_flows):
        kinds = self.kinds(n_flows)
        for k in kinds:
            if k not in TRANSPORT_KINDS:
                raise ConfigError("transport.kind", f"unknown transport {k!r}; expected one of {TRANSPORT_KINDS}")
        if self.segment_size < 1:
            raise ConfigError("transport.segment_size", "must be >= 1")
        if self.header_size < 0 or self.ack_size < 1:
            raise ConfigError("transport.header_size", "header must be >= 0 and ack_size >= 1")
        if self.initial_cwnd < 1:
            raise ConfigError("transport.initial_cwnd", "must be >= 1 segment")
        if not self.fixed_rate > 0:
            raise ConfigError("transport.fixed_rate", "must be > 0")
        if self.action_mode not in ("corrected", "literal"):
            raise ConfigError("transport.action_mode", "must be 'corrected' or 'literal'")
        if not 0 < self.min_rto <= self.max_rto:
            raise ConfigError("transport.min_rto", "need 0 < min_rto <= max_rto")
        if not self.initial_rto > 0:
            raise ConfigError("transport.initial_rto", "must be > 0")
        starts = self.starts(n_flows)
        if any(s < 0 for s in starts):
            raise ConfigError("transport.start_times", "must be >= 0")

    def kinds(self, n_flows):
        if isinstance(self.kind, str):
            return [self.kind] * n_flows
        kinds = list(self.kind)
        if len(kinds) != n_flows:
            raise ConfigError("transport.kind", f"expected {n_flows} entries, got {len(kinds)}")
        return kinds

    def starts(self, n_flows):
        if isinstance(self.start_times, (int, float)):
            return [i * float(self.start_times) for i in range(n_flows)]
        starts = [float(s) for s in self.start_times]
        if len(starts) != n_flows:
            raise ConfigError("transport.start_times", f"expected {n_flows} entries, got {len(starts)}")
        return starts


@dataclass
class AqmConfig:
    kind: str = "droptail"
    red_min_th: float = 77.0
    red_max_th: float = 231.0
    red_w_q: float = 0.002
    red_max_p: float = 0.1
    codel_target: float = 0.005
    codel_interval: float = 0.1

    def validate(self, capacity):
        if self.kind not in AQM_KINDS:
            raise ConfigError("aqm.kind", f"unknown discipline {self.kind!r}; expected one of {AQM_KINDS}")
        if not 0 < self.red_min_th < self.red_max_th <= capacity:
            raise ConfigError("aqm.red_min_th", "need 0 < red_min_th < red_max_th <= queue_capacity")
        if not 0 < self.red_w_q <= 1:
            raise ConfigError("aqm.red_w_q", "must lie in (0, 1]")
        if not 0 < self.red_max_p <= 1:
            raise ConfigError("aqm.red_max_p", "must lie in (0, 1]")
        if not 0 < self.codel_target < self.codel_interval:
            raise ConfigError("aqm.codel_target", "need 0 < codel_target < codel_interval")


@dataclass
class EnvConfig:
    history: int = 5
    lag: int = 1
    reward_mode: str = "normalized"
    # reward scales; None means "derive from the topology"
    scale_sa: float = 1.0
    scale_bif: float | None = None  # segment_size
    scale_cwnd: float | None = None  # segment_size
    scale_deq: float = 100.0
    scale_delay: float = 0.01
    scale_qlen: float | None = None  # queue_capacity
    normalize_states: bool = True

    def validate(self):
        if self.history < 1:
            raise ConfigError("env.history", "must be >= 1")
        if self.lag < 0:
            raise ConfigError("env.lag", "must be >= 0")
        if self.reward_mode not in ("normalized", "raw"):
            raise ConfigError("env.reward_mode", "must be 'normalized' or 'raw'")
        for name in ("scale_sa", "scale_bif", "scale_cwnd", "scale_deq", "scale_delay", "scale_qlen"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"env.{name}", "must be > 0")


@dataclass
class TrainingConfig:
    gamma: float = 0.9
    lr: float = 1e-3
    minibatch: int = 32
    episodes: int = 10
    timestep: int | None = None  # steps per episode; None = whole episode
    hidden: list = field(default_factory=lambda: [64, 64])
    target_sync: int = 100  # 0 disables the target network
    beta: float = 0.8  # exposed, unused by the default learner
    # multiplies rewards inside the learner only; keeps TD targets O(1)
    reward_scale: float = 1e-3
    exploration: str = "schedule"
    epsilon: float = 0.1
    exploration_base: float = 0.99
    exploration_cap: int = 2000
    memory_capacity: int = 2000
    mode: str = "vdn"
    policy: str = "greedy"
    temperature: float = 1.0
    seed: int = 0
    model_dir: str | None = None

    def validate(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("training.gamma", "must lie in (0, 1)")
        if not self.lr > 0:
            raise ConfigError("training.lr", "must be > 0")
        if self.minibatch < 1:
            raise ConfigError("training.minibatch", "must be >= 1")
        if self.episodes < 0:
            raise ConfigError("training.episodes", "must be >= 0")
        if self.timestep is not None and self.timestep < 1:
            raise ConfigError("training.timestep", "must be >= 1")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("training.hidden", "layer widths must be >= 1")
        if not self.reward_scale > 0:
            raise ConfigError("training.reward_scale", "must be > 0")
        if self.target_sync < 0:
            raise ConfigError("training.target_sync", "must be >= 0")
        if self.exploration not in ("schedule", "constant"):
            raise ConfigError("training.exploration", "must be 'schedule' or 'constant'")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("training.epsilon", "must lie in [0, 1]")
        if not 0 < self.exploration_base < 1:
            raise ConfigError("training.exploration_base", "must lie in (0, 1)")
        if self.memory_capacity < self.minibatch:
            raise ConfigError("training.memory_capacity", "must be >= minibatch")
        if self.mode not in ("vdn", "independent"):
            raise ConfigError("training.mode", "must be 'vdn' or 'independent'")
        if self.policy not in ("greedy", "boltzmann"):
            raise ConfigError("training.policy", "must be 'greedy' or 'boltzmann'")
        if not self.temperature > 0:
            raise ConfigError("training.temperature", "must be > 0")


@dataclass
class ScenarioConfig:
    """Everything needed to build one simulated episode."""

    topology: TopologyConfig = field(default_factory=TopologyConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    aqm: AqmConfig = field(default_factory=AqmConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def validate(self):
        self.topology.validate()
        self.transport.validate(self.topology.n_flows)
        self.aqm.validate(self.topology.queue_capacity)
        self.env.validate()
        return self


MACC_CELL = "macc"


def parse_cell(name):
    """``"red+newreno"`` -> ``("red", "newreno")``; ``"macc"`` -> ``("rl", "rl")``."""
    text = str(name).strip().lower()
    if text == MACC_CELL:
        return "rl", "rl"
    parts = text.split("+")
    if len(parts) != 2:
        raise ConfigError("experiment.cells", f"cell {name!r} must look like 'aqm+transport' or 'macc'")
    aqm, transport = parts
    if aqm not in AQM_KINDS:
        raise ConfigError("experiment.cells", f"cell {name!r}: unknown discipline {aqm!r}")
    if transport not in TRANSPORT_KINDS:
        raise ConfigError("experiment.cells", f"cell {name!r}: unknown transport {transport!r}")
    return aqm, transport


@dataclass
class ExperimentConfig:
    cells: list = field(default_factory=lambda: ["droptail+newreno"])
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "results"
    # MAD interval in epochs; None means the whole episode
    mad_window: int | None = None
    workers: int = 1

    def validate(self):
        if self.mad_window is not None and self.mad_window < 1:
            raise ConfigError("experiment.mad_window", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("experiment.workers", "must be >= 1")
        if not self.cells:
            raise ConfigError("experiment.cells", "must list at least one cell")
        for c in self.cells:
            parse_cell(c)
        if len(set(self.cells)) != len(self.cells):
            raise ConfigError("experiment.cells", "duplicate cell")
        if not self.seeds:
            raise ConfigError("experiment.seeds", "must list at least one seed")


@dataclass
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def validate(self):
        self.scenario.validate()
        self.training.validate()
        self.experiment.validate()
        return self

    def to_dict(self):
        s = dataclasses.asdict(self.scenario)
        return {
            "topology": s["topology"],
            "transport": s["transport"],
            "aqm": s["aqm"],
            "env": s["env"],
            "training": dataclasses.asdict(self.training),
            "experiment": dataclasses.asdict(self.experiment),
        }


# ---------------------------------------------------------------- loading

_SECTIONS = {
    "topology": ("scenario", "topology"),
    "transport": ("scenario", "transport"),
    "aqm": ("scenario", "aqm"),
    "env": ("scenario", "env"),
    "training": ("training",),
    "experiment": ("experiment",),
}


def _coerce(value, current, where):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected a boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(where, "must be finite")
        return float(value)
    if isinstance(current, str) and not isinstance(value, str):
        raise ConfigError(where, f"expected a string, got {value!r}")
    return value


def _apply(obj, data, where):
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        path = f"{where}.{key}"
        if key not in known:
            raise ConfigError(path, "unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a table")
            _apply(current, value, path)
        elif current is None or known[key].type == "Any":
            setattr(obj, key, value)
        else:
            setattr(obj, key, _coerce(value, current, path))


def config_from_dict(data):
    """Build and validate a :class:`Config` from nested dictionaries."""
    cfg = Config()
    for section, value in data.items():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        target = cfg
        for attr in _SECTIONS[section]:
            target = getattr(target, attr)
        if not isinstance(value, dict):
            raise ConfigError(section, "expected a table")
        _apply(target, value, section)
    return cfg.validate()


def parse_override(text):
    """Parse ``section.key=value`` into a nested dict; the value uses TOML syntax."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    path, raw = text.split("=", 1)
    keys = [k.strip() for k in path.strip().split(".") if k.strip()]
    if len(keys) < 2:
        raise ConfigError(path, "override key must be section.key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    out = value
    for k in reversed(keys):
        out = {k: out}
    return out


def _merge(base, extra):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path=None, overrides=()):
    """Read a TOML or JSON config file (optional) and apply overrides."""
    data = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(str(p), f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(str(p), f"cannot parse config: {exc}") from exc
    for item in overrides:
        _merge(data, parse_override(item))
    return config_from_dict(data)


def dump_config(cfg, path):
    """Write the resolved config as JSON (loadable by :func:`load_config`)."""
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
