"""Per-epoch series, per-episode aggregates and their CSV encoding.

Column order of every CSV written here is fixed by the ``*_COLUMNS``
constants; tests pin them against golden headers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .aqm import DROP_CAUSES

EPOCH_COLUMNS = [
    "episode", "step", "time_s", "throughput_mbps", "rtt_mean_s", "rtt_min_s", "rtt_count",
    "cwnd_bytes", "ssthresh_bytes", "bytes_in_flight", "queue_len", "dequeue_rate", "queue_delay_s",
    "drops_full", "drops_red_early", "drops_rl_random", "drops_codel", "corrupted",
    "action1", "action2", "reward1", "reward2",
]

SUMMARY_COLUMNS = [
    "episode", "steps", "mean_throughput_mbps", "mean_rtt_s", "mad_cwnd_bytes", "mad_queue_len",
    "total_reward1", "total_reward2", "mean_reward1", "mean_reward2",
    "drops_full", "drops_red_early", "drops_rl_random", "drops_codel", "corrupted",
]

CELL_COLUMNS = ["cell", "aqm", "transport", "seed", "status"] + SUMMARY_COLUMNS[1:]

AGGREGATE_COLUMNS = [
    "cell", "n_seeds", "mean_throughput_mbps", "std_throughput_mbps", "mean_rtt_s", "std_rtt_s",
    "mad_cwnd_bytes", "std_mad_cwnd_bytes", "mad_queue_len", "std_mad_queue_len",
]


def throughput(delivered_bytes, window):
    """Goodput in Mbps for ``delivered_bytes`` of payload over ``window`` seconds."""
    if not window > 0:
        raise ValueError("window must be > 0")
    return delivered_bytes * 8 / window / 1e6


def mad(series):
    """Mean absolute deviation about the arithmetic mean."""
    xs = [float(x) for x in series]
    if not xs:
        raise ValueError("mad of an empty series")
    mean = math.fsum(xs) / len(xs)
    return math.fsum(abs(x - mean) for x in xs) / len(xs)


def rtt_summary(samples):
    """Mean RTT in seconds, or None when there are no samples."""
    samples = list(samples)
    if not samples:
        return None
    return math.fsum(samples) / len(samples)


def _finite(xs):
    return [x for x in xs if x is not None and not (isinstance(x, float) and math.isnan(x))]


def _windowed_mad(xs, window):
    xs = _finite(xs)
    if not xs:
        return float("nan")
    if not window or window >= len(xs):
        return mad(xs)
    chunks = [xs[i:i + window] for i in range(0, len(xs), window)]
    return math.fsum(mad(c) for c in chunks) / len(chunks)


@dataclass
class EpisodeMetrics:
    """Per-epoch series for one episode plus aggregates derived from them."""

    episode: int
    series: dict = field(default_factory=lambda: {c: [] for c in EPOCH_COLUMNS if c != "episode"})
    mad_window: int | None = None

    @classmethod
    def from_records(cls, records, episode=0, mad_window=None):
        m = cls(episode, mad_window=mad_window)
        for rec in records:
            m.append(rec)
        return m

    def append(self, rec):
        for c, col in self.series.items():
            col.append(rec.get(c))

    @property
    def steps(self):
        return len(self.series["step"])

    def aggregates(self):
        s = self.series
        rtts = _finite(s["rtt_mean_s"])
        tput = s["throughput_mbps"]
        r1 = _finite(s["reward1"])
        r2 = _finite(s["reward2"])
        out = {
            "episode": self.episode,
            "steps": self.steps,
            "mean_throughput_mbps": math.fsum(tput) / len(tput) if tput else float("nan"),
            "mean_rtt_s": math.fsum(rtts) / len(rtts) if rtts else float("nan"),
            "mad_cwnd_bytes": _windowed_mad(s["cwnd_bytes"], self.mad_window),
            "mad_queue_len": _windowed_mad(s["queue_len"], self.mad_window),
            "total_reward1": math.fsum(r1),
            "total_reward2": math.fsum(r2),
            "mean_reward1": math.fsum(r1) / len(r1) if r1 else float("nan"),
            "mean_reward2": math.fsum(r2) / len(r2) if r2 else float("nan"),
        }
        for cause in DROP_CAUSES:
            out[f"drops_{cause}"] = sum(_finite(s[f"drops_{cause}"]))
        out["corrupted"] = sum(_finite(s["corrupted"]))
        return out

    def rows(self):
        s = self.series
        for i in range(self.steps):
            row = {"episode": self.episode}
            row.update({c: s[c][i] for c in s})
            yield row


def fmt(v):
    """CSV cell text: repr for floats (round-trips exactly), blank for absent."""
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


class CsvTable:
    """Append-only CSV with a fixed header."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)

    def write(self, row):
        self._w.writerow([fmt(row.get(c)) for c in self.columns])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class JsonlSink:
    """Line-delimited JSON info records (one per step)."""

    def __init__(self, path, extra=None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w")
        self.extra = dict(extra or {})

    def write(self, rec):
        rec = {**self.extra, **rec}
        self._fh.write(json.dumps(rec, sort_keys=True, allow_nan=True) + "\n")

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
