"""Per-round records shared by every algorithm and their CSV export."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RoundTrace:
    t: int
    err: float
    fgap: float
    bound: float = math.nan
    slacks: dict = field(default_factory=dict)
    bits_round: int = 0
    bits_total: int = 0
    overhead_bits: int = 0
    channels: dict = field(default_factory=dict)  # per-channel bit counts for the round


@dataclass
class RunResult:
    algorithm: str
    rows: list
    x: np.ndarray
    ledger: object
    fingerprint: str = ""
    target_eps: float = math.nan
    reached: bool = False
    info: dict = field(default_factory=dict)

    @property
    def rounds(self):
        """Communication rounds executed (rows whose round charged or could charge bits)."""
        return max(0, len(self.rows) - 1)

    @property
    def total_bits(self):
        return self.ledger.total_bits

    @property
    def total_overhead(self):
        return self.ledger.total_overhead

    def min_slack(self, name):
        vals = [r.slacks[name] for r in self.rows if name in r.slacks and not math.isnan(r.slacks[name])]
        return min(vals) if vals else math.nan


def slack_names(rows):
    names = []
    for r in rows:
        for k in r.slacks:
            if k not in names:
                names.append(k)
    return names


def channel_names(rows):
    names = []
    for r in rows:
        for k in r.channels:
            if k not in names:
                names.append(k)
    return names


def write_trace_csv(path, rows):
    slacks = slack_names(rows)
    channels = channel_names(rows)
    header = ["t", "err", "fgap", "bound"] + [f"slack_{s}" for s in slacks] + channels + [
        "bits_round", "bits_total", "overhead_bits"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r.t, repr(r.err), repr(r.fgap), repr(r.bound)]
                       + [repr(r.slacks.get(s, math.nan)) for s in slacks]
                       + [r.channels.get(c, 0) for c in channels]
                       + [r.bits_round, r.bits_total, r.overhead_bits])
