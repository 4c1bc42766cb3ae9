"""In-process master/worker message passing with an exact bit ledger.

Every payload the algorithms exchange goes through :meth:`Network.gather` or
:meth:`Network.broadcast`, which credit the ledger with the message's
``payload_bits`` (and header ``overhead_bits`` in a separate column). The
master never sends to itself.
"""

import csv
from dataclasses import dataclass

UP = "worker->master"
DOWN = "master->worker"


@dataclass(frozen=True)
class Topology:
    n: int
    master: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one node, got {self.n}")
        if not 0 <= self.master < self.n:
            raise ValueError(f"master index {self.master} out of range for n={self.n}")

    @property
    def workers(self):
        return [i for i in range(self.n) if i != self.master]


@dataclass(frozen=True)
class LedgerEntry:
    round: int
    tag: str
    direction: str
    node: int
    bits: int
    overhead_bits: int


@dataclass(frozen=True)
class FullPrecision:
    """A message of raw floats priced at a fixed width per coordinate."""

    payload: object
    coords: int
    width: int = 32

    @property
    def payload_bits(self):
        return self.coords * self.width

    overhead_bits = 0


class BitLedger:
    def __init__(self):
        self.entries = []
        self.total_bits = 0
        self.total_overhead = 0

    def record(self, round, tag, direction, node, bits, overhead_bits=0):
        if self.entries and round < self.entries[-1].round:
            raise ValueError(f"ledger is append-only: round {round} after round {self.entries[-1].round}")
        bits, overhead_bits = int(bits), int(overhead_bits)
        if bits < 0 or overhead_bits < 0:
            raise ValueError("bit counts must be nonnegative")
        self.entries.append(LedgerEntry(int(round), tag, direction, int(node), bits, overhead_bits))
        self.total_bits += bits
        self.total_overhead += overhead_bits

    def check(self):
        """Totals equal the column sums."""
        assert self.total_bits == sum(e.bits for e in self.entries)
        assert self.total_overhead == sum(e.overhead_bits for e in self.entries)

    def bits_in_round(self, round, tags=None):
        return sum(e.bits for e in self.entries if e.round == round and (tags is None or e.tag in tags))

    def overhead_in_round(self, round):
        return sum(e.overhead_bits for e in self.entries if e.round == round)

    def bits_for_tags(self, tags):
        return sum(e.bits for e in self.entries if e.tag in tags)

    def to_csv(self, path):
        self.check()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "tag", "direction", "node", "bits", "overhead_bits"])
            for e in self.entries:
                w.writerow([e.round, e.tag, e.direction, e.node, e.bits, e.overhead_bits])


def report(ledger):
    """Per-(round, tag) bit table with a running cumulative column.

    Rows are ``(round, tag, bits_this_round, bits_cumulative)`` ordered by
    round, then tag name.
    """
    ledger.check()
    sums = {}
    for e in ledger.entries:
        sums[(e.round, e.tag)] = sums.get((e.round, e.tag), 0) + e.bits
    rows, running = [], 0
    for key in sorted(sums):
        running += sums[key]
        rows.append((key[0], key[1], sums[key], running))
    return rows


class Network:
    """Topology plus ledger; the only place bits get charged."""

    def __init__(self, topo, ledger=None):
        self.topo = topo
        self.ledger = BitLedger() if ledger is None else ledger
        self.round = 0

    @property
    def n(self):
        return self.topo.n

    @property
    def master(self):
        return self.topo.master

    def gather(self, blobs, tag):
        """Deliver one message per worker to the master.

        ``blobs`` maps node index to message; the master's own entry, if
        present, is ignored (local, free).
        """
        missing = [i for i in self.topo.workers if i not in blobs]
        if missing:
            raise ValueError(f"gather {tag!r}: no message from worker(s) {missing}")
        delivered = {}
        for i in self.topo.workers:
            msg = blobs[i]
            if msg.payload_bits:
                self.ledger.record(self.round, tag, UP, i, msg.payload_bits, msg.overhead_bits)
            delivered[i] = msg
        return delivered

    def broadcast(self, blob, tag):
        """Send one message from the master to every worker."""
        if blob.payload_bits:
            for i in self.topo.workers:
                self.ledger.record(self.round, tag, DOWN, i, blob.payload_bits, blob.overhead_bits)
        return {i: blob for i in self.topo.workers}
