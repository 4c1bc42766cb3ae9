import pytest

from qprecond.net import DOWN, UP, BitLedger, FullPrecision, Network, Topology, report
from qprecond.quantizer import encode, make_spec


class Msg:
    def __init__(self, bits, overhead=0):
        self.payload_bits = bits
        self.overhead_bits = overhead


def test_topology_validation():
    with pytest.raises(ValueError):
        Topology(0)
    with pytest.raises(ValueError):
        Topology(3, master=3)
    assert Topology(4, master=2).workers == [0, 1, 3]


def test_gather_single_edge():
    net = Network(Topology(2))
    net.gather({1: Msg(12)}, "t")
    assert net.ledger.total_bits == 12
    assert net.ledger.entries[0].direction == UP


def test_gather_skips_master():
    net = Network(Topology(4))
    net.gather({i: Msg(8) for i in range(4)}, "t")
    assert net.ledger.total_bits == 24


def test_gather_empty_blobs():
    net = Network(Topology(3))
    net.gather({1: Msg(0), 2: Msg(0)}, "t")
    assert net.ledger.total_bits == 0 and not net.ledger.entries


def test_gather_missing_worker():
    with pytest.raises(ValueError, match="worker"):
        Network(Topology(3)).gather({1: Msg(1)}, "t")


def test_broadcast():
    net = Network(Topology(3))
    net.broadcast(Msg(10), "t")
    assert net.ledger.total_bits == 20
    assert {e.direction for e in net.ledger.entries} == {DOWN}
    net.broadcast(Msg(5), "u")
    assert net.ledger.total_bits == 2 * (10 + 5)
    single = Network(Topology(1))
    single.broadcast(Msg(10), "t")
    assert single.ledger.total_bits == 0


def test_overhead_column():
    s = make_spec(3, 10.0, 0.1)
    net = Network(Topology(2))
    net.gather({1: encode([1.0, 2.0, 3.0], s)}, "q")
    e = net.ledger.entries[0]
    assert e.bits == 3 * s.bits_per_coord and e.overhead_bits == 128
    assert FullPrecision(None, 5).payload_bits == 160


def test_ledger_append_only():
    led = BitLedger()
    led.record(2, "a", UP, 1, 5)
    with pytest.raises(ValueError):
        led.record(1, "a", UP, 1, 5)
    with pytest.raises(ValueError):
        led.record(3, "a", UP, 1, -1)


def test_report():
    assert report(BitLedger()) == []
    led = BitLedger()
    led.record(0, "b", UP, 1, 4)
    assert report(led) == [(0, "b", 4, 4)]
    led.record(0, "a", UP, 2, 3)
    led.record(1, "a", DOWN, 1, 7)
    rows = report(led)
    assert rows == [(0, "a", 3, 3), (0, "b", 4, 7), (1, "a", 7, 14)]
    assert rows[-1][3] == led.total_bits == sum(r[2] for r in rows)


def test_ledger_csv(tmp_path):
    led = BitLedger()
    led.record(0, "x", UP, 1, 4, 128)
    path = tmp_path / "l.csv"
    led.to_csv(path)
    assert path.read_text().splitlines() == ["round,tag,direction,node,bits,overhead_bits",
                                            "0,x,worker->master,1,4,128"]
