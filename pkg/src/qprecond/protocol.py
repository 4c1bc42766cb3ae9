"""Quantized uplink/downlink steps built on the lattice quantizer and the network.

Both steps check the quantizer's distance precondition for every receiver
before decoding, and report the smallest slack ``y - ||x - x_ref||`` seen.
"""

import numpy as np

from . import quantizer
from .errors import ContractViolation, InvariantViolation


def _check(name, x, ref, y):
    dist = float(np.linalg.norm(x - ref))
    if dist > y:
        raise ContractViolation(name, dist, y)
    return y - dist


def uplink(net, values, refs, y, eps, tag, name):
    """Every node encodes ``values[i]``; the master decodes against ``refs[i]``.

    The master's own value is quantized locally without being charged.
    Returns ``(decoded list, min slack)``.
    """
    n = net.n
    spec = quantizer.make_spec(len(values[0]), y, eps)
    blobs, decoded, slack = {}, [None] * n, np.inf
    for i in range(n):
        x, ref = np.asarray(values[i], dtype=float), np.asarray(refs[i], dtype=float)
        slack = min(slack, _check(f"{name} (node {i})", x, ref, y))
        blobs[i] = quantizer.encode(x, spec)
    delivered = net.gather(blobs, tag)
    delivered[net.master] = blobs[net.master]
    for i in range(n):
        decoded[i] = quantizer.decode(delivered[i], refs[i])
    return decoded, slack


def downlink(net, value, refs, y, eps, tag, name):
    """The master encodes ``value`` once; node ``i`` decodes against ``refs[i]``.

    All nodes must recover the same lattice point; returns ``(decoded, min slack)``.
    """
    x = np.asarray(value, dtype=float)
    spec = quantizer.make_spec(len(x), y, eps)
    blob = quantizer.encode(x, spec)
    slack = np.inf
    for i in range(net.n):
        slack = min(slack, _check(f"{name} (node {i})", x, np.asarray(refs[i], dtype=float), y))
    delivered = net.broadcast(blob, tag)
    delivered[net.master] = blob
    outs = [quantizer.decode(delivered[i], refs[i]) for i in range(net.n)]
    for i in range(1, net.n):
        if spec.bits_per_coord and not np.array_equal(outs[i], outs[0]):
            raise InvariantViolation(f"{name}: node {i} decoded a different lattice point than node 0")
    # with zero bits every node falls back to its own reference; callers treat
    # the master's copy as the shared value
    return outs[net.master], slack
