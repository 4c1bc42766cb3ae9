"""Reference methods: full-precision (preconditioned) gradient descent and QSGD.

Full-precision messages are priced at 32 bits per coordinate. QSGD sends
``ceil(log2(2s+1))`` bits per coordinate for ``s`` levels plus one 64-bit norm,
which is kept in the overhead column like the lattice headers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import glm
from .errors import DivergenceError, InputError
from .net import FullPrecision, Network, Topology
from .sym_codec import packed_dim, phi
from .trace import RoundTrace, RunResult

FLOAT_BITS = 32
QSGD_NORM_BITS = 64
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_WINDOW = 10


@dataclass(frozen=True)
class QsgdMessage:
    payload_bits: int
    overhead_bits: int


def qsgd_bits(d, levels):
    return d * math.ceil(math.log2(2 * levels + 1))


def qsgd_quantize(g, levels, rng):
    """Unbiased stochastic rounding of ``|g_j|/||g||`` onto ``{0, 1/s, ..., 1}``.

    ``rng`` is a seed or a :class:`numpy.random.Generator`. Returns
    ``(vector, payload_bits)``; a zero vector costs nothing.
    """
    if int(levels) != levels or levels < 1:
        raise ValueError(f"levels must be a positive integer, got {levels}")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return np.zeros_like(g), 0
    rng = np.random.default_rng(rng)
    scaled = np.abs(g) / norm * levels
    low = np.floor(scaled)
    level = low + (rng.random(g.shape) < scaled - low)
    return np.sign(g) * norm * level / levels, qsgd_bits(g.size, int(levels))


def _qsgd_message(bits):
    return QsgdMessage(bits, QSGD_NORM_BITS if bits else 0)


class _Watch:
    """Raises when the error grows by 10x over a 10-round window."""

    def __init__(self, name):
        self.name = name
        self.errs = []

    def __call__(self, t, err):
        self.errs.append(err)
        if not math.isfinite(err):
            raise DivergenceError(f"{self.name}: iterate became non-finite at round {t}")
        if t >= DIVERGENCE_WINDOW:
            old = self.errs[t - DIVERGENCE_WINDOW]
            if err > DIVERGENCE_FACTOR * old:
                raise DivergenceError(
                    f"{self.name}: error grew from {old:.3g} to {err:.3g} over {DIVERGENCE_WINDOW} rounds "
                    f"(round {t}); lower the step size")


def _row(prob, t, x, ledger, bits_before, over_before, start_bits, bound=math.nan):
    return RoundTrace(
        t=t, err=float(np.linalg.norm(x - prob.x_star)), fgap=glm.global_value(prob, x) - prob.f_star,
        bound=bound, bits_round=ledger.total_bits - bits_before, bits_total=ledger.total_bits - start_bits,
        overhead_bits=ledger.total_overhead - over_before)


def _exchange_full(net, d, tag_up, tag_down):
    """Workers send a d-vector each, master broadcasts one d-vector."""
    net.gather({i: FullPrecision(None, d, FLOAT_BITS) for i in net.topo.workers}, tag_up)
    net.broadcast(FullPrecision(None, d, FLOAT_BITS), tag_down)


def _descent(name, prob, step, T, eps, net, bound=None):
    net = net if net is not None else Network(Topology(prob.n))
    ledger = net.ledger
    start_bits = ledger.total_bits
    watch = _Watch(name)
    x = np.array(prob.x0, dtype=float)
    rows, reached = [], False
    for t in range(T + 1):
        net.round = t
        b0, o0 = (start_bits, ledger.total_overhead) if t == 0 else (ledger.total_bits, ledger.total_overhead)
        fgap = glm.global_value(prob, x) - prob.f_star
        stop = (eps is not None and fgap <= eps) or t == T
        x_next = None if stop else step(t, x, net)
        row = _row(prob, t, x, ledger, b0, o0, start_bits, bound(t) if bound else math.nan)
        rows.append(row)
        watch(t, row.err)
        if stop:
            reached = eps is not None and fgap <= eps
            break
        x = x_next
    ledger.check()
    return RunResult(name, rows, x, ledger, prob.fingerprint(), eps if eps is not None else math.nan, reached)


def gd_full(prob, eta, T=1000, eps=None, net=None):
    """Gradient descent ``x <- x - eta grad f(x)`` with 32-bit messages."""
    if eta <= 0:
        raise InputError(f"step size must be positive, got {eta}")

    def step(t, x, net):
        _exchange_full(net, prob.d, "grad_up", "grad_down")
        return x - eta * glm.global_grad(prob, x)

    return _descent("gd", prob, step, T, eps, net)


def pgd_full(prob, T=1000, eps=None, net=None, eta=None):
    """Gradient descent preconditioned by the exact covariance ``M`` with 32-bit messages.

    Setup ships every ``M_i`` to the master and ``M`` back (packed upper
    triangles). Default step ``2/(mu_l + gamma_l)``.
    """
    if not prob.is_glm:
        raise InputError("preconditioned descent needs a GLM loss with known mu_l and gamma_l")
    eta = 2.0 / (prob.mu_l + prob.gamma_l) if eta is None else float(eta)
    chol = sla.cho_factor(prob.M)
    start = float(np.linalg.norm(prob.x0 - prob.x_star))
    rate = 1.0 - 1.0 / prob.kappa_l

    def step(t, x, net):
        if t == 0:
            p = packed_dim(prob.d)
            net.gather({i: FullPrecision(phi(prob.local_M[i]), p, FLOAT_BITS) for i in net.topo.workers},
                       "precond_up")
            net.broadcast(FullPrecision(phi(prob.M), p, FLOAT_BITS), "precond_down")
        _exchange_full(net, prob.d, "grad_up", "dir_down")
        return x - eta * sla.cho_solve(chol, glm.global_grad(prob, x))

    return _descent("pgd", prob, step, T, eps, net, bound=lambda t: rate**t * start)


def qsgd_gd(prob, eta, levels, T=1000, eps=None, seed=0, net=None, precond=None):
    """Gradient descent on QSGD-coded gradient differences.

    Each worker quantizes ``grad f_i(x) - g_i_prev`` (its last decoded
    gradient) and the master does the same for the averaged gradient against
    the previous broadcast. ``precond`` optionally multiplies the decoded
    gradient by its inverse (assumed shared in advance, not charged).
    """
    if eta <= 0:
        raise InputError(f"step size must be positive, got {eta}")
    rng = np.random.default_rng(seed)
    n, d = prob.n, prob.d
    state = {"loc": [np.zeros(d) for _ in range(n)], "glob": np.zeros(d)}
    chol = sla.cho_factor(precond) if precond is not None else None

    def step(t, x, net):
        msgs = {}
        for i in range(n):
            q, bits = qsgd_quantize(glm.local_grad(prob, i, x) - state["loc"][i], levels, rng)
            state["loc"][i] = state["loc"][i] + q
            msgs[i] = _qsgd_message(bits)
        net.gather(msgs, "grad_up")
        avg = sum(state["loc"]) / n
        q, bits = qsgd_quantize(avg - state["glob"], levels, rng)
        state["glob"] = state["glob"] + q
        net.broadcast(_qsgd_message(bits), "grad_down")
        g = state["glob"]
        return x - eta * (sla.cho_solve(chol, g) if chol is not None else g)

    return _descent("qsgd", prob, step, T, eps, net)
