import decimal
import math

import numpy as np
import pytest

from qprecond import glm
from qprecond.data import gen_synthetic
from qprecond.errors import InputError
from qprecond.glm import Quadratic, compute_constants
from qprecond.min_est import MinEstConfig, estimate_min, small_enough
from qprecond.net import Network, Topology
from qprecond.qpgd import qpgd_run


def _bits_formula(cfg):
    """ceil(log2(floor((2(gamma C^2 + c) + eps/2)/(eps/2)) + 1)) in decimal arithmetic."""
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        y = decimal.Decimal(2) * (decimal.Decimal(cfg.gamma) * decimal.Decimal(cfg.C) ** 2 + decimal.Decimal(cfg.c))
        h = decimal.Decimal(cfg.eps) / 2
        inner = int(((y + h) / h).to_integral_value(rounding=decimal.ROUND_FLOOR)) + 1
    return math.ceil(math.log2(inner))


def _solve(prob, cfg):
    net = Network(Topology(prob.n))
    res = qpgd_run(prob, net=net, eps=0.5 * prob.lam_min_M * cfg.radius**2, T=1000)
    net.round = res.rows[-1].t + 1
    return res.x, net


def test_config_validation():
    with pytest.raises(InputError):
        MinEstConfig(-1.0, 0.0, 1e-3, 1.0)
    with pytest.raises(InputError):
        MinEstConfig(1.0, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_least_squares_desk(eps):
    prob = gen_synthetic(200, 5, 4, 0, noise=1.0)
    cfg = MinEstConfig.from_problem(prob, eps)
    assert small_enough(cfg)
    x, net = _solve(prob, cfg)
    before = net.ledger.total_bits
    fbar = estimate_min(prob, x, cfg, net)
    assert abs(fbar - prob.f_star) <= eps
    per_worker = {e.bits for e in net.ledger.entries if e.tag == "fmin"}
    assert per_worker == {_bits_formula(cfg)} == {cfg.bits_per_worker()}
    assert net.ledger.total_bits - before == (prob.n - 1) * _bits_formula(cfg)


def test_single_node():
    prob = gen_synthetic(60, 3, 1, 1, noise=1.0)
    x = prob.x_star
    cfg = MinEstConfig(1.0, prob.c, 1e-3, prob.gamma_local)
    net = Network(Topology(1))
    fbar = estimate_min(prob, x, cfg, net)
    assert abs(fbar - prob.f_star) <= 1e-3 and net.ledger.total_bits == 0


def test_identical_shards():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((20, 3))
    b = A @ np.ones(3) + rng.standard_normal(20)
    prob = compute_constants([(A, b)] * 3, Quadratic())
    cfg = MinEstConfig(1.0, prob.c, 1e-3, prob.gamma_local)
    x = prob.x_star + 1e-4
    net = Network(Topology(3))
    fbar = estimate_min(prob, x, cfg, net, check=False)
    assert abs(fbar - glm.global_value(prob, x)) <= 1e-3 / 2


def test_eps_too_large():
    prob = gen_synthetic(200, 5, 4, 0, noise=1.0)
    cfg = MinEstConfig.from_problem(prob, 1e4)
    assert not small_enough(cfg)
    with pytest.raises(InputError, match="too large"):
        estimate_min(prob, prob.x_star, cfg, Network(Topology(prob.n)))


def test_iterate_too_far():
    prob = gen_synthetic(200, 5, 4, 0, noise=1.0)
    cfg = MinEstConfig.from_problem(prob, 1e-3)
    with pytest.raises(InputError, match="sqrt"):
        estimate_min(prob, prob.x_star + 1.0, cfg, Network(Topology(prob.n)))


def test_fallback_bound():
    prob = gen_synthetic(200, 5, 4, 0, noise=1.0)
    cfg = MinEstConfig.from_problem(prob, 1e-3, fallback=True)
    assert cfg.c >= prob.c
    x, net = _solve(prob, cfg)
    assert abs(estimate_min(prob, x, cfg, net) - prob.f_star) <= 1e-3
