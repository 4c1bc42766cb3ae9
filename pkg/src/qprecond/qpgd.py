"""Quantized preconditioned gradient descent for GLMs.

Phase one ships the local covariances ``M_i = A_i^T A_i`` through the
quantizer so that all nodes share the same estimate ``M_bar`` of
``M = (1/n) sum M_i``. Phase two runs ``x <- x - eta * v`` where ``v`` is a
quantized average of the local directions ``M_bar^{-1} grad f_i(x)``. The
quantizer radii shrink geometrically with ``R(t)``, so the ratio ``y/eps``
and therefore the bits per round stay fixed.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import glm, protocol
from .errors import InputError, InvariantViolation
from .net import Network, Topology
from .sym_codec import phi, phi_inv, spectral_norm
from .trace import RoundTrace, RunResult

PRECOND_TAGS = ("precond_up", "precond_down")
DIRECTION_TAGS = ("dir_up", "dir_down")
# relative tolerance on the iterate bound; at t = 0 it holds with equality
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class QpgdParams:
    kappa_l: float
    mu_l: float
    gamma_l: float
    D: float

    @classmethod
    def from_problem(cls, prob, D=None):
        if not prob.is_glm:
            raise InputError("preconditioned descent needs a GLM loss with known mu_l and gamma_l")
        return cls(prob.kappa_l, prob.mu_l, prob.gamma_l, prob.D if D is None else float(D))

    @property
    def xi(self):
        return 1.0 - 1.0 / (2.0 * self.kappa_l)

    @property
    def K(self):
        return 2.0 / self.xi

    @property
    def delta(self):
        return self.xi * (1.0 - self.xi) / 4.0

    @property
    def eta(self):
        return 2.0 / (self.mu_l + self.gamma_l)

    @property
    def rate(self):
        return 1.0 - 1.0 / (4.0 * self.kappa_l)

    def R(self, t):
        return 0.5 * self.gamma_l * self.K * self.rate**t * self.D

    def bound(self, t):
        return self.rate**t * self.D


@dataclass
class Preconditioner:
    M_bar: np.ndarray
    S: np.ndarray
    error: float  # ||M - M_bar||_2
    lam_min: float  # lambda_min(M_bar)
    slacks: dict


def setup_preconditioner(prob, net, check=True):
    """Quantized estimate of the averaged covariance, identical at every node."""
    n, d = prob.n, prob.d
    lam_min, lam_max, kappa_l = prob.lam_min_M, prob.lam_max_M, prob.kappa_l
    eps = lam_min / (16.0 * math.sqrt(2.0) * kappa_l)
    packed = [phi(Mi) for Mi in prob.local_M]
    m0 = net.master

    y_up = 2.0 * math.sqrt(d) * n * lam_max
    Mbar_i, s_up = protocol.uplink(net, packed, [packed[m0]] * n, y_up, eps, "precond_up",
                                   "covariance uplink ||phi(M_i) - phi(M_master)|| <= 2 sqrt(d) n lam_max(M)")
    S = phi_inv(sum(Mbar_i) / n)

    y_down = math.sqrt(d) * (lam_min / (16.0 * kappa_l) + 2.0 * n * lam_max)
    Mbar_packed, s_down = protocol.downlink(net, phi(S), packed, y_down, eps, "precond_down",
                                            "covariance downlink ||phi(S) - phi(M_i)|| <= sqrt(d)(lam_min/16k + 2n lam_max)")
    M_bar = phi_inv(Mbar_packed)
    err = spectral_norm(prob.M - M_bar)
    lmin = float(np.linalg.eigvalsh(M_bar)[0])
    slacks = {
        "precond_up": s_up,
        "precond_down": s_down,
        "precond_error": lam_min / (8.0 * kappa_l) - err,
        "precond_lambda_min": lmin - lam_min / 2.0,
    }
    if check:
        if slacks["precond_error"] < 0:
            raise InvariantViolation(f"||M - M_bar|| = {err:.6g} exceeds lam_min(M)/(8 kappa_l)")
        if slacks["precond_lambda_min"] < 0:
            raise InvariantViolation(f"lambda_min(M_bar) = {lmin:.6g} below lam_min(M)/2")
    return Preconditioner(M_bar, S, err, lmin, slacks)


def _fgap(prob, x):
    return glm.global_value(prob, x) - prob.f_star


def qpgd_run(prob, params=None, topo=None, net=None, T=200, eps=None, check=True):
    """Run quantized preconditioned descent from ``prob.x0``.

    Stops when ``f(x) - f* <= eps`` (if given) or after ``T`` communication
    rounds. Row ``t`` of the trace describes ``x(t)`` and the messages sent
    in round ``t``; the row that meets the target sends nothing.
    """
    params = QpgdParams.from_problem(prob) if params is None else params
    if net is None:
        net = Network(topo or Topology(prob.n))
    if net.n != prob.n:
        raise InputError(f"topology has {net.n} nodes but problem has {prob.n} shards")
    D0 = glm.start_radius(prob.x0, prob.x_star, prob.local_minimizers)
    if D0 > params.D:
        raise InputError(f"start point is {D0:.6g} from a minimizer but D = {params.D:.6g}")

    n, ledger = prob.n, net.ledger
    net.round = 0
    start_bits, start_over = ledger.total_bits, ledger.total_overhead
    pre = setup_preconditioner(prob, net, check=check)
    chol = sla.cho_factor(pre.M_bar)
    eta, delta = params.eta, params.delta
    kM = prob.kappa_M
    rows = []
    x = np.array(prob.x0, dtype=float)
    v_loc = v = None
    reached = False
    for t in range(T + 1):
        net.round = t
        if t == 0:
            bits_before, over_before = start_bits, start_over  # setup is charged to round 0
        else:
            bits_before, over_before = ledger.total_bits, ledger.total_overhead
        err = float(np.linalg.norm(x - prob.x_star))
        fgap = _fgap(prob, x)
        bound = params.bound(t)
        slacks = {"iterate": bound - err}
        if check and slacks["iterate"] < -ROUNDOFF * bound:
            raise InvariantViolation(f"round {t}: ||x - x*|| = {err:.6g} exceeds bound {bound:.6g}")
        if t == 0:
            slacks.update(pre.slacks)
        stop = (eps is not None and fgap <= eps) or t == T
        if not stop:
            R = params.R(t)
            g = [sla.cho_solve(chol, glm.local_grad(prob, i, x)) for i in range(n)]
            y_up = 4.0 * n * kM * R
            y_down = (delta / 2.0 + 4.0 * kM * n) * R
            q_eps = delta * R / 2.0
            if t == 0:
                up_refs = [g[net.master]] * n
                down_refs = g
            else:
                up_refs = v_loc
                down_refs = [v] * n
            v_loc, s_up = protocol.uplink(net, g, up_refs, y_up, q_eps, "dir_up",
                                          f"round {t} direction uplink (radius 4 n kappa(M) R)")
            r = sum(v_loc) / n
            v, s_down = protocol.downlink(net, r, down_refs, y_down, q_eps, "dir_down",
                                          f"round {t} direction downlink (radius (delta/2 + 4 n kappa(M)) R)")
            g_avg = sum(g) / n
            slacks["dir_uplink"] = s_up
            slacks["dir_downlink"] = s_down
            slacks["dir_local"] = q_eps - max(float(np.linalg.norm(gi - vi)) for gi, vi in zip(g, v_loc))
            slacks["dir_global"] = delta * R - float(np.linalg.norm(g_avg - v))
            if check:
                for key in ("dir_local", "dir_global"):
                    if slacks[key] < 0:
                        raise InvariantViolation(f"round {t}: direction error bound {key} violated")
        bits = ledger.total_bits - bits_before
        rows.append(RoundTrace(
            t=t, err=err, fgap=fgap, bound=bound, slacks=slacks, bits_round=bits,
            bits_total=ledger.total_bits - start_bits, overhead_bits=ledger.total_overhead - over_before,
            channels={
                "precond_bits": ledger.bits_in_round(t, PRECOND_TAGS),
                "direction_bits": ledger.bits_in_round(t, DIRECTION_TAGS),
            },
        ))
        if stop:
            reached = eps is not None and fgap <= eps
            break
        x = x - eta * v
    ledger.check()
    return RunResult("qpgd", rows, x, ledger, prob.fingerprint(), eps if eps is not None else math.nan,
                     reached, info={"M_bar": pre.M_bar, "precond_error": pre.error, "params": params})


def qpgd_exact_gradient_mode(prob, params=None, T=50, eps=None, exact_M=False, net=None):
    """Preconditioned descent with exact global gradients.

    The preconditioner is the quantized ``M_bar`` (bits charged to ``net``), or
    the exact ``M`` with ``exact_M=True``. The bound column is
    ``(1 - 1/(2 kappa_l))^t D`` for ``M_bar`` and ``(1 - 1/kappa_l)^t ||x0 - x*||``
    for exact ``M``.
    """
    params = QpgdParams.from_problem(prob) if params is None else params
    if net is None:
        net = Network(Topology(prob.n))
    if exact_M:
        P = prob.M
        rate = 1.0 - 1.0 / params.kappa_l
        start = float(np.linalg.norm(prob.x0 - prob.x_star))
        info = {}
    else:
        pre = setup_preconditioner(prob, net)
        P = pre.M_bar
        rate = 1.0 - 1.0 / (2.0 * params.kappa_l)
        start = params.D
        info = {"M_bar": P, "precond_error": pre.error}
    chol = sla.cho_factor(P)
    x = np.array(prob.x0, dtype=float)
    rows = []
    reached = False
    for t in range(T + 1):
        err = float(np.linalg.norm(x - prob.x_star))
        fgap = _fgap(prob, x)
        bound = rate**t * start
        rows.append(RoundTrace(t=t, err=err, fgap=fgap, bound=bound, slacks={"iterate": bound - err},
                               bits_total=net.ledger.total_bits))
        if eps is not None and fgap <= eps:
            reached = True
            break
        if t == T:
            break
        x = x - params.eta * sla.cho_solve(chol, glm.global_grad(prob, x))
    return RunResult("qpgd-exact-grad", rows, x, net.ledger, prob.fingerprint(),
                     eps if eps is not None else math.nan, reached, info=info)
