"""Quantized distributed Newton's method.

Every round the workers send quantized local Hessians (referenced against
their previous estimates) and the master broadcasts a quantized average
``H_t``; then local Newton directions ``H_t^{-1} grad f_i`` are exchanged the
same way. Hessian radii follow ``G(t)`` and direction radii follow ``P(t)``,
both shrinking by ``(1 + alpha)/2`` per round.

The method is local: the start point must lie within ``alpha*mu/(2*sigma)``
of the global and every local minimizer.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from . import glm, protocol
from .errors import InputError, InvariantViolation
from .net import Network, Topology
from .sym_codec import phi, phi_inv, spectral_norm
from .trace import RoundTrace, RunResult

HESSIAN_TAGS = ("hess_up", "hess_down")
DIRECTION_TAGS = ("dir_up", "dir_down")
INVARIANTS = ("iterate", "hess_local", "hess_global", "dir_local", "dir_global")
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class NewtonParams:
    mu: float
    gamma: float
    sigma: float
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma <= 0.0:
            raise InputError("Newton's method needs a Hessian-Lipschitz constant sigma > 0; "
                             "for quadratics use the preconditioned gradient method instead")
        if not 0.0 < self.mu <= self.gamma:
            raise InputError(f"need 0 < mu <= gamma, got mu={self.mu}, gamma={self.gamma}")

    @classmethod
    def from_problem(cls, prob, alpha=0.5):
        return cls(prob.mu_local, prob.gamma_local, prob.sigma, alpha)

    @property
    def kappa(self):
        return self.gamma / self.mu

    @property
    def theta(self):
        return self.alpha * (1.0 - self.alpha) / 4.0

    @property
    def K(self):
        return 2.0 / self.alpha

    @property
    def rate(self):
        return (1.0 + self.alpha) / 2.0

    @property
    def ball(self):
        """Radius of the admissible start region."""
        return self.alpha * self.mu / (2.0 * self.sigma)

    def G(self, t):
        return 0.25 * self.mu * self.alpha * self.rate**t

    def P(self, t):
        return self.mu / (2.0 * self.sigma) * self.K * self.alpha * self.rate**t

    def bound(self, t):
        return self.ball * self.rate**t


@dataclass
class NewtonState:
    t: int
    x: np.ndarray
    H_loc: list
    H: np.ndarray
    v_loc: list
    v: np.ndarray
    slacks: dict = field(default_factory=dict)


def shrink_start(prob, params, x0=None, seed=0, factor=0.5, max_steps=200):
    """Pull a (random) start point toward ``x*`` until it lies in the Newton ball."""
    if x0 is None:
        x0 = prob.x_star + np.random.default_rng(seed).standard_normal(prob.d)
    x0 = np.asarray(x0, dtype=float)
    for _ in range(max_steps):
        if glm.start_radius(x0, prob.x_star, prob.local_minimizers) <= params.ball:
            return x0
        x0 = prob.x_star + factor * (x0 - prob.x_star)
    raise InputError(
        f"no start point within {params.ball:.3g} of every minimizer: the local minimizers are "
        f"{prob.C:.3g} apart from x*, increase regularization or lower sigma")


def _check_ball(prob, params, x0):
    r = glm.start_radius(x0, prob.x_star, prob.local_minimizers)
    if r > params.ball * (1.0 + ROUNDOFF):
        raise InputError(f"start point is {r:.6g} from a minimizer, outside the Newton ball "
                         f"alpha*mu/(2 sigma) = {params.ball:.6g}")


def _factor(H, params, t):
    lmin = float(np.linalg.eigvalsh(H)[0])
    if lmin < 0.5 * params.mu * (1.0 - 1e-9):
        raise InvariantViolation(f"round {t}: lambda_min(H_t) = {lmin:.6g} below mu/2 = {params.mu / 2:.6g}")
    return sla.cho_factor(H), lmin


def _qsgd_matrix_update(net, new, old, levels, rng, tag, upward):
    """QSGD-coded difference of packed matrices; returns the receivers' new estimates.

    Upward, ``new``/``old`` hold one matrix per node; downward, a single matrix.
    """
    from .baselines import QSGD_NORM_BITS, QsgdMessage, qsgd_quantize

    out, msgs = [], {}
    for i, (a, b) in enumerate(zip(new, old)):
        q, bits = qsgd_quantize(phi(a) - phi(b), levels, rng)
        out.append(b + phi_inv(q))
        msgs[i] = QsgdMessage(bits, QSGD_NORM_BITS if bits else 0)
    if upward:
        net.gather(msgs, tag)
    else:
        net.broadcast(msgs[0], tag)
    return out


def _hessian_slacks(prob, params, t, x, H_loc, H, checked):
    G = params.G(t)
    k = params.kappa
    loc = max(spectral_norm(H_loc[i] - glm.local_hessian(prob, i, x)) for i in range(prob.n))
    glob = spectral_norm(H - glm.global_hessian(prob, x))
    slacks = {"hess_local": G / (2.0 * k) - loc, "hess_global": G / k - glob}
    if checked:
        for key, val in slacks.items():
            if val < 0:
                raise InvariantViolation(f"round {t}: Hessian error bound {key} violated (slack {val:.3g})")
    return slacks


def _direction_slacks(prob, params, t, chol, x, v_loc, v, checked):
    P = params.P(t)
    g = [sla.cho_solve(chol, glm.local_grad(prob, i, x)) for i in range(prob.n)]
    g_avg = sla.cho_solve(chol, glm.global_grad(prob, x))
    slacks = {
        "dir_local": params.theta * P / 2.0 - max(float(np.linalg.norm(gi - vi)) for gi, vi in zip(g, v_loc)),
        "dir_global": params.theta * P - float(np.linalg.norm(g_avg - v)),
    }
    if checked:
        for key, val in slacks.items():
            if val < 0:
                raise InvariantViolation(f"round {t}: direction error bound {key} violated (slack {val:.3g})")
    return slacks


def newton_init(prob, params, net, x0=None, check=True, hessian_update="lattice", levels=16, rng=None):
    x = np.array(prob.x0 if x0 is None else x0, dtype=float)
    _check_ball(prob, params, x)
    n, d, k, m0 = prob.n, prob.d, params.kappa, net.master
    sq_d = math.sqrt(d)
    hess = [glm.local_hessian(prob, i, x) for i in range(n)]
    packed = [phi(h) for h in hess]
    G0, P0, theta = params.G(0), params.P(0), params.theta
    h_eps = G0 / (2.0 * math.sqrt(2.0) * k)
    slacks = {}

    if hessian_update == "lattice":
        dec, slacks["hess_uplink"] = protocol.uplink(
            net, packed, [packed[m0]] * n, 2.0 * sq_d * params.gamma, h_eps, "hess_up",
            "round 0 Hessian uplink ||phi(H_i) - phi(H_master)|| <= 2 sqrt(d) gamma")
        H_loc = [phi_inv(p) for p in dec]
        S = sum(H_loc) / n
        Hp, slacks["hess_downlink"] = protocol.downlink(
            net, phi(S), packed, sq_d * (G0 / (2.0 * k) + 2.0 * params.gamma), h_eps, "hess_down",
            "round 0 Hessian downlink ||phi(S_0) - phi(H_i)|| <= sqrt(d)(G/2k + 2 gamma)")
        H = phi_inv(Hp)
    else:
        zero = [np.zeros((d, d))] * n
        H_loc = _qsgd_matrix_update(net, hess, zero, levels, rng, "hess_up", True)
        S = sum(H_loc) / n
        H = _qsgd_matrix_update(net, [S], [np.zeros((d, d))], levels, rng, "hess_down", False)[0]
    slacks.update(_hessian_slacks(prob, params, 0, x, H_loc, H, check and hessian_update == "lattice"))

    chol, _ = _factor(H, params, 0)
    g = [sla.cho_solve(chol, glm.local_grad(prob, i, x)) for i in range(n)]
    q_eps = theta * P0 / 2.0
    v_loc, slacks["dir_uplink"] = protocol.uplink(
        net, g, [g[m0]] * n, 4.0 * k * P0, q_eps, "dir_up",
        "round 0 direction uplink (radius 4 kappa P)")
    p = sum(v_loc) / n
    v, slacks["dir_downlink"] = protocol.downlink(
        net, p, g, (theta / 2.0 + 4.0 * k) * P0, q_eps, "dir_down",
        "round 0 direction downlink (radius (theta/2 + 4 kappa) P)")
    slacks.update(_direction_slacks(prob, params, 0, chol, x, v_loc, v, check))
    return NewtonState(0, x, H_loc, H, v_loc, v, slacks)


def newton_round(state, prob, params, net, check=True, hessian_update="lattice", levels=16, rng=None):
    t = state.t + 1
    n, d, k = prob.n, prob.d, params.kappa
    sq_d = math.sqrt(d)
    x = state.x - state.v
    G, P, theta, a = params.G(t), params.P(t), params.theta, params.alpha
    h_eps = G / (2.0 * math.sqrt(2.0) * k)
    hess = [glm.local_hessian(prob, i, x) for i in range(n)]
    slacks = {}

    if hessian_update == "lattice":
        dec, slacks["hess_uplink"] = protocol.uplink(
            net, [phi(h) for h in hess], [phi(h) for h in state.H_loc], 10.0 * sq_d / (1.0 + a) * G, h_eps,
            "hess_up", f"round {t} Hessian uplink (radius 10 sqrt(d) G/(1+alpha))")
        H_loc = [phi_inv(p) for p in dec]
        S = sum(H_loc) / n
        Hp, slacks["hess_downlink"] = protocol.downlink(
            net, phi(S), [phi(state.H)] * n, sq_d * (1.0 / (2.0 * k) + 10.0 / (1.0 + a)) * G, h_eps,
            "hess_down", f"round {t} Hessian downlink (radius sqrt(d)(1/2k + 10/(1+alpha)) G)")
        H = phi_inv(Hp)
    else:
        H_loc = _qsgd_matrix_update(net, hess, state.H_loc, levels, rng, "hess_up", True)
        S = sum(H_loc) / n
        H = _qsgd_matrix_update(net, [S], [state.H], levels, rng, "hess_down", False)[0]
    slacks.update(_hessian_slacks(prob, params, t, x, H_loc, H, check and hessian_update == "lattice"))

    chol, _ = _factor(H, params, t)
    g = [sla.cho_solve(chol, glm.local_grad(prob, i, x)) for i in range(n)]
    q_eps = theta * P / 2.0
    v_loc, slacks["dir_uplink"] = protocol.uplink(
        net, g, state.v_loc, 11.0 * k * P, q_eps, "dir_up", f"round {t} direction uplink (radius 11 kappa P)")
    p = sum(v_loc) / n
    v, slacks["dir_downlink"] = protocol.downlink(
        net, p, [state.v] * n, (theta / 2.0 + 11.0 * k) * P, q_eps, "dir_down",
        f"round {t} direction downlink (radius (theta/2 + 11 kappa) P)")
    slacks.update(_direction_slacks(prob, params, t, chol, x, v_loc, v, check))
    return NewtonState(t, x, H_loc, H, v_loc, v, slacks)


def newton_run(prob, params=None, topo=None, net=None, T=100, eps=None, check=True,
               hessian_update="lattice", levels=16, seed=0):
    """Iterate quantized Newton rounds until ``f(x) - f* <= eps`` or ``T`` rounds.

    Row ``t`` of the trace describes ``x(t)`` together with the bits spent
    producing ``H_t`` and ``v(t)``; the row that meets the target is reported
    without communication.
    """
    if hessian_update not in ("lattice", "qsgd"):
        raise InputError(f"hessian_update must be 'lattice' or 'qsgd', got {hessian_update!r}")
    if prob.sigma <= 0.0:
        raise InputError("Newton's method needs sigma > 0 (quadratic losses have a constant Hessian; "
                         "use qpgd, or pass an explicit sigma)")
    params = NewtonParams.from_problem(prob) if params is None else params
    if net is None:
        net = Network(topo or Topology(prob.n))
    if net.n != prob.n:
        raise InputError(f"topology has {net.n} nodes but problem has {prob.n} shards")
    rng = np.random.default_rng(seed)
    ledger = net.ledger
    start_bits = ledger.total_bits
    kw = dict(check=check, hessian_update=hessian_update, levels=levels, rng=rng)

    rows, state, reached = [], None, False
    x = np.array(prob.x0, dtype=float)
    _check_ball(prob, params, x)
    for t in range(T + 1):
        net.round = t
        bits_before, over_before = ledger.total_bits, ledger.total_overhead
        if state is not None:
            x = state.x - state.v
        err = float(np.linalg.norm(x - prob.x_star))
        fgap = glm.global_value(prob, x) - prob.f_star
        bound = params.bound(t)
        slacks = {"iterate": bound - err}
        if check and slacks["iterate"] < -ROUNDOFF * bound:
            raise InvariantViolation(f"round {t}: ||x - x*|| = {err:.6g} exceeds bound {bound:.6g}")
        stop = (eps is not None and fgap <= eps) or t == T
        if not stop:
            if state is None:
                state = newton_init(prob, params, net, x, **kw)
            else:
                state = newton_round(state, prob, params, net, **kw)
            slacks.update(state.slacks)
        rows.append(RoundTrace(
            t=t, err=err, fgap=fgap, bound=bound, slacks=slacks,
            bits_round=ledger.total_bits - bits_before, bits_total=ledger.total_bits - start_bits,
            overhead_bits=ledger.total_overhead - over_before,
            channels={
                "hessian_bits": ledger.bits_in_round(t, HESSIAN_TAGS),
                "direction_bits": ledger.bits_in_round(t, DIRECTION_TAGS),
            },
        ))
        if stop:
            reached = eps is not None and fgap <= eps
            break
    ledger.check()
    return RunResult("qnewton", rows, x, ledger, prob.fingerprint(), eps if eps is not None else math.nan,
                     reached, info={"params": params, "hessian_update": hessian_update})
