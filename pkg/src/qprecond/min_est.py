"""Quantized estimate of the optimal value ``f*`` at the master.

Once an iterate ``x_t`` is within ``sqrt(eps/gamma)`` of ``x*``, every node
sends ``f_i(x_t)`` through the scalar lattice quantizer (radius
``2(gamma C^2 + c)``, accuracy ``eps/2``) and the master averages. The
result is within ``eps`` of ``f*``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import glm, protocol
from .errors import InputError
from .quantizer import make_spec


@dataclass(frozen=True)
class MinEstConfig:
    C: float  # max_i ||x* - x_i*||
    c: float  # max_i |f_i*|
    eps: float
    gamma: float  # smoothness shared by every f_i

    def __post_init__(self):
        if self.C < 0 or self.c < 0:
            raise InputError(f"C and c must be nonnegative, got C={self.C}, c={self.c}")
        if not self.eps > 0:
            raise InputError(f"eps must be positive, got {self.eps}")
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def from_problem(cls, prob, eps, fallback=False):
        """Bounds from the oracle minimizers, or with ``fallback=True`` take
        ``c = n f(x0)``, valid because every loss here is nonnegative."""
        c = prob.n * glm.global_value(prob, prob.x0) if fallback else prob.c
        return cls(prob.C, c, float(eps), prob.gamma_local)

    @property
    def y(self):
        return 2.0 * (self.gamma * self.C**2 + self.c)

    @property
    def radius(self):
        """Required distance of the iterate from ``x*``."""
        return math.sqrt(self.eps / self.gamma)

    def bits_per_worker(self):
        return make_spec(1, self.y, self.eps / 2.0).payload_bits


def small_enough(cfg):
    """Whether ``eps`` is small relative to the spread of local minimizers.

    ``(C + sqrt(eps/gamma))^2 <= 2 C^2`` keeps every ``f_i(x_t)`` inside the
    quantizer radius around ``f_{i0}(x_t)``.
    """
    r = cfg.radius
    return cfg.C**2 + r**2 + 2.0 * cfg.C * r <= 2.0 * cfg.C**2


def estimate_min(prob, x_t, cfg, net, check=True):
    """Return the master's estimate of ``f*`` from quantized local values at ``x_t``."""
    x_t = np.asarray(x_t, dtype=float)
    if check:
        dist = float(np.linalg.norm(x_t - prob.x_star))
        if dist > cfg.radius:
            raise InputError(f"iterate is {dist:.3g} from x*, needs to be within sqrt(eps/gamma) = {cfg.radius:.3g}")
        if not small_enough(cfg):
            raise InputError(
                f"eps={cfg.eps:g} is too large for C={cfg.C:.3g}: need (C + sqrt(eps/gamma))^2 <= 2 C^2")
    vals = [np.array([glm.local_value(prob, i, x_t)]) for i in range(prob.n)]
    m0 = net.master
    q, _ = protocol.uplink(net, vals, [vals[m0]] * prob.n, cfg.y, cfg.eps / 2.0, "fmin",
                           "local value uplink |f_i(x) - f_master(x)| <= 2(gamma C^2 + c)")
    return float(np.mean([qi[0] for qi in q]))
