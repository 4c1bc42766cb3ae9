"""Generalized linear model objectives split across nodes.

Node ``i`` owns rows ``A_i`` and targets ``t_i`` and the local cost
``f_i(x) = l_i(A_i x)``; the global cost is the node average
``f(x) = (1/n) sum_i f_i(x)``.

Two losses are provided:

* :class:`Quadratic`: ``l(z) = 0.5 * ||z - b||^2`` (``mu_l = gamma_l = 1``).
* :class:`Logistic`: ``sum log(1 + exp(-y z))`` plus an l2 term of weight
  ``rho``. With ``penalty="margin"`` (default) the l2 term acts on the margins
  ``z = A x``, which keeps the problem a true GLM with ``mu_l = rho`` and
  ``gamma_l = 1/4 + rho``. With ``penalty="weight"`` it is the usual ridge
  term ``rho/2 ||x||^2`` added to every ``f_i``; that model is not a GLM, so
  ``mu_l``/``gamma_l`` are undefined and the preconditioned method refuses it.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.special import expit, log_expit

from .errors import InputError, RankDeficientError

# sup over z of |d^3/dz^3 log(1 + exp(-z))|
LOGISTIC_THIRD_DERIV_SUP = 1.0 / (6.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Quadratic:
    name = "quadratic"
    mu_l = 1.0
    gamma_l = 1.0

    def value(self, z, t):
        r = z - t
        return 0.5 * float(r @ r)

    def grad(self, z, t):
        return z - t

    def curvature(self, z, t):
        return np.ones_like(z)


@dataclass(frozen=True)
class Logistic:
    rho: float = 1e-2
    penalty: str = "margin"
    name = "logistic"

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.penalty not in ("margin", "weight"):
            raise ValueError(f"penalty must be 'margin' or 'weight', got {self.penalty!r}")

    @property
    def mu_l(self):
        return self.rho if self.penalty == "margin" else None

    @property
    def gamma_l(self):
        return 0.25 + self.rho if self.penalty == "margin" else None

    def _margin_rho(self):
        return self.rho if self.penalty == "margin" else 0.0

    def value(self, z, t):
        return float(-np.sum(log_expit(t * z)) + 0.5 * self._margin_rho() * (z @ z))

    def grad(self, z, t):
        return -t * expit(-t * z) + self._margin_rho() * z

    def curvature(self, z, t):
        s = expit(t * z)
        return s * (1.0 - s) + self._margin_rho()


@dataclass(frozen=True, eq=False)
class GlmProblem:
    shards: tuple  # ((A_i, t_i), ...)
    loss: object
    M: np.ndarray
    lam_min_M: float
    lam_max_M: float
    local_M: tuple
    mu: float  # extreme Hessian eigenvalues of the global f
    gamma: float
    mu_local: float  # uniform bounds valid for every f_i and f, everywhere
    gamma_local: float
    sigma: float
    x_star: np.ndarray
    f_star: float
    local_minimizers: tuple
    local_minima: tuple
    x0: np.ndarray
    D: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.shards)

    @property
    def d(self):
        return self.M.shape[0]

    @property
    def kappa_M(self):
        return self.lam_max_M / self.lam_min_M

    @property
    def mu_l(self):
        return self.loss.mu_l

    @property
    def gamma_l(self):
        return self.loss.gamma_l

    @property
    def kappa_l(self):
        if self.mu_l is None:
            return None
        return self.gamma_l / self.mu_l

    @property
    def kappa(self):
        return self.gamma / self.mu

    @property
    def kappa_local(self):
        return self.gamma_local / self.mu_local

    @property
    def C(self):
        """Largest distance between the global and a local minimizer."""
        return max(float(np.linalg.norm(self.x_star - xi)) for xi in self.local_minimizers)

    @property
    def c(self):
        """Largest magnitude of a local minimum value."""
        return max(abs(v) for v in self.local_minima)

    @property
    def is_glm(self):
        return self.mu_l is not None

    def fingerprint(self):
        """Stable hash of the data and loss, used to check that runs share a problem."""
        import hashlib

        h = hashlib.sha256()
        h.update(repr(self.loss).encode())
        for A, t in self.shards:
            h.update(np.ascontiguousarray(A).tobytes())
            h.update(np.ascontiguousarray(t).tobytes())
        return h.hexdigest()[:16]

    def with_start(self, x0):
        """Copy of the problem with a new starting point and the matching oracle radius."""
        from dataclasses import replace

        x0 = np.asarray(x0, dtype=float)
        return replace(self, x0=x0, D=start_radius(x0, self.x_star, self.local_minimizers))


def _check_x(prob, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.d,):
        raise ValueError(f"expected vector of length {prob.d}, got shape {x.shape}")
    return x


def _weight_rho(loss):
    return loss.rho if isinstance(loss, Logistic) and loss.penalty == "weight" else 0.0


def shard_value(loss, A, t, x):
    rho = _weight_rho(loss)
    return loss.value(A @ x, t) + 0.5 * rho * float(x @ x)


def shard_grad(loss, A, t, x):
    return A.T @ loss.grad(A @ x, t) + _weight_rho(loss) * x


def shard_hessian(loss, A, t, x):
    w = loss.curvature(A @ x, t)
    H = (A.T * w) @ A + _weight_rho(loss) * np.eye(A.shape[1])
    return 0.5 * (H + H.T)


def local_value(prob, i, x):
    A, t = prob.shards[i]
    return shard_value(prob.loss, A, t, _check_x(prob, x))


def local_grad(prob, i, x):
    A, t = prob.shards[i]
    return shard_grad(prob.loss, A, t, _check_x(prob, x))


def local_hessian(prob, i, x):
    A, t = prob.shards[i]
    return shard_hessian(prob.loss, A, t, _check_x(prob, x))


def global_value(prob, x):
    return sum(local_value(prob, i, x) for i in range(prob.n)) / prob.n


def global_grad(prob, x):
    return sum(local_grad(prob, i, x) for i in range(prob.n)) / prob.n


def global_hessian(prob, x):
    H = sum(local_hessian(prob, i, x) for i in range(prob.n)) / prob.n
    return 0.5 * (H + H.T)


def _newton_minimize(value, grad, hess, x, tol=1e-12, max_iter=200):
    """Damped Newton with Armijo backtracking; stops at ``||grad|| <= tol`` or stagnation."""
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        g = grad(x)
        if np.linalg.norm(g) <= tol:
            break
        step = sla.solve(hess(x), g, assume_a="pos")
        fx = value(x)
        s = 1.0
        while s > 1e-12:
            x_new = x - s * step
            if value(x_new) <= fx - 1e-4 * s * float(g @ step):
                break
            s *= 0.5
        else:
            x_new = x - s * step
        if np.linalg.norm(x_new - x) <= 1e-15 * max(1.0, np.linalg.norm(x)):
            x = x_new
            break
        x = x_new
    return x


def _shard_minimizer(loss, A, t):
    d = A.shape[1]
    if isinstance(loss, Quadratic):
        x, *_ = np.linalg.lstsq(A, t, rcond=None)
        return x
    return _newton_minimize(
        lambda x: shard_value(loss, A, t, x),
        lambda x: shard_grad(loss, A, t, x),
        lambda x: shard_hessian(loss, A, t, x),
        np.zeros(d),
    )


def start_radius(x0, x_star, local_minimizers):
    x0 = np.asarray(x0, dtype=float)
    dists = [np.linalg.norm(x0 - x_star)] + [np.linalg.norm(x0 - xi) for xi in local_minimizers]
    return float(max(dists))


def logistic_sigma(shards):
    """Hessian-Lipschitz bound for logistic shards.

    ``||A^T diag(w) A|| <= max_j |w_j| * ||A^T A||`` and
    ``|w_j| <= c3 * ||a_j|| * ||x - x'||`` give
    ``sigma_i = c3 * max_j ||a_j|| * lambda_max(A_i^T A_i)``; the global ``f``
    is an average so the maximum over nodes bounds it too.
    """
    best = 0.0
    for A, _ in shards:
        if A.shape[0] == 0:
            continue
        row_max = float(np.max(np.linalg.norm(A, axis=1)))
        lam = float(np.linalg.eigvalsh(A.T @ A)[-1])
        best = max(best, LOGISTIC_THIRD_DERIV_SUP * row_max * lam)
    return best


def compute_constants(shards, loss, x0=None, sigma=None, sample_points=20, seed=0):
    """Build a :class:`GlmProblem`, computing every constant by direct eigendecomposition.

    ``sigma`` overrides the Hessian-Lipschitz constant (required to be given
    explicitly for quadratic losses, whose Hessian is constant).
    """
    shards = tuple((np.asarray(A, dtype=float), np.asarray(t, dtype=float).reshape(-1)) for A, t in shards)
    if not shards:
        raise InputError("need at least one shard")
    d = shards[0][0].shape[1]
    for i, (A, t) in enumerate(shards):
        if A.ndim != 2 or A.shape[1] != d:
            raise InputError(f"shard {i}: expected {d} columns, got shape {A.shape}")
        if t.shape[0] != A.shape[0]:
            raise InputError(f"shard {i}: {A.shape[0]} rows but {t.shape[0]} targets")
    if isinstance(loss, Logistic):
        for i, (_, t) in enumerate(shards):
            if not np.all(np.isin(t, (-1.0, 1.0))):
                raise InputError(f"shard {i}: logistic labels must be -1 or +1")

    A_all = np.vstack([A for A, _ in shards])
    sv = np.linalg.svd(A_all, compute_uv=False)
    if A_all.shape[0] < d or sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficientError(
            f"stacked data matrix ({A_all.shape[0]}x{d}) is not of full column rank "
            f"(smallest/largest singular value {sv[-1]:.3g}/{sv[0]:.3g})"
        )

    n = len(shards)
    local_M = tuple(A.T @ A for A, _ in shards)
    M = sum(local_M) / n
    M = 0.5 * (M + M.T)
    wM = np.linalg.eigvalsh(M)
    lam_min_M, lam_max_M = float(wM[0]), float(wM[-1])
    local_eigs = [np.linalg.eigvalsh(Mi) for Mi in local_M]

    def f_val(x):
        return sum(shard_value(loss, A, t, x) for A, t in shards) / n

    def f_grad(x):
        return sum(shard_grad(loss, A, t, x) for A, t in shards) / n

    def f_hess(x):
        return sum(shard_hessian(loss, A, t, x) for A, t in shards) / n

    if isinstance(loss, Quadratic):
        b_all = np.concatenate([t for _, t in shards])
        x_star, *_ = np.linalg.lstsq(A_all, b_all, rcond=None)
        # one refinement step against the normal equations
        x_star = x_star - sla.solve(M, f_grad(x_star), assume_a="pos")
    else:
        x_star = _newton_minimize(f_val, f_grad, f_hess, np.zeros(d))
    f_star = f_val(x_star)
    local_minimizers = tuple(_shard_minimizer(loss, A, t) for A, t in shards)
    local_minima = tuple(shard_value(loss, A, t, xi) for (A, t), xi in zip(shards, local_minimizers))

    if x0 is None:
        x0 = np.zeros(d)
    x0 = np.asarray(x0, dtype=float)

    weight_rho = _weight_rho(loss)
    if isinstance(loss, Quadratic):
        mu, gamma = lam_min_M, lam_max_M
        mu_local = min(float(w[0]) for w in local_eigs)
        gamma_local = max(float(w[-1]) for w in local_eigs)
        sig = 0.0
    else:
        rng = np.random.default_rng(seed)
        scale = max(1.0, float(np.linalg.norm(x_star)))
        pts = [x_star, x0, *local_minimizers]
        pts += [x_star + scale * rng.standard_normal(d) for _ in range(sample_points)]
        eig = [np.linalg.eigvalsh(f_hess(p)) for p in pts]
        mu = min(float(w[0]) for w in eig)
        gamma = max(float(w[-1]) for w in eig)
        if loss.penalty == "margin":
            mu_local = loss.mu_l * min(float(w[0]) for w in local_eigs)
            gamma_local = loss.gamma_l * max(float(w[-1]) for w in local_eigs)
        else:
            mu_local = weight_rho + 0.0
            gamma_local = 0.25 * max(float(w[-1]) for w in local_eigs) + weight_rho
        sig = logistic_sigma(shards)
    if sigma is not None:
        sig = float(sigma)

    return GlmProblem(
        shards=shards,
        loss=loss,
        M=M,
        lam_min_M=lam_min_M,
        lam_max_M=lam_max_M,
        local_M=local_M,
        mu=mu,
        gamma=gamma,
        mu_local=mu_local,
        gamma_local=gamma_local,
        sigma=sig,
        x_star=x_star,
        f_star=f_star,
        local_minimizers=local_minimizers,
        local_minima=local_minima,
        x0=x0,
        D=start_radius(x0, x_star, local_minimizers),
    )


def eigen_bound_slack(prob, x):
    """Slacks of the two covariance eigenvalue bounds for ``nabla^2 f(x)``.

    Returns ``(lower, upper)`` where ``lower = lambda_min(H) - mu_l*lambda_min(M)``
    and ``upper = gamma_l*lambda_max(M) - lambda_max(H)``; both are >= 0 for
    a GLM up to rounding.
    """
    if not prob.is_glm:
        raise ValueError("eigenvalue bounds need a GLM loss (mu_l, gamma_l defined)")
    w = np.linalg.eigvalsh(global_hessian(prob, x))
    return float(w[0] - prob.mu_l * prob.lam_min_M), float(prob.gamma_l * prob.lam_max_M - w[-1])


def value_radius(prob, x0):
    """Starting radius from function values: ``D^2 = max(2 f(x0)/mu, 2 f_i(x0)/mu_i)``.

    Uses that every loss here is nonnegative, so ``f - f* <= f``.
    """
    if not prob.is_glm:
        raise ValueError("value-based radius needs a GLM loss")
    vals = [2.0 * global_value(prob, x0) / (prob.mu_l * prob.lam_min_M)]
    for i, Mi in enumerate(prob.local_M):
        mu_i = prob.mu_l * float(np.linalg.eigvalsh(Mi)[0])
        if mu_i <= 0:
            raise ValueError(f"shard {i} is not strongly convex; cannot bound its minimizer distance")
        vals.append(2.0 * local_value(prob, i, x0) / mu_i)
    return math.sqrt(max(vals))
