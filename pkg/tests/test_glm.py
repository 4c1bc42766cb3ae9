import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qprecond import glm
from qprecond.data import gen_synthetic
from qprecond.errors import RankDeficientError
from qprecond.glm import Logistic, Quadratic, compute_constants

from oracles import fd_grad, fd_jacobian


def _single(A, t, loss=Quadratic()):
    return compute_constants([(np.asarray(A, float), np.asarray(t, float))], loss)


def test_quadratic_perfect_fit_gradient_zero():
    A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])
    x = np.array([0.5, -1.0])
    p = _single(A, A @ x)
    assert np.allclose(glm.local_grad(p, 0, x), 0.0, atol=1e-14)


def test_quadratic_identity_gradient_is_x():
    p = _single(np.eye(3), np.zeros(3))
    x = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(glm.local_grad(p, 0, x), x)


@pytest.mark.parametrize("penalty", ["margin", "weight"])
def test_logistic_single_point_gradient(penalty):
    A = np.array([[1.0, 0.0]])
    g = glm.shard_grad(Logistic(0.3, penalty), A, np.array([1.0]), np.zeros(2))
    assert g.tolist() == [-0.5, 0.0]


def test_logistic_single_point_hessian():
    A, t = np.array([[1.0, 0.0]]), np.array([1.0])
    rho = 0.3
    H_w = glm.shard_hessian(Logistic(rho, "weight"), A, t, np.zeros(2))
    assert np.allclose(H_w, 0.25 * np.outer(A[0], A[0]) + rho * np.eye(2))
    # margin penalty regularizes along the data directions only
    H_m = glm.shard_hessian(Logistic(rho, "margin"), A, t, np.zeros(2))
    assert np.allclose(H_m, (0.25 + rho) * np.outer(A[0], A[0]))


def test_empty_shard_hessian_is_rho_identity():
    H = glm.shard_hessian(Logistic(0.7, "weight"), np.zeros((0, 3)), np.zeros(0), np.ones(3))
    assert np.array_equal(H, 0.7 * np.eye(3))


def test_quadratic_hessian_constant():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((10, 3))
    p = _single(A, rng.standard_normal(10))
    for _ in range(3):
        assert np.allclose(glm.local_hessian(p, 0, rng.standard_normal(3)), A.T @ A)


def test_dimension_mismatch():
    p = _single(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        glm.local_grad(p, 0, np.zeros(3))


def test_constants_identity():
    p = _single(np.eye(3), np.ones(3))
    assert np.array_equal(p.M, np.eye(3))
    assert p.lam_min_M == pytest.approx(1) and p.lam_max_M == pytest.approx(1) and p.kappa_M == pytest.approx(1)
    assert p.mu == pytest.approx(1) and p.gamma == pytest.approx(1)


def test_constants_diag():
    p = _single(np.diag([1.0, 3.0]), np.zeros(2))
    assert p.lam_min_M == pytest.approx(1.0)
    assert p.lam_max_M == pytest.approx(9.0)
    assert p.kappa_M == pytest.approx(9.0)


def test_rank_deficient_rejected():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficientError, match="full column rank"):
        _single(A, np.zeros(3))


def test_loss_constants():
    assert (Quadratic.mu_l, Quadratic.gamma_l) == (1.0, 1.0)
    assert Logistic(0.2).mu_l == 0.2 and Logistic(0.2).gamma_l == pytest.approx(0.45)
    assert Logistic(0.2, "weight").mu_l is None


def test_covariance_average():
    p = gen_synthetic(60, 4, 3, 5)
    M = sum(A.T @ A for A, _ in p.shards) / 3
    assert np.linalg.norm(p.M - M) <= 1e-12 * np.linalg.norm(M)


def test_identical_shards_global_equals_local():
    rng = np.random.default_rng(3)
    A, t = rng.standard_normal((8, 3)), np.sign(rng.standard_normal(8))
    p = compute_constants([(A, t)] * 3, Logistic(0.1))
    x = rng.standard_normal(3)
    assert glm.global_value(p, x) == pytest.approx(glm.local_value(p, 1, x), rel=1e-12)
    assert np.allclose(glm.global_grad(p, x), glm.local_grad(p, 2, x), rtol=1e-12)
    assert np.allclose(glm.global_hessian(p, x), glm.local_hessian(p, 0, x), rtol=1e-12)


@pytest.mark.parametrize("kind", ["quadratic", "logistic"])
def test_oracle_minimizers(kind):
    p = gen_synthetic(120, 4, 3, 11, kind=kind, noise=0.5)
    assert np.linalg.norm(glm.global_grad(p, p.x_star)) <= 1e-10 * max(1.0, abs(p.f_star))
    for i, xi in enumerate(p.local_minimizers):
        assert np.linalg.norm(glm.local_grad(p, i, xi)) <= 1e-8 * max(1.0, abs(p.local_minima[i]))


def test_quadratic_global_hessian_is_M():
    p = gen_synthetic(50, 3, 2, 0)
    H = glm.global_hessian(p, np.ones(3))
    assert np.allclose(H, p.M, rtol=1e-12)
    assert np.allclose(np.linalg.solve(p.M, H), np.eye(3), atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["quadratic", "logistic"]),
       penalty=st.sampled_from(["margin", "weight"]))
def test_derivatives_match_finite_differences(seed, kind, penalty):
    p = gen_synthetic(40, 3, 2, seed, kind=kind, penalty=penalty, rho=0.1)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        x = p.x_star + rng.standard_normal(3)
        g = glm.global_grad(p, x)
        g_fd = fd_grad(lambda z: glm.global_value(p, z), x, h=1e-5)
        assert np.linalg.norm(g - g_fd) <= 1e-6 * max(1.0, np.linalg.norm(g))
        H = glm.global_hessian(p, x)
        H_fd = fd_jacobian(lambda z: glm.global_grad(p, z), x, h=1e-5)
        assert np.linalg.norm(H - H_fd) <= 1e-5 * max(1.0, np.linalg.norm(H))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["quadratic", "logistic"]))
def test_eigenvalue_bounds_hold(seed, kind):
    p = gen_synthetic(60, 4, 3, seed, kind=kind, rho=0.05)
    rng = np.random.default_rng(seed)
    for x in [p.x_star, p.x0] + [rng.standard_normal(4) * 3 for _ in range(5)]:
        lo, hi = glm.eigen_bound_slack(p, x)
        assert lo >= -1e-9 * p.lam_max_M and hi >= -1e-9 * p.lam_max_M


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_sigma_bounds_hessian_variation(seed):
    """Finite-difference Hessian Lipschitz ratios never exceed the analytic sigma."""
    p = gen_synthetic(60, 3, 2, seed, kind="logistic", rho=0.5)
    rng = np.random.default_rng(seed)
    for _ in range(30):
        x = p.x_star + 2 * rng.standard_normal(3)
        dx = rng.standard_normal(3) * 10 ** rng.uniform(-4, 0)
        for i in range(p.n):
            dH = glm.local_hessian(p, i, x + dx) - glm.local_hessian(p, i, x)
            assert np.linalg.norm(dH, 2) <= p.sigma * np.linalg.norm(dx) * (1 + 1e-9)


def test_uniform_bounds_hold_for_every_node():
    p = gen_synthetic(90, 3, 3, 2, kind="logistic", rho=1.0)
    rng = np.random.default_rng(0)
    for x in [p.x_star] + [p.x_star + rng.standard_normal(3) for _ in range(10)]:
        for i in range(p.n):
            w = np.linalg.eigvalsh(glm.local_hessian(p, i, x))
            assert p.mu_local <= w[0] * (1 + 1e-12) and w[-1] <= p.gamma_local * (1 + 1e-12)


def test_start_radius_and_D():
    p = gen_synthetic(50, 3, 2, 4)
    x0 = np.ones(3)
    q = p.with_start(x0)
    assert q.D == pytest.approx(max([np.linalg.norm(x0 - p.x_star)] +
                                    [np.linalg.norm(x0 - xi) for xi in p.local_minimizers]))
    assert glm.value_radius(q, x0) >= q.D * (1 - 1e-9)


def test_fingerprint_depends_on_data_only():
    p = gen_synthetic(50, 3, 2, 4)
    assert p.fingerprint() == p.with_start(np.ones(3)).fingerprint()
    assert p.fingerprint() != gen_synthetic(50, 3, 2, 5).fingerprint()


def test_C_and_c():
    p = gen_synthetic(80, 3, 4, 1, noise=1.0)
    assert p.C == pytest.approx(max(np.linalg.norm(p.x_star - xi) for xi in p.local_minimizers))
    assert p.c == pytest.approx(max(abs(v) for v in p.local_minima))
    assert math.isfinite(p.kappa_local)
