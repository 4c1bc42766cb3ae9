import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qprecond import data, glm
from qprecond.errors import InputError, RankDeficientError


def _write(tmp_path, text):
    p = tmp_path / "d.svm"
    p.write_text(text)
    return p


def test_libsvm_basic_line(tmp_path):
    A, y = data.load_libsvm(_write(tmp_path, "1 1:0.5 3:2.0\n"), n_features=3)
    assert A.tolist() == [[0.5, 0.0, 2.0]] and y.tolist() == [1.0]


def test_libsvm_empty_features(tmp_path):
    A, y = data.load_libsvm(_write(tmp_path, "1 1:1\n-1\n"))
    assert A.tolist() == [[1.0], [0.0]] and y.tolist() == [1.0, -1.0]


@pytest.mark.parametrize("text, line", [
    ("1 1:0.5\n1 2:1 2:3\n", 2),
    ("1 3:1 2:1\n", 1),
    ("1 1:1\nabc 1:1\n", 2),
    ("1 1:1\n1 1-1\n", 2),
    ("1 0:1\n", 1),
])
def test_libsvm_errors_name_line(tmp_path, text, line):
    with pytest.raises(InputError, match=f":{line}:"):
        data.load_libsvm(_write(tmp_path, text))


def test_libsvm_binary_labels(tmp_path):
    _, y = data.load_libsvm(_write(tmp_path, "2 1:1\n0 1:2\n-1 1:3\n"), binary=True)
    assert y.tolist() == [1.0, -1.0, -1.0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 8), d=st.integers(1, 6))
def test_libsvm_roundtrip(tmp_path_factory, seed, m, d):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d)) * (rng.random((m, d)) < 0.6)
    lab = rng.integers(-3, 4, m).astype(float)
    path = tmp_path_factory.mktemp("rt") / "x.svm"
    data.write_libsvm(path, A, lab)
    B, y = data.load_libsvm(path, n_features=d)
    assert np.array_equal(A, B) and np.array_equal(lab, y)


def test_gen_synthetic_deterministic():
    a = data.gen_synthetic(200, 5, 4, 7)
    b = data.gen_synthetic(200, 5, 4, 7)
    assert a.fingerprint() == b.fingerprint()
    for (A1, t1), (A2, t2) in zip(a.shards, b.shards):
        assert A1.tobytes() == A2.tobytes() and t1.tobytes() == t2.tobytes()


def test_gen_synthetic_rejects_wide():
    with pytest.raises(InputError):
        data.gen_synthetic(5, 5, 1, 0)


def test_gen_synthetic_even_partition():
    p = data.gen_synthetic(203, 5, 4, 0)
    sizes = sorted(A.shape[0] for A, _ in p.shards)
    assert sum(sizes) == 203 and sizes[-1] - sizes[0] <= 1


def test_quadratic_planted_optimum():
    p = data.gen_synthetic(200, 5, 4, 7)
    assert p.f_star < 1e-8
    assert np.allclose(p.x_star, p.meta["x_true"], atol=1e-8)


def test_logistic_labels():
    p = data.gen_synthetic(100, 3, 2, 0, kind="logistic")
    assert all(set(np.unique(t)) <= {-1.0, 1.0} for _, t in p.shards)


def test_rank_failure_retries(monkeypatch):
    calls = []
    real = data.compute_constants

    def flaky(*a, **k):
        calls.append(1)
        if len(calls) < 3:
            raise RankDeficientError("forced")
        return real(*a, **k)

    monkeypatch.setattr(data, "compute_constants", flaky)
    p = data.gen_synthetic(30, 3, 2, 1)
    assert p.meta["attempt"] == 2


def test_rank_failure_gives_up(monkeypatch):
    def always(*a, **k):
        raise RankDeficientError("forced")

    monkeypatch.setattr(data, "compute_constants", always)
    with pytest.raises(RankDeficientError, match="5 attempts"):
        data.gen_synthetic(30, 3, 2, 1)


def test_problem_from_arrays():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((40, 3))
    p = data.problem_from_arrays(A, A @ np.ones(3), 4, seed=0)
    assert p.n == 4 and np.allclose(p.x_star, np.ones(3))
    assert glm.global_value(p, p.x_star) < 1e-20
