"""Dataset ingestion and synthetic problem generation."""

import math

import numpy as np

from .errors import InputError, RankDeficientError
from .glm import Logistic, Quadratic, compute_constants


def load_libsvm(path, n_features=None, binary=False):
    """Read a LIBSVM text file into a dense matrix.

    Each line is ``<label> <index>:<value> ...`` with 1-based, strictly
    ascending indices. Returns ``(A, labels)``. With ``binary=True`` labels are
    mapped to -1/+1 (positive labels to +1, everything else to -1).
    """
    rows, labels = [], []
    width = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad label {parts[0]!r}") from None
            entries = []
            last = 0
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    raise InputError(f"{path}:{lineno}: malformed feature {tok!r}") from None
                if not sep or j < 1:
                    raise InputError(f"{path}:{lineno}: malformed feature {tok!r}")
                if j <= last:
                    raise InputError(f"{path}:{lineno}: index {j} not strictly ascending (after {last})")
                entries.append((j, v))
                last = j
            width = max(width, last)
            rows.append(entries)

    d = width if n_features is None else int(n_features)
    if width > d:
        raise InputError(f"{path}: feature index {width} exceeds n_features={d}")
    A = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, v in entries:
            A[r, j - 1] = v
    y = np.asarray(labels)
    if binary:
        y = np.where(y > 0, 1.0, -1.0)
    return A, y


def write_libsvm(path, A, labels):
    """Write a dense matrix in LIBSVM format, omitting zeros."""
    A = np.asarray(A, dtype=float)
    with open(path, "w") as fh:
        for row, lab in zip(A, labels):
            feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0.0)
            fh.write(f"{float(lab)!r} {feats}".rstrip() + "\n")


def partition(A, t, n, rng):
    """Randomly split rows into ``n`` near-equal shards."""
    perm = rng.permutation(A.shape[0])
    return [(A[idx], t[idx]) for idx in np.array_split(perm, n)]


def make_loss(kind, rho=1e-2, penalty="margin"):
    if kind == "quadratic":
        return Quadratic()
    if kind == "logistic":
        return Logistic(rho=rho, penalty=penalty)
    raise InputError(f"unknown loss {kind!r}")


def gen_synthetic(m, d, n, seed, kind="quadratic", noise=0.0, x_scale=None, rho=1e-2,
                  penalty="margin", x0=None, sigma=None):
    """Gaussian design with a planted optimum, rows split evenly across nodes.

    Quadratic: ``A`` has unit-variance entries, the planted ``x_true`` has
    variance 1000 and targets are ``A x_true`` (plus ``noise`` times standard
    Gaussian noise). Logistic: labels are drawn from the logistic model with
    the planted weights (variance 1 by default).
    """
    if m <= d:
        raise InputError(f"need more rows than columns, got m={m}, d={d}")
    if n < 1 or n > m:
        raise InputError(f"node count must be in [1, m], got {n}")
    loss = make_loss(kind, rho, penalty)
    if x_scale is None:
        x_scale = math.sqrt(1000.0) if kind == "quadratic" else 1.0

    children = np.random.SeedSequence(seed).spawn(5)
    for attempt, child in enumerate(children):
        rng = np.random.default_rng(child)
        A = rng.standard_normal((m, d))
        x_true = x_scale * rng.standard_normal(d)
        z = A @ x_true
        if kind == "quadratic":
            t = z + noise * rng.standard_normal(m)
        else:
            p = 1.0 / (1.0 + np.exp(-(z + noise * rng.standard_normal(m))))
            t = np.where(rng.random(m) < p, 1.0, -1.0)
        shards = partition(A, t, n, rng)
        try:
            prob = compute_constants(shards, loss, x0=x0, sigma=sigma)
        except RankDeficientError:
            continue
        prob.meta.update(seed=seed, attempt=attempt, x_true=x_true, kind=kind)
        return prob
    raise RankDeficientError(f"could not draw a full-rank design in {len(children)} attempts")


def problem_from_arrays(A, t, n, seed, kind="quadratic", rho=1e-2, penalty="margin", x0=None, sigma=None):
    rng = np.random.default_rng(seed)
    shards = partition(np.asarray(A, dtype=float), np.asarray(t, dtype=float), n, rng)
    return compute_constants(shards, make_loss(kind, rho, penalty), x0=x0, sigma=sigma)
