"""Symmetric-matrix vectorization and spectral-norm quantization.

Symmetric matrices are plain ``(d, d)`` float arrays. ``phi`` packs the upper
triangle row by row into a vector of length ``d(d+1)/2``; ``phi_inv`` mirrors
it back. Because ``||P - P'||_2 <= sqrt(2) * ||phi(P) - phi(P')||_2``, a
vector quantizer with l2 error ``eps`` on the packed form gives spectral
error at most ``sqrt(2) * eps``.
"""

import math

import numpy as np

from . import quantizer


def symmetrize(P):
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def packed_dim(d):
    return d * (d + 1) // 2


def dim_from_packed(length):
    d = int(round((math.sqrt(8 * length + 1) - 1) / 2))
    if packed_dim(d) != length:
        raise ValueError(f"length {length} is not a triangular number d(d+1)/2")
    return d


def phi(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    return P[np.triu_indices(P.shape[0])].copy()


def phi_inv(v):
    v = np.asarray(v, dtype=float).reshape(-1)
    d = dim_from_packed(v.shape[0])
    P = np.zeros((d, d))
    iu = np.triu_indices(d)
    P[iu] = v
    P[(iu[1], iu[0])] = v
    return P


def spectral_norm(P):
    """Largest absolute eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(np.asarray(P, dtype=float))
    return float(np.max(np.abs(w)))


def frobenius_norm(P):
    return float(np.linalg.norm(np.asarray(P, dtype=float), "fro"))


def lambda_min(P):
    return float(np.linalg.eigvalsh(np.asarray(P, dtype=float))[0])


def quantize_sym(P, P_ref, y_packed, eps_packed, check=False, name="quantize_sym"):
    """Quantize ``P`` in packed coordinates against ``P_ref``.

    Returns ``(matrix, payload_bits)``; the matrix is within
    ``sqrt(2) * eps_packed`` of ``P`` in spectral norm whenever
    ``||phi(P) - phi(P_ref)|| <= y_packed``.
    """
    q, bits = quantizer.quantize(phi(P), phi(P_ref), y_packed, eps_packed, check=check, name=name)
    return phi_inv(q), bits
