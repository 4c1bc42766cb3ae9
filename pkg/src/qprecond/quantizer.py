"""Deterministic cubic-lattice quantizer with reference-based decoding.

A vector ``x`` is rounded to the scaled integer lattice ``cell * Z^d`` and
only the lattice coordinates modulo ``modulus`` (the "colors") are sent. The
receiver recovers the full lattice point from any reference ``x_ref`` with
``||x - x_ref||_2 <= y`` by picking, per coordinate, the integer of the right
color closest to ``x_ref``.

With ``cell = 2*eps/sqrt(d)`` the per-coordinate rounding error is at most
``cell/2``, so the l2 error is at most ``eps``. The modulus is the smallest
integer for which the right color is unique inside the l-infinity ball of
radius ``y + eps`` around the reference.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractViolation

# float64 represents every integer below this exactly
_MAX_EXACT_INT = 2.0**53


@dataclass(frozen=True)
class QuantSpec:
    d: int
    y: float
    eps: float
    cell: float
    modulus: int
    bits_per_coord: int

    @property
    def payload_bits(self):
        return self.d * self.bits_per_coord


def make_spec(d, y, eps):
    """Build the lattice geometry for one ``(d, y, eps)`` quantization call."""
    d = int(d)
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    if not eps > 0 or not math.isfinite(eps):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    if not y >= 0 or not math.isfinite(y):
        raise ValueError(f"y must be nonnegative and finite, got {y}")
    eps = float(eps)
    y = float(y)
    cell = 2.0 * eps / math.sqrt(d)
    if y <= eps:
        return QuantSpec(d, y, eps, cell, 1, 0)
    modulus = _modulus(d, y, eps)
    bits = (modulus - 1).bit_length()
    return QuantSpec(d, y, eps, cell, modulus, bits)


def _modulus(d, y, eps):
    """``floor(sqrt(d) (y + eps) / eps) + 1`` evaluated exactly.

    The float estimate can land on the wrong side of an integer (e.g. d = 9),
    which would lose the strict margin ``modulus * cell > 2 (y + eps)``.
    Squaring keeps the comparison in rationals.
    """
    e, t = Fraction(eps), Fraction(y) + Fraction(eps)
    rhs = d * t * t
    m = math.floor(math.sqrt(d) * (y + eps) / eps) + 1
    while (m * e) ** 2 <= rhs:
        m += 1
    while m > 1 and ((m - 1) * e) ** 2 > rhs:
        m -= 1
    return m


@dataclass(frozen=True)
class EncodedBlob:
    colors: tuple
    spec: QuantSpec

    @property
    def payload_bits(self):
        return len(self.colors) * self.spec.bits_per_coord

    @property
    def overhead_bits(self):
        # y and eps travel as two float64 header scalars with every nonempty message
        return 128 if self.payload_bits else 0

    def pack(self):
        """Little-endian bit packing, coordinate 0 in the lowest bits."""
        b = self.spec.bits_per_coord
        value = 0
        for j, c in enumerate(self.colors):
            value |= c << (j * b)
        return value.to_bytes((self.payload_bits + 7) // 8, "little")

    @classmethod
    def unpack(cls, data, spec):
        b = spec.bits_per_coord
        if b == 0:
            return cls((), spec)
        value = int.from_bytes(data, "little")
        mask = (1 << b) - 1
        colors = tuple((value >> (j * b)) & mask for j in range(spec.d))
        return cls(colors, spec)


def encode(x, spec):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.d:
        raise ValueError(f"expected vector of length {spec.d}, got {x.shape[0]}")
    if spec.bits_per_coord == 0:
        return EncodedBlob((), spec)
    k = np.rint(x / spec.cell)  # half-to-even
    if not np.all(np.abs(k) < _MAX_EXACT_INT):
        raise OverflowError("lattice index exceeds exact float range; eps too small for |x|")
    colors = np.mod(k, spec.modulus)
    return EncodedBlob(tuple(int(c) for c in colors), spec)


def decode(blob, x_ref):
    spec = blob.spec
    x_ref = np.asarray(x_ref, dtype=float).reshape(-1)
    if x_ref.shape[0] != spec.d:
        raise ValueError(f"expected reference of length {spec.d}, got {x_ref.shape[0]}")
    if spec.bits_per_coord == 0:
        return x_ref.copy()
    m = spec.modulus
    c = np.asarray(blob.colors, dtype=float)
    r = x_ref / spec.cell
    base = c + m * np.floor((r - c) / m)
    # ascending candidates so argmin breaks ties toward the smaller integer
    cands = base[:, None] + m * np.array([-1.0, 0.0, 1.0, 2.0])[None, :]
    best = np.argmin(np.abs(cands * spec.cell - x_ref[:, None]), axis=1)
    k = cands[np.arange(spec.d), best]
    return k * spec.cell


def quantize(x, x_ref, y, eps, check=False, name="quantize"):
    """Encode ``x`` and decode it against ``x_ref``; returns ``(vector, payload_bits)``.

    With ``check=True`` the distance precondition is verified first and a
    :class:`ContractViolation` is raised when it fails.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    x_ref = np.asarray(x_ref, dtype=float).reshape(-1)
    if check:
        dist = float(np.linalg.norm(x - x_ref))
        if dist > y:
            raise ContractViolation(name, dist, y)
    spec = make_spec(x.shape[0], y, eps)
    blob = encode(x, spec)
    return decode(blob, x_ref), blob.payload_bits
