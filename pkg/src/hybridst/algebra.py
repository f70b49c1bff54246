"""Exact arithmetic for the number fields behind the codes, plus QAM constellations.

Elements of Q(zeta_8) and Q(zeta_5) are stored as integer coordinate
vectors over the power basis ``1, z, z^2, z^3``.  Floating point only enters
through :func:`embed`.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "GaussianInteger",
    "CyclotomicElement",
    "Constellation",
    "embed",
    "sigma8",
    "sigma5",
    "norm8_to_qj",
    "from_difference_basis",
    "gray_pam_table",
    "make_constellation",
    "map_bits_to_symbols",
    "hard_demap",
    "CONSTELLATIONS",
]


@dataclass(frozen=True)
class GaussianInteger:
    a: int
    b: int

    def __post_init__(self):
        if int(self.a) != self.a or int(self.b) != self.b:
            raise ValueError(f"non-integer Gaussian integer {self.a}+{self.b}j")
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "b", int(self.b))

    def __add__(self, other: "GaussianInteger") -> "GaussianInteger":
        return GaussianInteger(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "GaussianInteger") -> "GaussianInteger":
        return GaussianInteger(self.a - other.a, self.b - other.b)

    def __mul__(self, other: "GaussianInteger") -> "GaussianInteger":
        return GaussianInteger(self.a * other.a - self.b * other.b,
                               self.a * other.b + self.b * other.a)

    def __neg__(self) -> "GaussianInteger":
        return GaussianInteger(-self.a, -self.b)

    def __complex__(self) -> complex:
        return complex(self.a, self.b)

    def conj(self) -> "GaussianInteger":
        return GaussianInteger(self.a, -self.b)

    def norm(self) -> int:
        """Squared modulus ``a^2 + b^2`` (exact)."""
        return self.a * self.a + self.b * self.b

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0


def _reduce5(c: list[int]) -> list[int]:
    # z^4 = -1 - z - z^2 - z^3; c has length up to 7 on entry
    c = list(c) + [0] * max(0, 8 - len(c))
    for k in range(len(c) - 1, 3, -1):
        if c[k]:
            v = c[k]
            c[k] = 0
            # z^k = z^(k-4) * z^4
            for i in range(4):
                c[k - 4 + i] -= v
    return c[:4]


def _reduce8(c: list[int]) -> list[int]:
    # z^4 = -1
    c = list(c) + [0] * max(0, 8 - len(c))
    for k in range(len(c) - 1, 3, -1):
        if c[k]:
            c[k - 4] -= c[k]
            c[k] = 0
    return c[:4]


_REDUCERS = {5: _reduce5, 8: _reduce8}


@dataclass(frozen=True)
class CyclotomicElement:
    """Element ``sum(coords[k] * zeta**k)`` of Q(zeta_n), n in {5, 8}."""

    root_order: int
    coords: tuple[int, int, int, int]

    def __post_init__(self):
        if self.root_order not in _REDUCERS:
            raise ValueError(f"unsupported root order {self.root_order}")
        coords = tuple(int(c) for c in self.coords)
        if len(coords) != 4:
            raise ValueError("a degree-4 element needs exactly 4 coordinates")
        object.__setattr__(self, "coords", coords)

    def __add__(self, other: "CyclotomicElement") -> "CyclotomicElement":
        self._check(other)
        return CyclotomicElement(self.root_order,
                                 tuple(x + y for x, y in zip(self.coords, other.coords)))

    def __sub__(self, other: "CyclotomicElement") -> "CyclotomicElement":
        self._check(other)
        return CyclotomicElement(self.root_order,
                                 tuple(x - y for x, y in zip(self.coords, other.coords)))

    def __mul__(self, other: "CyclotomicElement") -> "CyclotomicElement":
        self._check(other)
        prod = [0] * 7
        for i, x in enumerate(self.coords):
            if x:
                for k, y in enumerate(other.coords):
                    prod[i + k] += x * y
        return CyclotomicElement(self.root_order, tuple(_REDUCERS[self.root_order](prod)))

    def __neg__(self) -> "CyclotomicElement":
        return CyclotomicElement(self.root_order, tuple(-x for x in self.coords))

    def __complex__(self) -> complex:
        return embed(self)

    def is_zero(self) -> bool:
        return not any(self.coords)

    def _check(self, other):
        if other.root_order != self.root_order:
            raise ValueError("elements live in different fields")


def embed(x: CyclotomicElement) -> complex:
    """Complex value of ``x`` with ``zeta = exp(2*pi*j/root_order)``."""
    if x.root_order not in _REDUCERS:
        raise ValueError(f"unsupported root order {x.root_order}")
    z = cmath.exp(2j * cmath.pi / x.root_order)
    return sum(c * z**k for k, c in enumerate(x.coords))


def sigma8(x: CyclotomicElement) -> CyclotomicElement:
    """Generator ``zeta_8 -> -zeta_8`` of Gal(Q(zeta_8)/Q(j))."""
    if x.root_order != 8:
        raise ValueError("sigma8 acts on Q(zeta_8) only")
    c0, c1, c2, c3 = x.coords
    return CyclotomicElement(8, (c0, -c1, c2, -c3))


def sigma5(x: CyclotomicElement) -> CyclotomicElement:
    """Automorphism ``zeta_5 -> zeta_5**3`` (a generator of the Galois group)."""
    if x.root_order != 5:
        raise ValueError("sigma5 acts on Q(zeta_5) only")
    c0, c1, c2, c3 = x.coords
    # 1 -> 1, z -> z^3, z^2 -> z, z^3 -> z^4 = -1 - z - z^2 - z^3
    return CyclotomicElement(5, (c0 - c3, c2 - c3, -c3, c1 - c3))


def from_difference_basis(y: Sequence[int]) -> CyclotomicElement:
    """Element ``y1(1-z) + y2(z-z^2) + y3(z^2-z^3) + y4(z^3-z^4)`` of Z[zeta_5]."""
    if len(y) != 4:
        raise ValueError("expected 4 integer coordinates")
    y1, y2, y3, y4 = (int(v) for v in y)
    # z^4 = -1 - z - z^2 - z^3 turns -y4 z^4 into y4(1 + z + z^2 + z^3)
    return CyclotomicElement(5, (y1 + y4, -y1 + y2 + y4, -y2 + y3 + y4, -y3 + 2 * y4))


def norm8_to_qj(a: CyclotomicElement) -> GaussianInteger:
    """Relative norm N(a) = a * sigma(a) from Q(zeta_8) down to Q(j)."""
    if a.root_order != 8:
        raise ValueError("norm8_to_qj expects an element of Q(zeta_8)")
    c = (a * sigma8(a)).coords
    # fixed field of sigma is span{1, zeta_8^2 = j}
    assert c[1] == 0 and c[3] == 0, c
    return GaussianInteger(c[0], c[2])


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------

def gray_pam_table(bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Reflected-Gray labelled PAM with ``2**bits`` odd-integer levels.

    Level index ``i`` carries amplitude ``L-1-2i`` and label ``i ^ (i >> 1)``
    (MSB first), so label 0...0 sits on the largest positive amplitude.
    For one bit this is ``0 -> +1``, ``1 -> -1``.

    Returns ``(values, labels)`` with ``values`` sorted ascending and
    ``labels[i]`` the bit row of ``values[i]``.
    """
    L = 1 << bits
    idx = np.arange(L)
    amp = (L - 1) - 2 * idx
    gray = idx ^ (idx >> 1)
    labels = ((gray[:, None] >> np.arange(bits - 1, -1, -1)[None, :]) & 1).astype(np.int8)
    order = np.argsort(amp)
    return amp[order].astype(np.int64), labels[order]


@dataclass(frozen=True)
class Constellation:
    """Square Gray-labelled QAM.

    A symbol's label is ``bits_per_symbol`` bits: the first half selects the
    in-phase PAM level, the second half the quadrature level, each through
    :func:`gray_pam_table`.  ``points[i]`` is the point whose label is the
    binary expansion of ``i``.
    """

    name: str
    bits_per_symbol: int
    pam_values: np.ndarray
    pam_labels: np.ndarray
    points: tuple[GaussianInteger, ...]
    energy_scale: float

    @property
    def bits_per_axis(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def size(self) -> int:
        return 1 << self.bits_per_symbol

    def complex_points(self) -> np.ndarray:
        return np.array([complex(p) for p in self.points])


def make_constellation(name: str) -> Constellation:
    bits = {"QPSK": 2, "QAM16": 4, "QAM64": 6}.get(name.upper().replace("-", ""))
    if bits is None:
        raise ValueError(f"unknown constellation {name!r}")
    half = bits // 2
    values, labels = gray_pam_table(half)
    label_to_level = {int("".join(map(str, row)), 2): int(v) for v, row in zip(values, labels)}
    pts = []
    for i in range(1 << bits):
        hi, lo = i >> half, i & ((1 << half) - 1)
        pts.append(GaussianInteger(label_to_level[hi], label_to_level[lo]))
    # mean |p|^2 for square QAM with odd levels is 2(M-1)/3
    mean_energy = np.mean([p.norm() for p in pts])
    return Constellation(name.upper().replace("-", ""), bits, values, labels,
                         tuple(pts), float(1.0 / np.sqrt(mean_energy)))


CONSTELLATIONS = {n: make_constellation(n) for n in ("QPSK", "QAM16", "QAM64")}


def map_bits_to_symbols(bits, c: Constellation) -> list[GaussianInteger]:
    """Map a bit string (str of 0/1 or int sequence) to unnormalized QAM points."""
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits]
    bits = np.asarray(bits, dtype=np.int64).ravel()
    m = c.bits_per_symbol
    if bits.size % m:
        raise ValueError(f"{bits.size} bits is not a multiple of {m}")
    if bits.size == 0:
        return []
    weights = 1 << np.arange(m - 1, -1, -1)
    idx = bits.reshape(-1, m) @ weights
    return [c.points[i] for i in idx]


def bits_to_coords(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Vectorized mapping: bit array -> (n_symbols, 2) integer (re, im) levels."""
    h = c.bits_per_axis
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, 2, h)
    weights = 1 << np.arange(h - 1, -1, -1)
    label = bits @ weights
    # level lookup by Gray label
    lut = np.empty(1 << h, dtype=np.int64)
    lbl_int = c.pam_labels.astype(np.int64) @ weights
    lut[lbl_int] = c.pam_values
    return lut[label]


def hard_demap(symbols: Sequence[complex], c: Constellation) -> str:
    """Nearest-point demapping of (unnormalized) points back to a bit string."""
    pts = c.complex_points()
    out = []
    for s in symbols:
        i = int(np.argmin(np.abs(pts - complex(s))))
        out.append(format(i, f"0{c.bits_per_symbol}b"))
    return "".join(out)
