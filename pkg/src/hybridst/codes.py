"""Space-time lattice codes in dispersion-matrix form.

Every code is a real-linear map from an integer coefficient vector ``g`` of
length ``K`` to an ``n_t x T`` complex matrix, ``X = sum_k g_k B_k``.  The
``B_k`` are obtained by pushing unit vectors through the code's printed
matrix, so the printed form stays the single source of truth.

Coefficient layouts
-------------------
* Gaussian-integer slots ``c`` use two coordinates ``(Re c, Im c)``.
* Q(zeta_8) slots ``a = a0 + a1 z + a2 z^2 + a3 z^3`` use four coordinates.
  Two QAM symbols ``(s, t)`` fill one such slot as ``a = s + t*zeta_8``,
  i.e. ``(a0, a1, a2, a3) = (Re s, Re t, Im s, Im t)`` because ``z^2 = j``.
* The C1 code uses four integers ``y1..y4`` per ``x_i`` (16 in total); QAM
  symbols ``p, q`` fill them as ``(Re p, Im p, Re q, Im q)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algebra import GaussianInteger

__all__ = [
    "CodeDescriptor",
    "CODE_NAMES",
    "make_code",
    "encode",
    "group_symbols",
    "ungroup_coefficients",
    "write_descriptor",
    "read_descriptor",
]

Z8 = np.exp(2j * np.pi / 8)
Z5 = np.exp(2j * np.pi / 5)
C1_R = (8.0 / 9.0) ** 0.25


@dataclass(frozen=True, eq=False)
class CodeDescriptor:
    name: str
    n_t: int
    T: int
    K: int
    dispersion: np.ndarray  # (K, n_t, T) complex
    sat_rows: tuple[int, ...]
    # (symbol index, 0 for real / 1 for imaginary part) feeding each coordinate
    layout: np.ndarray = field(repr=False)
    energy_scale: float = 1.0

    def __post_init__(self):
        B = np.asarray(self.dispersion, dtype=complex)
        if B.shape != (self.K, self.n_t, self.T):
            raise ValueError(f"dispersion shape {B.shape} != {(self.K, self.n_t, self.T)}")
        B.setflags(write=False)
        object.__setattr__(self, "dispersion", B)
        layout = np.asarray(self.layout, dtype=np.int64)
        if layout.shape != (self.K, 2):
            raise ValueError("layout must be K x 2")
        layout.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        if not set(self.sat_rows) <= set(range(self.n_t)):
            raise ValueError(f"sat_rows {self.sat_rows} outside 0..{self.n_t - 1}")
        if np.linalg.matrix_rank(self.real_basis()) != self.K:
            raise ValueError(f"dispersion matrices of {self.name} are not linearly independent")

    @property
    def rate_R(self) -> Fraction:
        """Complex symbols per channel use, K / (2T)."""
        return Fraction(self.K, 2 * self.T)

    @property
    def dim_rate_R1(self) -> Fraction:
        """Real dimensions per channel use, K / T."""
        return Fraction(self.K, self.T)

    @property
    def n_symbols(self) -> int:
        return self.K // 2

    @property
    def ter_rows(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_t) if i not in self.sat_rows)

    def real_basis(self) -> np.ndarray:
        """(2 n_t T) x K real matrix whose columns are the stacked B_k."""
        flat = self.dispersion.reshape(self.K, -1)
        return np.concatenate([flat.real, flat.imag], axis=1).T


def _c(g, i):
    return g[i] + 1j * g[i + 1]


def _z8(g, i):
    """(a, sigma(a)) for the zeta_8 slot starting at coordinate i."""
    a0, a1, a2, a3 = g[i:i + 4]
    a = a0 + a1 * Z8 + a2 * Z8**2 + a3 * Z8**3
    sa = a0 - a1 * Z8 + a2 * Z8**2 - a3 * Z8**3
    return a, sa


def _z5(g, i):
    """(x, sigma(x)) for the zeta_5 slot y1..y4 starting at coordinate i."""
    y1, y2, y3, y4 = g[i:i + 4]
    z = Z5
    x = y1 * (1 - z) + y2 * (z - z**2) + y3 * (z**2 - z**3) + y4 * (z**3 - z**4)
    sx = y1 * (1 - z**3) + y2 * (z**3 - z) + y3 * (z - z**4) + y4 * (z**4 - z**2)
    return x, sx


def _alamouti(g):
    c1, c2 = _c(g, 0), _c(g, 2)
    return np.array([[c1, -np.conj(c2)],
                     [c2, np.conj(c1)]])


def _repetition(n):
    def build(g):
        return np.full((n, 1), _c(g, 0))
    return build


def _jafarkhani(g):
    X1 = _alamouti(g[0:4])
    X2 = _alamouti(g[4:8])
    return np.block([[X1, -np.conj(X2)],
                     [X2, np.conj(X1)]])


def _double_alamouti(g):
    A = _alamouti(g)
    return np.vstack([A, A])


def _alamouti_sigma(g):
    a, sa = _z8(g, 0)
    b = _c(g, 4)
    return np.array([[a, -np.conj(b)],
                     [b, np.conj(a)],
                     [sa, -np.conj(b)],
                     [b, np.conj(sa)]])


def _l2(g):
    c1, c2, c3, c4 = (_c(g, 2 * i) for i in range(4))
    cc = np.conj
    return np.array([[c1, 1j * c2, -cc(c3), -cc(c4)],
                     [c2, c1, 1j * cc(c4), -cc(c3)],
                     [c3, 1j * c4, cc(c1), cc(c2)],
                     [c4, c3, -1j * cc(c2), cc(c1)]])


def _double_alamouti_swapped(g):
    a, b, c, d = (_c(g, 2 * i) for i in range(4))
    cc = np.conj
    return np.array([[a, -cc(b)],
                     [c, -cc(d)],
                     [b, cc(a)],
                     [d, cc(c)]])


def _c1_mido(g):
    (x0, s0), (x1, s1), (x2, s2), (x3, s3) = (_z5(g, 4 * i) for i in range(4))
    r = C1_R
    cc = np.conj
    return np.array([
        [x0, -r**2 * cc(x1), -r**3 * s3, -r * cc(s2)],
        [r**2 * x1, cc(x0), r * s2, -r**3 * cc(s3)],
        [r * x2, -r**3 * cc(x3), s0, -r**2 * cc(s1)],
        [r**3 * x3, r * cc(x2), r**2 * s1, cc(s0)],
    ])


def _qam_alamouti_3tx(g):
    a, b = _c(g, 0), _c(g, 2)
    return np.array([[a, b],
                     [a, -np.conj(b)],
                     [b, np.conj(a)]])


def _l3(g):
    a, sa = _z8(g, 0)
    b = _c(g, 4)
    return np.array([[a, b],
                     [sa, -np.conj(b)],
                     [b, np.conj(sa)]])


def _pairs(n):
    return [(i, ax) for i in range(n) for ax in (0, 1)]


# zeta_8 slot a = s + t*z : (Re s, Re t, Im s, Im t)
def _z8_layout(s, t):
    return [(s, 0), (t, 0), (s, 1), (t, 1)]


# name: (builder, n_t, T, K, sat_rows, layout)
_REGISTRY: dict[str, tuple[Callable, int, int, int, tuple[int, ...], list]] = {
    "alamouti": (_alamouti, 2, 2, 4, (0,), _pairs(2)),
    "miso_repetition_2": (_repetition(2), 2, 1, 2, (0,), _pairs(1)),
    "repetition_4": (_repetition(4), 4, 1, 2, (0, 1), _pairs(1)),
    "jafarkhani_qo": (_jafarkhani, 4, 4, 8, (0, 1), _pairs(4)),
    "double_alamouti": (_double_alamouti, 4, 2, 4, (0, 1), _pairs(2)),
    "alamouti_sigma": (_alamouti_sigma, 4, 2, 6, (0, 1), _z8_layout(0, 1) + [(2, 0), (2, 1)]),
    "l2": (_l2, 4, 4, 8, (0, 1), _pairs(4)),
    "double_alamouti_swapped": (_double_alamouti_swapped, 4, 2, 8, (0, 1), _pairs(4)),
    "c1_mido": (_c1_mido, 4, 4, 16, (0, 1), _pairs(8)),
    "qam_alamouti_3tx": (_qam_alamouti_3tx, 3, 2, 4, (0,), _pairs(2)),
    "l3": (_l3, 3, 2, 6, (0,), _z8_layout(0, 1) + [(2, 0), (2, 1)]),
}

CODE_NAMES = tuple(_REGISTRY)

_cache: dict[str, CodeDescriptor] = {}


def make_code(name: str) -> CodeDescriptor:
    """Build the descriptor of a named code (cached; descriptors are immutable)."""
    if name in _cache:
        return _cache[name]
    try:
        builder, n_t, T, K, sat_rows, layout = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown code {name!r}; choose from {', '.join(CODE_NAMES)}") from None
    eye = np.eye(K)
    B = np.stack([np.asarray(builder(eye[k]), dtype=complex) for k in range(K)])
    # unit-energy symbols give every coordinate variance 1/2
    energy = 0.5 * np.sum(np.abs(B) ** 2) / T
    code = CodeDescriptor(name, n_t, T, K, B, tuple(sat_rows), np.array(layout),
                          float(1.0 / np.sqrt(energy)))
    _cache[name] = code
    return code


def encode(code: CodeDescriptor, g: Sequence[float]) -> np.ndarray:
    """Codeword ``X = sum_k g_k B_k`` (no energy scaling applied).

    ``g`` may also be a 2-D array of shape (N, K); the result is then (N, n_t, T).
    """
    g = np.asarray(g)
    if g.shape[-1] != code.K:
        raise ValueError(f"{code.name} needs {code.K} coefficients, got {g.shape[-1]}")
    return np.tensordot(g, code.dispersion, axes=([-1], [0]))


def group_symbols(code: CodeDescriptor, symbols: Sequence[GaussianInteger | complex]) -> np.ndarray:
    """Place K/2 QAM symbols onto the K integer lattice coordinates."""
    if len(symbols) != code.n_symbols:
        raise ValueError(f"{code.name} takes {code.n_symbols} symbols, got {len(symbols)}")
    parts = np.array([[complex(s).real, complex(s).imag] for s in symbols]).reshape(-1, 2)
    if parts.size == 0:
        return np.zeros(code.K, dtype=np.int64)
    g = parts[code.layout[:, 0], code.layout[:, 1]]
    return np.rint(g).astype(np.int64)


def ungroup_coefficients(code: CodeDescriptor, g: Sequence[int]) -> list[GaussianInteger]:
    """Inverse of :func:`group_symbols`."""
    g = np.asarray(g, dtype=np.int64)
    if g.shape != (code.K,):
        raise ValueError(f"expected {code.K} coefficients")
    parts = np.zeros((code.n_symbols, 2), dtype=np.int64)
    parts[code.layout[:, 0], code.layout[:, 1]] = g
    return [GaussianInteger(int(a), int(b)) for a, b in parts]


# ---------------------------------------------------------------------------
# Text descriptor format
#
#   stcode 1
#   name <id>
#   n_t <int>
#   T <int>
#   K <int>
#   sat_rows <i> <j> ...
#   energy_scale <float>
#   layout <sym> <axis> <sym> <axis> ...      (2K ints)
#   B <k> <re> <im> <re> <im> ...             (n_t*T entries, row-major), K lines
# ---------------------------------------------------------------------------

def write_descriptor(code: CodeDescriptor, dest=None) -> str:
    out = io.StringIO()
    out.write("stcode 1\n")
    out.write(f"name {code.name}\n")
    out.write(f"n_t {code.n_t}\nT {code.T}\nK {code.K}\n")
    out.write("sat_rows " + " ".join(map(str, code.sat_rows)) + "\n")
    out.write(f"energy_scale {code.energy_scale!r}\n")
    out.write("layout " + " ".join(map(str, code.layout.ravel().tolist())) + "\n")
    for k, Bk in enumerate(code.dispersion):
        vals = []
        for z in Bk.ravel():
            vals += [repr(float(z.real)), repr(float(z.imag))]
        out.write(f"B {k} " + " ".join(vals) + "\n")
    text = out.getvalue()
    if dest is not None:
        Path(dest).write_text(text)
    return text


def read_descriptor(source) -> CodeDescriptor:
    """Parse the text format; ``source`` is a path or the text itself."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    header: dict[str, list[str]] = {}
    mats: dict[int, list[float]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "B":
            mats[int(rest[0])] = [float(v) for v in rest[1:]]
        else:
            header[key] = rest
    if header.get("stcode") != ["1"]:
        raise ValueError("not an stcode v1 descriptor")
    try:
        n_t, T, K = (int(header[k][0]) for k in ("n_t", "T", "K"))
        name = header["name"][0]
    except KeyError as exc:
        raise ValueError(f"descriptor missing field {exc}") from None
    if sorted(mats) != list(range(K)):
        raise ValueError(f"expected B lines 0..{K - 1}")
    B = np.empty((K, n_t, T), dtype=complex)
    for k in range(K):
        v = mats[k]
        if len(v) != 2 * n_t * T:
            raise ValueError(f"B {k}: expected {2 * n_t * T} numbers, got {len(v)}")
        B[k] = (np.array(v[0::2]) + 1j * np.array(v[1::2])).reshape(n_t, T)
    layout = (np.array([int(v) for v in header["layout"]]).reshape(K, 2)
              if "layout" in header else np.array(_pairs(K // 2)))
    sat = tuple(int(v) for v in header.get("sat_rows", []))
    if "energy_scale" in header:
        scale = float(header["energy_scale"][0])
    else:
        scale = float(1.0 / np.sqrt(0.5 * np.sum(np.abs(B) ** 2) / T))
    return CodeDescriptor(name, n_t, T, K, B, sat, layout, scale)
