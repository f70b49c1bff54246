"""Minimum-determinant search over bounded coefficient boxes.

Because the codes are lattices, codeword differences are again codewords,
so it suffices to scan nonzero coefficient vectors ``g`` directly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from itertools import combinations, product
from typing import Optional

import numpy as np

from .algebra import CyclotomicElement, GaussianInteger, embed, norm8_to_qj, sigma8
from .codes import CodeDescriptor, make_code

log = logging.getLogger(__name__)

__all__ = [
    "DeterminantReport",
    "SearchBudgetExceeded",
    "ZERO_DET",
    "gram_det",
    "joint_min_det",
    "parallel_min_product",
    "l3_closed_form",
    "l3_parallel_product",
    "normalized_min_det",
]

#: unit-energy determinants below this count as zero
ZERO_DET = 1e-9
DEFAULT_BUDGET = 10**7
_CHUNK = 1 << 15


class SearchBudgetExceeded(RuntimeError):
    pass


@dataclass
class DeterminantReport:
    code_name: str
    box_bound: int
    exhaustive: bool
    evaluated: int
    min_joint_det: float
    argmin_joint: list[int]
    full_diversity: bool
    normalized_min_det: float
    # parallel (SAT block x TER block) criterion; None when sat_rows is not a proper split
    min_parallel_product: Optional[float] = None
    argmin_parallel: Optional[list[int]] = None
    # same minimum restricted to vectors where neither block vanishes
    min_parallel_product_nonzero_blocks: Optional[float] = None
    argmin_parallel_nonzero_blocks: Optional[list[int]] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        kind = "exhaustive" if self.exhaustive else "sampled (upper bound)"
        lines = [
            f"code              {self.code_name}",
            f"box               {self.box_bound} ({kind}, {self.evaluated} vectors)",
            f"min joint det     {self.min_joint_det:.6g} at g={self.argmin_joint}",
            f"normalized        {self.normalized_min_det:.6g}",
            f"full diversity    {self.full_diversity}",
        ]
        if self.min_parallel_product is not None:
            lines += [
                f"min parallel prod {self.min_parallel_product:.6g} at g={self.argmin_parallel}",
                f"  both blocks !=0 {self.min_parallel_product_nonzero_blocks:.6g}"
                f" at g={self.argmin_parallel_nonzero_blocks}",
            ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def gram_det(X: np.ndarray) -> np.ndarray:
    """|det| of the Gram matrix taken in the smaller dimension (batched on leading axes)."""
    X = np.asarray(X)
    n, t = X.shape[-2:]
    if t <= n:
        G = np.conj(np.swapaxes(X, -1, -2)) @ X
    else:
        G = X @ np.conj(np.swapaxes(X, -1, -2))
    if G.shape[-1] == 1:
        return np.abs(G[..., 0, 0])
    return np.abs(np.linalg.det(G))


def _digits(idx: np.ndarray, K: int, box: int) -> np.ndarray:
    base = 2 * box + 1
    out = np.empty((idx.size, K), dtype=np.int64)
    rem = idx.copy()
    for k in range(K - 1, -1, -1):
        out[:, k] = rem % base - box
        rem //= base
    return out


def _evaluate(code: CodeDescriptor, g: np.ndarray, parallel: bool):
    X = np.tensordot(g.astype(float), code.dispersion, axes=([1], [0]))
    joint = gram_det(X)
    if not parallel:
        return joint, None, None
    XS = X[:, list(code.sat_rows), :]
    XT = X[:, list(code.ter_rows), :]
    prod = gram_det(XS) * gram_det(XT)
    both = (np.abs(XS).max(axis=(1, 2)) > 0) & (np.abs(XT).max(axis=(1, 2)) > 0)
    return joint, prod, both


class _Best:
    """Running minimum; ties (to 1e-12 relative) keep the earliest vector."""

    def __init__(self):
        self.value = np.inf
        self.arg: Optional[np.ndarray] = None

    def update(self, values: np.ndarray, g: np.ndarray, mask=None):
        if mask is not None:
            if not mask.any():
                return
            values = np.where(mask, values, np.inf)
        lo = float(np.min(values))
        # earliest entry within the tie tolerance, so chunking never changes the answer
        i = int(np.argmax(values <= lo + 1e-12 * max(1.0, lo)))
        v = float(values[i])
        if self.arg is None or v < self.value - 1e-12 * max(1.0, self.value):
            self.value, self.arg = v, g[i].copy()

    def merge(self, other: "_Best"):
        if other.arg is not None and (self.arg is None
                                      or other.value < self.value - 1e-12 * max(1.0, self.value)):
            self.value, self.arg = other.value, other.arg


def _scan_range(args):
    code_name, code_state, box, start, stop, parallel = args
    code = code_state if code_state is not None else make_code(code_name)
    bj, bp, bb = _Best(), _Best(), _Best()
    for lo in range(start, stop, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, stop), dtype=np.int64)
        g = _digits(idx, code.K, box)
        nz = np.any(g != 0, axis=1)
        g = g[nz]
        if g.size == 0:
            continue
        joint, prod, both = _evaluate(code, g, parallel)
        bj.update(joint, g)
        if parallel:
            bp.update(prod, g)
            bb.update(prod, g, both)
    return bj, bp, bb


def _sample_vectors(K: int, box: int, budget: int, rng: np.random.Generator):
    """Low-weight vectors exhaustively, then random vectors stratified by support size."""
    vals = [v for v in range(-box, box + 1) if v]
    blocks = []
    used = 0
    for w in (1, 2):
        rows = []
        for supp in combinations(range(K), w):
            for vv in product(vals, repeat=w):
                g = np.zeros(K, dtype=np.int64)
                g[list(supp)] = vv
                rows.append(g)
        blocks.append(np.array(rows))
        used += len(rows)
    remaining = max(0, budget - used)
    per = remaining // max(1, K - 2)
    for w in range(3, K + 1):
        if per == 0:
            break
        g = np.zeros((per, K), dtype=np.int64)
        supp = np.argsort(rng.random((per, K)), axis=1)[:, :w]
        entries = rng.choice(np.array(vals), size=(per, w))
        np.put_along_axis(g, supp, entries, axis=1)
        blocks.append(g)
    return np.concatenate(blocks)


def _search(code: CodeDescriptor, box: int, budget: int, sample: bool, seed: int,
            workers: int) -> DeterminantReport:
    if box < 1:
        raise ValueError("box must be >= 1")
    parallel = 0 < len(code.sat_rows) < code.n_t
    total = (2 * box + 1) ** code.K
    notes: list[str] = []
    if total - 1 <= budget:
        exhaustive = True
        evaluated = total - 1
        bounds = np.linspace(0, total, max(1, workers) * 4 + 1).astype(np.int64)
        state = None if code is make_code_or_none(code.name) else code
        jobs = [(code.name, state, box, int(a), int(b), parallel)
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                parts = list(pool.map(_scan_range, jobs))
        else:
            parts = [_scan_range(j) for j in jobs]
        bj, bp, bb = _Best(), _Best(), _Best()
        for pj, pp, pb in parts:  # job order keeps the reduction deterministic
            bj.merge(pj)
            bp.merge(pp)
            bb.merge(pb)
    else:
        if not sample:
            raise SearchBudgetExceeded(
                f"{code.name}: (2*{box}+1)^{code.K} = {total} vectors exceeds budget {budget}")
        exhaustive = False
        rng = np.random.default_rng(seed)
        g_all = _sample_vectors(code.K, box, budget, rng)
        evaluated = len(g_all)
        notes.append(f"box too large for exhaustive search; {evaluated} vectors sampled "
                     f"(seed {seed}), minima are upper bounds")
        bj, bp, bb = _Best(), _Best(), _Best()
        for lo in range(0, len(g_all), _CHUNK):
            g = g_all[lo:lo + _CHUNK]
            joint, prod, both = _evaluate(code, g, parallel)
            bj.update(joint, g)
            if parallel:
                bp.update(prod, g)
                bb.update(prod, g, both)
    d = min(code.n_t, code.T)
    norm = bj.value * code.energy_scale ** (2 * d)
    rep = DeterminantReport(
        code_name=code.name,
        box_bound=box,
        exhaustive=exhaustive,
        evaluated=int(evaluated),
        min_joint_det=float(bj.value),
        argmin_joint=bj.arg.tolist(),
        full_diversity=bool(norm >= ZERO_DET),
        normalized_min_det=float(norm),
        notes=notes,
    )
    if parallel:
        rep.min_parallel_product = float(bp.value)
        rep.argmin_parallel = bp.arg.tolist()
        if bb.arg is not None:
            rep.min_parallel_product_nonzero_blocks = float(bb.value)
            rep.argmin_parallel_nonzero_blocks = bb.arg.tolist()
    log.debug("%s box=%d: joint %.4g parallel %s", code.name, box, bj.value,
              rep.min_parallel_product)
    return rep


def make_code_or_none(name: str) -> Optional[CodeDescriptor]:
    try:
        return make_code(name)
    except ValueError:
        return None


def joint_min_det(code: CodeDescriptor, box: int = 1, budget: int = DEFAULT_BUDGET,
                  sample: bool = True, seed: int = 0, workers: int = 1) -> DeterminantReport:
    """Minimum |det Gram(X)| over nonzero coefficient vectors with |g_k| <= box.

    Exhaustive while ``(2 box + 1)^K - 1 <= budget``; beyond that a stratified
    random sample is scanned (if ``sample``) and the result is an upper bound.
    """
    return _search(code, box, budget, sample, seed, workers)


def parallel_min_product(code: CodeDescriptor, box: int = 1, budget: int = DEFAULT_BUDGET,
                         sample: bool = True, seed: int = 0, workers: int = 1) -> DeterminantReport:
    """Minimum of det Gram(X_S) * det Gram(X_T) (SAT rows vs TER rows)."""
    if not 0 < len(code.sat_rows) < code.n_t:
        raise ValueError(f"{code.name}: sat_rows {code.sat_rows} is not a proper split")
    return _search(code, box, budget, sample, seed, workers)


def l3_closed_form(a: CyclotomicElement, b: GaussianInteger) -> float:
    """det(X^H X) of the L3 codeword built from a in Z[zeta_8], b in Z[j].

    With s = sigma(a):  |a|^2|b|^2 + |N(a)|^2 + 3|b|^2|s|^2 + |s|^4 + 2|b|^4,
    evaluated through the three cases b = 0, a = 0 and ab != 0.
    """
    if a.root_order != 8:
        raise ValueError("a must lie in Q(zeta_8)")
    na2 = float(norm8_to_qj(a).norm())
    a2 = abs(embed(a)) ** 2
    s2 = abs(embed(sigma8(a))) ** 2
    b2 = float(b.norm())
    if b.is_zero():
        return na2 + s2**2
    if a.is_zero():
        return 2 * b2**2
    return b2 * (a2 + 3 * s2 + 2 * b2) + na2 + s2**2


def l3_parallel_product(a: CyclotomicElement, b: GaussianInteger) -> float:
    """det(X_S X_S^H) |det X_T|^2 = (|a|^2 + |b|^2)(|sigma(a)|^2 + |b|^2)^2."""
    a2 = abs(embed(a)) ** 2
    s2 = abs(embed(sigma8(a))) ** 2
    b2 = float(b.norm())
    return (a2 + b2) * (s2 + b2) ** 2


def normalized_min_det(report: DeterminantReport, code: CodeDescriptor,
                       symbol_scale: float = 1.0) -> float:
    """Minimum determinant rescaled to unit transmit energy.

    ``symbol_scale`` is the constellation's amplitude normalization (for
    example 1/sqrt(2) for QPSK on odd integers); a d-dimensional Gram
    determinant scales with amplitude**(2d).
    """
    d = min(code.n_t, code.T)
    return report.min_joint_det * (code.energy_scale * symbol_scale) ** (2 * d)
