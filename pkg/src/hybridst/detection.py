"""ML detection of lattice codewords through the real-valued equivalent model.

The received block ``Y = H diag(tx) (amp * X) + N`` with ``X = sum_k g_k B_k``
is rewritten as ``y = G g + n`` where ``y`` stacks Re/Im of ``vec(Y)``.
Each coordinate ``g_k`` ranges over a finite integer set (a PAM axis of the
constellation), which is what the sphere decoder enumerates.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numba as nb
import numpy as np

from .channels import ChannelRealization
from .codes import CodeDescriptor

log = logging.getLogger(__name__)

__all__ = [
    "RealModel",
    "BitMap",
    "RankDeficientModel",
    "build_real_model",
    "build_real_models",
    "ml_exhaustive",
    "sphere_decode",
    "soft_llr",
    "soft_llr_batch",
    "LLR_CLIP",
]

LLR_CLIP = 25.0
_RANK_TOL = 1e-10


class RankDeficientModel(RuntimeError):
    pass


@dataclass
class RealModel:
    G: np.ndarray  # (2 n_r T, K) real
    y: np.ndarray  # (2 n_r T,) real
    noise_var: float  # per complex dimension

    def metric(self, g) -> float:
        r = self.y - self.G @ np.asarray(g, dtype=float)
        return float(r @ r)


@dataclass(frozen=True)
class BitMap:
    """Gray labels of the per-coordinate alphabet and where each bit lands.

    ``values`` (L,) sorted alphabet, ``labels`` (L, b) bit rows,
    ``positions`` (K, b) indices into the block's bit vector.
    """

    values: np.ndarray
    labels: np.ndarray
    positions: np.ndarray

    @classmethod
    def for_code(cls, code: CodeDescriptor, pam_values: np.ndarray, pam_labels: np.ndarray):
        h = pam_labels.shape[1]
        sym, axis = code.layout[:, 0], code.layout[:, 1]
        pos = (sym * 2 * h + axis * h)[:, None] + np.arange(h)[None, :]
        return cls(np.asarray(pam_values, dtype=np.int64), np.asarray(pam_labels, dtype=np.int8),
                   pos.astype(np.int64))

    @property
    def bits_per_block(self) -> int:
        return self.positions.size


def _stack(Z: np.ndarray) -> np.ndarray:
    """Real stacking [Re vec; Im vec] over the last two axes."""
    flat = Z.reshape(Z.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def build_real_model(code: CodeDescriptor, ch: ChannelRealization, Y: np.ndarray,
                     symbol_scale: float = 1.0) -> RealModel:
    """Equivalent real model; ``symbol_scale`` is the constellation normalization."""
    Y = np.asarray(Y, dtype=complex)
    if ch.n_t != code.n_t or Y.shape != (ch.n_r, code.T):
        raise ValueError(f"shape mismatch: H {ch.H.shape}, Y {Y.shape}, code {code.n_t}x{code.T}")
    amp = code.energy_scale * symbol_scale
    HB = np.einsum("rt,ktc->krc", ch.effective, code.dispersion) * amp
    G = _stack(HB).T
    return RealModel(G, _stack(Y), ch.noise_var)


def build_real_models(code: CodeDescriptor, Heff: np.ndarray, Y: np.ndarray,
                      symbol_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Batched form: Heff (N, n_r, n_t), Y (N, n_r, T) -> G (N, m, K), y (N, m)."""
    amp = code.energy_scale * symbol_scale
    HB = np.einsum("nrt,ktc->nkrc", Heff, code.dispersion) * amp
    G = np.swapaxes(_stack(HB), 1, 2)
    return np.ascontiguousarray(G), np.ascontiguousarray(_stack(Y))


def _as_alphabets(alphabet, K: int) -> list[np.ndarray]:
    if isinstance(alphabet, np.ndarray) and alphabet.ndim == 1:
        return [np.sort(alphabet.astype(np.int64))] * K
    alphabets = [np.sort(np.asarray(a, dtype=np.int64)) for a in alphabet]
    if len(alphabets) != K:
        raise ValueError(f"need {K} per-coordinate alphabets, got {len(alphabets)}")
    return alphabets


def ml_exhaustive(model: RealModel, alphabet, budget: int = 10**6) -> np.ndarray:
    """Brute-force argmin of ||y - G g||^2; ties go to the lexicographically smallest g."""
    K = model.G.shape[1]
    alphabets = _as_alphabets(alphabet, K)
    size = int(np.prod([len(a) for a in alphabets], dtype=object))
    if size > budget:
        raise ValueError(f"{size} candidates exceeds the exhaustive budget {budget}")
    best, best_g = np.inf, None
    chunk = 1 << 14
    it = itertools.product(*alphabets)  # lexicographic for sorted alphabets
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=float)
        if block.size == 0:
            break
        r = model.y[None, :] - block @ model.G.T
        d = np.einsum("ij,ij->i", r, r)
        i = int(np.argmin(d))
        if d[i] < best:
            best, best_g = float(d[i]), block[i]
    return best_g.astype(np.int64)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _sphere(R, z, vals, allowed, radius2, out_idx):
    """Schnorr-Euchner depth-first search on the upper-triangular system.

    Minimizes ||z - R v||^2 over v[k] in vals[allowed[k]].  Returns
    (best distance, visited nodes); the argmin value indices go to out_idx.
    Returns distance inf when no point lies strictly inside radius2.
    """
    K = R.shape[0]
    L = vals.shape[0]
    order = np.empty((K, L), dtype=np.int64)
    inc = np.empty((K, L))
    cnt = np.zeros(K, dtype=np.int64)
    pos = np.zeros(K, dtype=np.int64)
    pd = np.zeros(K + 1)
    cur = np.zeros(K, dtype=np.int64)
    s = np.zeros(K)
    best = radius2
    found = False
    nodes = 0

    k = K - 1
    expand = True
    while True:
        if expand:
            acc = z[k]
            for j in range(k + 1, K):
                acc -= R[k, j] * s[j]
            n = 0
            for i in range(L):
                if allowed[k, i]:
                    e = acc - R[k, k] * vals[i]
                    inc[k, i] = e * e
                    # insertion sort by increment
                    p = n
                    while p > 0 and inc[k, order[k, p - 1]] > inc[k, i]:
                        order[k, p] = order[k, p - 1]
                        p -= 1
                    order[k, p] = i
                    n += 1
            cnt[k] = n
            pos[k] = 0
            expand = False
        if pos[k] < cnt[k]:
            i = order[k, pos[k]]
            pos[k] += 1
            d = pd[k + 1] + inc[k, i]
            nodes += 1
            if d >= best:
                pos[k] = cnt[k]
                continue
            cur[k] = i
            s[k] = vals[i]
            pd[k] = d
            if k == 0:
                best = d
                found = True
                for j in range(K):
                    out_idx[j] = cur[j]
            else:
                k -= 1
                expand = True
        else:
            k += 1
            if k == K:
                break
    if not found:
        return np.inf, nodes
    return best, nodes


@nb.njit(cache=True)
def _qr_model(G, y):
    Q, R = np.linalg.qr(G)
    z = np.ascontiguousarray(Q.T) @ y
    return R, z


@nb.njit(cache=True)
def _point_metric(R, z, vals, idx):
    K = R.shape[0]
    tot = 0.0
    for k in range(K):
        acc = z[k]
        for j in range(k, K):
            acc -= R[k, j] * vals[idx[j]]
        tot += acc * acc
    return tot


@nb.njit(cache=True)
def _llr_one(R, z, vals, labels, allowed_all, inv_nv, clip, llr_out, idx_out):
    K = R.shape[0]
    L = vals.shape[0]
    b = labels.shape[1]
    ml = np.zeros(K, dtype=np.int64)
    d_ml, nodes = _sphere(R, z, vals, allowed_all, np.inf, ml)
    for k in range(K):
        idx_out[k] = ml[k]
    allowed = allowed_all.copy()
    tmp = np.zeros(K, dtype=np.int64)
    cand = np.zeros(K, dtype=np.int64)
    for k in range(K):
        for t in range(b):
            bit = labels[ml[k], t]
            # seed the radius with ml[k] swapped for the nearest counter-label value
            bestj = -1
            for i in range(L):
                allowed[k, i] = allowed_all[k, i] and labels[i, t] != bit
                if allowed[k, i] and (bestj < 0 or abs(vals[i] - vals[ml[k]]) < abs(vals[bestj] - vals[ml[k]])):
                    bestj = i
            for j in range(K):
                cand[j] = ml[j]
            cand[k] = bestj
            r0 = _point_metric(R, z, vals, cand) * (1.0 + 1e-12) + 1e-300
            d_c, nn = _sphere(R, z, vals, allowed, r0, tmp)
            nodes += nn
            if d_c == np.inf or d_c > r0:
                d_c = _point_metric(R, z, vals, cand)
            v = (d_c - d_ml) * inv_nv
            if v > clip:
                v = clip
            llr_out[k, t] = v if bit == 0 else -v
            for i in range(L):
                allowed[k, i] = allowed_all[k, i]
    return d_ml, nodes


@nb.njit(cache=True)
def _llr_batch(G, y, vals, labels, allowed_all, noise_var, clip):
    N = G.shape[0]
    K = G.shape[2]
    b = labels.shape[1]
    llr = np.empty((N, K, b))
    idx = np.empty((N, K), dtype=np.int64)
    nodes = 0
    inv = 1.0 / noise_var
    for n in range(N):
        R, z = _qr_model(G[n], y[n])
        _, nn = _llr_one(R, z, vals, labels, allowed_all, inv, clip, llr[n], idx[n])
        nodes += nn
    return llr, idx, nodes


# ---------------------------------------------------------------------------
# Python entry points
# ---------------------------------------------------------------------------

def _prepare(model: RealModel, alphabet):
    G = np.ascontiguousarray(model.G, dtype=float)
    K = G.shape[1]
    alphabets = _as_alphabets(alphabet, K)
    vals = np.unique(np.concatenate(alphabets))
    allowed = np.zeros((K, vals.size), dtype=np.bool_)
    for k, a in enumerate(alphabets):
        allowed[k] = np.isin(vals, a)
    R, z = _qr_model(G, np.ascontiguousarray(model.y, dtype=float))
    flagged = False
    if np.min(np.abs(np.diag(R))) < _RANK_TOL * max(1.0, np.abs(R).max()):
        # regularize: append a small ridge so the triangular search is well posed
        eps = 1e-6 * max(1.0, np.abs(G).max())
        Ga = np.vstack([G, eps * np.eye(K)])
        ya = np.concatenate([model.y, np.zeros(K)])
        R, z = _qr_model(Ga, ya)
        flagged = True
        log.warning("rank-deficient real model; using ridge-regularized decomposition")
    return R, z, vals.astype(float), allowed, flagged


def sphere_decode(model: RealModel, alphabet, radius: float = np.inf,
                  trace: Optional[Callable[[dict], None]] = None) -> np.ndarray:
    """Exact ML coefficient vector via QR + Schnorr-Euchner enumeration."""
    R, z, vals, allowed, flagged = _prepare(model, alphabet)
    out = np.zeros(R.shape[0], dtype=np.int64)
    r2 = np.inf if radius == np.inf else radius**2
    d, nodes = _sphere(R, z, vals, allowed, r2, out)
    if d == np.inf and r2 != np.inf:
        d, more = _sphere(R, z, vals, allowed, np.inf, out)
        nodes += more
    if trace is not None:
        trace({"nodes": int(nodes), "distance": float(d), "regularized": flagged})
    return vals[out].astype(np.int64)


def soft_llr(model: RealModel, alphabet, bit_map: BitMap, clip: float = LLR_CLIP) -> np.ndarray:
    """Max-log bit LLRs (positive favours 0) in block bit order."""
    values = np.asarray(bit_map.values)
    if alphabet is not None and not np.array_equal(np.sort(np.asarray(alphabet)), values):
        raise ValueError("alphabet does not match the bit map")
    K = model.G.shape[1]
    if bit_map.positions.shape[0] != K:
        raise ValueError("bit map does not cover every coefficient")
    R, z, vals, allowed, _ = _prepare(model, values)
    llr = np.empty((K, bit_map.labels.shape[1]))
    idx = np.empty(K, dtype=np.int64)
    _llr_one(R, z, vals, bit_map.labels, allowed, 1.0 / model.noise_var, clip, llr, idx)
    out = np.empty(bit_map.bits_per_block)
    out[bit_map.positions.ravel()] = llr.ravel()
    return out


def soft_llr_batch(G: np.ndarray, y: np.ndarray, noise_var: float, bit_map: BitMap,
                   clip: float = LLR_CLIP) -> tuple[np.ndarray, np.ndarray, int]:
    """Batched max-log LLRs.

    Returns ``(llr, ml, nodes)`` with ``llr`` of shape (N, bits_per_block)
    in block bit order, ``ml`` the (N, K) ML coefficient vectors and the
    total visited node count.
    """
    K = G.shape[2]
    vals = bit_map.values.astype(float)
    allowed = np.ones((K, vals.size), dtype=np.bool_)
    llr, idx, nodes = _llr_batch(G, y, vals, bit_map.labels, allowed, float(noise_var), clip)
    out = np.empty((G.shape[0], bit_map.bits_per_block))
    out[:, bit_map.positions.ravel()] = llr.reshape(G.shape[0], -1)
    return out, bit_map.values[idx], int(nodes)
