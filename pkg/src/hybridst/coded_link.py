"""Convolutionally coded BICM chain around the space-time encoder.

bits -> (133,171) conv code -> puncture -> interleave -> Gray QAM ->
lattice coordinates -> ST codeword -> fading channel -> max-log LLRs ->
deinterleave -> depuncture -> Viterbi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Optional

import numba as nb
import numpy as np

from .algebra import CONSTELLATIONS, Constellation, bits_to_coords
from .channels import (LmsProcess, MarkovLmsModel, default_lms_model, draw_lms_gain,
                       draw_noise, draw_rayleigh)
from .codes import CodeDescriptor, make_code
from .detection import BitMap, build_real_models, soft_llr_batch

__all__ = [
    "ConvCode",
    "PUNCTURE_PATTERNS",
    "conv_encode",
    "viterbi_decode",
    "interleave",
    "deinterleave",
    "LinkConfig",
    "PRESETS",
    "preset_config",
    "noise_var_for",
    "run_link_once",
]

# DVB/802.11 style puncturing; row 0 is the 133 branch (X), row 1 the 171 branch (Y)
PUNCTURE_PATTERNS = {
    Fraction(1, 2): np.array([[1], [1]], dtype=bool),
    Fraction(2, 3): np.array([[1, 0], [1, 1]], dtype=bool),  # X1 Y1 Y2
    Fraction(3, 4): np.array([[1, 0, 1], [1, 1, 0]], dtype=bool),  # X1 Y1 Y2 X3
}

MEMORY = 6


def _taps(octal: int) -> np.ndarray:
    # MSB multiplies the current input, LSB the oldest register bit
    return np.array([(octal >> (MEMORY - i)) & 1 for i in range(MEMORY + 1)], dtype=np.int64)


@dataclass(frozen=True)
class ConvCode:
    rate: Fraction = Fraction(1, 2)
    generators: tuple[int, int] = (0o133, 0o171)

    def __post_init__(self):
        object.__setattr__(self, "rate", Fraction(self.rate))
        if self.rate not in PUNCTURE_PATTERNS:
            raise ValueError(f"unsupported code rate {self.rate}")

    @property
    def pattern(self) -> np.ndarray:
        return PUNCTURE_PATTERNS[self.rate]

    def keep_mask(self, n_steps: int) -> np.ndarray:
        """Boolean mask over the interleaved mother stream X1 Y1 X2 Y2 ..."""
        p = self.pattern
        reps = -(-n_steps // p.shape[1])
        return np.tile(p, (1, reps))[:, :n_steps].T.ravel()

    def coded_length(self, n_info: int) -> int:
        return int(self.keep_mask(n_info + MEMORY).sum())


def conv_encode(bits, cc: ConvCode = ConvCode()) -> np.ndarray:
    """Encode and terminate with 6 zero tail bits, then puncture."""
    u = np.concatenate([np.asarray(bits, dtype=np.int64).ravel(), np.zeros(MEMORY, np.int64)])
    padded = np.concatenate([np.zeros(MEMORY, np.int64), u])
    out = np.empty((u.size, 2), dtype=np.int8)
    for j, g in enumerate(cc.generators):
        out[:, j] = np.convolve(padded, _taps(g), "valid") % 2
    mother = out.ravel()
    return mother[cc.keep_mask(u.size)]


def _branch_table(generators) -> np.ndarray:
    # out[s, u] = 2-bit output for register ((u << 6) | s)
    tab = np.empty((64, 2, 2), dtype=np.int64)
    for s in range(64):
        for u in range(2):
            reg = (u << MEMORY) | s
            for j, g in enumerate(generators):
                tab[s, u, j] = bin(reg & g).count("1") & 1
    return tab


@nb.njit(cache=True)
def _viterbi(llr, tab, n_steps):
    # llr: (n_steps, 2) mother-code LLRs, positive favours bit 0
    NEG = -1e300
    metric = np.full(64, NEG)
    metric[0] = 0.0
    new = np.empty(64)
    dec = np.empty((n_steps, 64), dtype=np.uint8)
    for t in range(n_steps):
        l0 = llr[t, 0]
        l1 = llr[t, 1]
        for ns in range(64):
            u = ns >> 5
            base = (ns & 31) << 1
            best = NEG
            bx = 0
            for x in range(2):
                s = base | x
                m = metric[s]
                if m == NEG:
                    continue
                c0 = tab[s, u, 0]
                c1 = tab[s, u, 1]
                m += (l0 if c0 == 0 else -l0) + (l1 if c1 == 0 else -l1)
                if m > best:
                    best = m
                    bx = x
            new[ns] = best
            dec[t, ns] = bx
        for ns in range(64):
            metric[ns] = new[ns]
    out = np.empty(n_steps, dtype=np.int8)
    ns = 0  # terminated trellis ends in the zero state
    for t in range(n_steps - 1, -1, -1):
        out[t] = ns >> 5
        ns = ((ns & 31) << 1) | dec[t, ns]
    return out


_TABLES: dict = {}


def viterbi_decode(llrs, cc: ConvCode = ConvCode(), n_info: Optional[int] = None) -> np.ndarray:
    """Soft-input Viterbi decoding of a terminated, punctured frame.

    ``llrs`` follow the convention of :func:`hybridst.detection.soft_llr`
    (positive favours 0).  Punctured positions are filled with zero LLRs.
    """
    llrs = np.asarray(llrs, dtype=float).ravel()
    if n_info is None:
        # invert coded_length: smallest frame whose punctured length matches
        keep = cc.pattern.sum()
        period = cc.pattern.shape[1]
        n_steps = llrs.size * period // keep
        while cc.keep_mask(n_steps).sum() < llrs.size:
            n_steps += 1
        n_info = n_steps - MEMORY
    n_steps = n_info + MEMORY
    mask = cc.keep_mask(n_steps)
    if mask.sum() != llrs.size:
        raise ValueError(f"{llrs.size} LLRs do not match a {n_info}-bit frame at rate {cc.rate}")
    mother = np.zeros(2 * n_steps)
    mother[mask] = llrs
    tab = _TABLES.get(cc.generators)
    if tab is None:
        tab = _TABLES[cc.generators] = _branch_table(cc.generators)
    return _viterbi(mother.reshape(n_steps, 2), tab, n_steps)[:n_info]


def interleave(seq, seed: int) -> np.ndarray:
    seq = np.asarray(seq)
    return seq[np.random.default_rng(seed).permutation(seq.size)]


def deinterleave(seq, seed: int) -> np.ndarray:
    seq = np.asarray(seq)
    out = np.empty_like(seq)
    out[np.random.default_rng(seed).permutation(seq.size)] = seq
    return out


# ---------------------------------------------------------------------------
# Link configuration
# ---------------------------------------------------------------------------

MISO_CODES = {2: "miso_repetition_2", 4: "repetition_4"}
DEFAULT_FRAME_BITS = 8 * 2048


@dataclass(frozen=True)
class LinkConfig:
    scheme: str
    constellation: str
    Rc: Fraction
    eta: Fraction
    frame_bits: int = DEFAULT_FRAME_BITS
    interleaver_seed: Optional[int] = None  # None: fresh permutation per frame
    n_r: int = 2
    # antennas whose received power is scaled by beta; None means the code's SAT rows
    beta_antennas: Optional[tuple[int, ...]] = None
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "Rc", Fraction(self.Rc))
        object.__setattr__(self, "eta", Fraction(self.eta))
        cname = self.constellation.upper().replace("-", "")
        if cname.endswith("QAM") and cname[:-3].isdigit():  # "16-QAM" spelling
            cname = "QAM" + cname[:-3]
        object.__setattr__(self, "constellation", cname)
        if self.constellation not in CONSTELLATIONS:
            raise ValueError(f"unknown constellation {self.constellation}")
        if self.Rc != 1 and self.Rc not in PUNCTURE_PATTERNS:
            raise ValueError(f"unsupported code rate {self.Rc}")
        code = make_code(self.scheme)
        computed = code.rate_R * self.const.bits_per_symbol * self.Rc
        if computed != self.eta:
            raise ValueError(f"{self.scheme}: R*bits*Rc = {computed} != eta {self.eta}")
        if self.frame_bits < 1 or self.n_r < 1:
            raise ValueError("frame_bits and n_r must be positive")
        if self.beta_antennas is not None:
            object.__setattr__(self, "beta_antennas", tuple(self.beta_antennas))

    @property
    def code(self) -> CodeDescriptor:
        return make_code(self.scheme)

    @property
    def const(self) -> Constellation:
        return CONSTELLATIONS[self.constellation]

    @property
    def name(self) -> str:
        return self.label or self.scheme

    @property
    def imbalance_antennas(self) -> tuple[int, ...]:
        return self.beta_antennas if self.beta_antennas is not None else self.code.sat_rows

    def to_dict(self) -> dict:
        d = asdict(self)
        d["Rc"] = str(self.Rc)
        d["eta"] = str(self.eta)
        return d


# Presets: (label, code, constellation, Rc) per spectral efficiency
_PRESET_ROWS = {
    2: [("Alamouti", "alamouti", "QAM16", "1/2"),
        ("MISO", "repetition_4", "QAM16", "1/2"),
        ("L3", "l3", "QPSK", "2/3"),
        ("D-Alamouti", "double_alamouti", "QAM16", "1/2"),
        ("L2", "l2", "QAM16", "1/2")],
    4: [("Alamouti", "alamouti", "QAM64", "2/3"),
        ("MISO", "repetition_4", "QAM64", "2/3"),
        ("L3", "l3", "QAM16", "2/3"),
        ("D-Alamouti", "double_alamouti", "QAM64", "2/3"),
        ("L2", "l2", "QAM64", "2/3")],
}


def preset_config(eta: int, label: str, miso_antennas: int = 4, **kw) -> LinkConfig:
    for lab, scheme, const, rc in _PRESET_ROWS[eta]:
        if lab.lower() == label.lower():
            if lab == "MISO":
                scheme = MISO_CODES[miso_antennas]
            return LinkConfig(scheme, const, Fraction(rc), Fraction(eta), label=lab, **kw)
    raise KeyError(f"no preset row {label!r} at eta={eta}")


PRESETS = {eta: [preset_config(eta, row[0]) for row in rows] for eta, rows in _PRESET_ROWS.items()}


def noise_var_for(ebn0_db: float, eta) -> float:
    """Noise variance per complex receive dimension for unit received energy per channel use."""
    return 1.0 / (float(eta) * 10.0 ** (ebn0_db / 10.0))


def _channel_blocks(cfg: LinkConfig, n_blocks: int, channel_kind: str,
                    rng: np.random.Generator, lms_model: Optional[MarkovLmsModel]) -> np.ndarray:
    code = cfg.code
    H = draw_rayleigh(cfg.n_r, code.n_t, rng, size=n_blocks)
    if channel_kind == "rayleigh":
        return H
    if channel_kind not in ("lms", "hybrid"):
        raise ValueError(f"unknown channel kind {channel_kind!r}")
    model = lms_model or default_lms_model()
    cols = list(range(code.n_t)) if channel_kind == "lms" else list(code.sat_rows)
    if not cols:
        return H
    proc = LmsProcess(model, rng)
    states = np.array([proc.advance(code.T) for _ in range(n_blocks)])
    phase = rng.uniform(0, 2 * np.pi, (n_blocks, cfg.n_r, len(cols)))
    for s in range(3):
        sel = states == s
        if sel.any():
            H[np.ix_(sel, np.arange(cfg.n_r), cols)] = draw_lms_gain(
                model, s, rng, size=(int(sel.sum()), cfg.n_r, len(cols)), direct_phase=phase[sel])
    return H


def run_link_once(cfg: LinkConfig, ebn0_db: Optional[float], beta_db: float = 0.0,
                  channel_kind: str = "rayleigh", rng: Optional[np.random.Generator] = None,
                  lms_model: Optional[MarkovLmsModel] = None,
                  stats: Optional[dict] = None) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one frame; returns (transmitted info bits, decoded info bits).

    ``ebn0_db=None`` runs the chain noiseless.
    """
    rng = rng if rng is not None else np.random.default_rng()
    code, const = cfg.code, cfg.const
    bit_map = BitMap.for_code(code, const.pam_values, const.pam_labels)
    info = rng.integers(0, 2, cfg.frame_bits, dtype=np.int8)
    coded = info if cfg.Rc == 1 else conv_encode(info, ConvCode(cfg.Rc)).astype(np.int8)
    il_seed = cfg.interleaver_seed if cfg.interleaver_seed is not None else int(rng.integers(2**63))
    tx = interleave(coded, il_seed)
    per_block = bit_map.bits_per_block
    n_blocks = -(-tx.size // per_block)
    pad = n_blocks * per_block - tx.size
    stream = np.concatenate([tx, rng.integers(0, 2, pad, dtype=np.int8)])

    parts = bits_to_coords(stream, const).reshape(n_blocks, code.n_symbols, 2)
    g = parts[:, code.layout[:, 0], code.layout[:, 1]]
    amp = code.energy_scale * const.energy_scale
    X = np.tensordot(g.astype(float), code.dispersion, axes=([1], [0])) * amp

    H = _channel_blocks(cfg, n_blocks, channel_kind, rng, lms_model)
    scale = np.ones(code.n_t)
    if beta_db != 0.0:
        if not -40 <= beta_db <= 0:
            raise ValueError(f"beta_db {beta_db} outside [-40, 0]")
        scale[list(cfg.imbalance_antennas)] = 10.0 ** (beta_db / 20.0)
    Heff = H * scale[None, None, :]
    Y = Heff @ X
    if ebn0_db is None:
        nv = 1e-12
    else:
        nv = noise_var_for(ebn0_db, cfg.eta)
        Y = Y + draw_noise(Y.shape, nv, rng)

    G, y = build_real_models(code, Heff, Y, const.energy_scale)
    llr, _, nodes = soft_llr_batch(G, y, nv, bit_map)
    llr = llr.ravel()[:tx.size]
    llr = deinterleave(llr, il_seed)
    if cfg.Rc == 1:
        rx = (llr < 0).astype(np.int8)
    else:
        rx = viterbi_decode(llr, ConvCode(cfg.Rc), n_info=cfg.frame_bits)
    if stats is not None:
        stats["nodes"] = stats.get("nodes", 0) + nodes
        stats["blocks"] = stats.get("blocks", 0) + n_blocks
        stats["noise_var"] = nv
    return info, rx
