"""Flat MIMO fading channels: i.i.d. Rayleigh, power imbalance, and a 3-state LMS chain."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

__all__ = [
    "ChannelRealization",
    "LmsStateParams",
    "MarkovLmsModel",
    "LmsProcess",
    "STATE_LABELS",
    "draw_rayleigh",
    "draw_noise",
    "apply_imbalance",
    "step_markov",
    "initial_state",
    "state_trace",
    "markov_chain",
    "draw_lms_gain",
    "lms_mean_power",
    "hybrid_channel",
    "load_lms_model",
    "default_lms_model",
    "stationary_distribution",
]

STATE_LABELS = ("S1", "S2", "S3")  # LOS, moderate shadowing, deep shadowing


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray  # (n_r, n_t) complex
    noise_var: float = 1.0
    tx_scale: np.ndarray = None  # per-antenna amplitude factors

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        object.__setattr__(self, "H", H)
        scale = (np.ones(H.shape[1]) if self.tx_scale is None
                 else np.asarray(self.tx_scale, dtype=float))
        if scale.shape != (H.shape[1],) or np.any(scale <= 0):
            raise ValueError("tx_scale must hold one positive factor per transmit antenna")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        object.__setattr__(self, "tx_scale", scale)

    @property
    def n_r(self) -> int:
        return self.H.shape[0]

    @property
    def n_t(self) -> int:
        return self.H.shape[1]

    @property
    def effective(self) -> np.ndarray:
        """H diag(tx_scale)."""
        return self.H * self.tx_scale[None, :]


def draw_rayleigh(n_r: int, n_t: int, rng: np.random.Generator, noise_var: float = 1.0,
                  size: Optional[int] = None) -> ChannelRealization | np.ndarray:
    """Unit-variance circular complex Gaussian entries.

    With ``size`` given, returns a raw (size, n_r, n_t) array of independent
    matrices instead of a single realization.
    """
    if n_r < 1 or n_t < 1:
        raise ValueError("dimensions must be >= 1")
    shape = (n_r, n_t) if size is None else (size, n_r, n_t)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)
    if size is not None:
        return H
    return ChannelRealization(H, noise_var)


def draw_noise(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(noise_var / 2)


def apply_imbalance(ch: ChannelRealization, beta_db: float,
                    sat_antennas: Sequence[int]) -> ChannelRealization:
    """Scale the given columns' amplitude by 10**(beta_db/20)."""
    if not -40 <= beta_db <= 0:
        raise ValueError(f"beta_db {beta_db} outside [-40, 0]")
    idx = list(sat_antennas)
    if not idx or len(set(idx)) != len(idx) or not all(0 <= i < ch.n_t for i in idx):
        raise ValueError(f"invalid antenna index set {sat_antennas!r}")
    scale = ch.tx_scale.copy()
    scale[idx] *= 10.0 ** (beta_db / 20.0)
    return replace(ch, tx_scale=scale)


# ---------------------------------------------------------------------------
# Land-mobile-satellite Markov model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LmsStateParams:
    """Loo-type statistics of one state.

    The direct path amplitude is log-normal, ``20 log10|A| ~ N(direct_mean_db,
    shadow_std_db)``; the diffuse part is Rayleigh with linear mean power
    ``multipath_power``.
    """

    direct_mean_db: float
    shadow_std_db: float
    multipath_power: float

    def __post_init__(self):
        if self.shadow_std_db < 0 or self.multipath_power < 0:
            raise ValueError("shadow spread and multipath power must be >= 0")


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    return pi / pi.sum()


@dataclass(frozen=True)
class MarkovLmsModel:
    P: np.ndarray
    states: tuple[LmsStateParams, LmsStateParams, LmsStateParams]
    W: np.ndarray = None
    L_min: float = 3.0  # metres
    speed: float = 10.0  # m/s
    symbol_duration: float = 1e-3  # seconds per channel use

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 3) or np.any(P < 0):
            raise ValueError("P must be a nonnegative 3x3 matrix")
        if np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("rows of P must sum to 1")
        object.__setattr__(self, "P", P)
        if self.W is None:
            W = stationary_distribution(P)
        else:
            W = np.asarray(self.W, dtype=float)
            if W.shape != (3,) or np.any(W < 0) or abs(W.sum() - 1) > 1e-12:
                raise ValueError("W must be a probability vector of length 3")
            if np.max(np.abs(W @ P - W)) > 1e-9:
                raise ValueError("W is not stationary for P")
        object.__setattr__(self, "W", W)
        if len(self.states) != 3:
            raise ValueError("exactly three state parameter sets required")
        if min(self.L_min, self.speed, self.symbol_duration) <= 0:
            raise ValueError("L_min, speed and symbol_duration must be positive")

    @property
    def dwell_symbols(self) -> int:
        """Channel uses per minimum state length."""
        return max(1, round(self.L_min / (self.speed * self.symbol_duration)))


def initial_state(model: MarkovLmsModel, rng: np.random.Generator) -> int:
    return int(rng.choice(3, p=model.W))


def step_markov(model: MarkovLmsModel, state: int, rng: np.random.Generator) -> int:
    """Next state drawn from row ``P[state]`` (one transition opportunity)."""
    return int(rng.choice(3, p=model.P[state]))


def state_trace(model: MarkovLmsModel, n_symbols: int, rng: np.random.Generator,
                state: Optional[int] = None) -> np.ndarray:
    """Per-symbol state sequence; transitions only at multiples of the dwell length."""
    dwell = model.dwell_symbols
    n_slots = -(-n_symbols // dwell)
    return np.repeat(markov_chain(model, n_slots, rng, state), dwell)[:n_symbols]


def markov_chain(model: MarkovLmsModel, n_steps: int, rng: np.random.Generator,
                 state: Optional[int] = None) -> np.ndarray:
    """States visited over ``n_steps`` transition opportunities (first entry is the start)."""
    s = initial_state(model, rng) if state is None else int(state)
    # column thresholds per row; plain floats keep the loop cheap
    c0, c1 = np.cumsum(model.P, axis=1)[:, :2].T.tolist()
    out = [0] * n_steps
    for i, u in enumerate(rng.random(n_steps).tolist()):
        out[i] = s
        s = 0 if u < c0[s] else 1 if u < c1[s] else 2
    return np.asarray(out, dtype=np.int64)


def draw_lms_gain(model: MarkovLmsModel, state: int, rng: np.random.Generator,
                  size=None, direct_phase=0.0):
    """Complex gain: log-normal shadowed direct path plus diffuse Rayleigh."""
    p = model.states[state]
    shadow = rng.normal(p.direct_mean_db, p.shadow_std_db, size) if p.shadow_std_db > 0 \
        else np.full(size, p.direct_mean_db) if size is not None else p.direct_mean_db
    direct = 10.0 ** (np.asarray(shadow) / 20.0) * np.exp(1j * np.asarray(direct_phase))
    if p.multipath_power > 0:
        shape = () if size is None else size
        diffuse = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
            * math.sqrt(p.multipath_power / 2)
    else:
        diffuse = 0.0
    g = direct + diffuse
    return complex(g) if size is None else g


def lms_mean_power(params: LmsStateParams) -> float:
    """E|gain|^2 of the log-normal + Rayleigh mixture."""
    c = math.log(10) / 10
    return math.exp(c * params.direct_mean_db + 0.5 * (c * params.shadow_std_db) ** 2) \
        + params.multipath_power


class LmsProcess:
    """Stateful LMS state sequence advanced in channel uses (one per trial stream)."""

    def __init__(self, model: MarkovLmsModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.state = initial_state(model, rng)
        self._left = model.dwell_symbols

    def advance(self, n_symbols: int) -> int:
        """State in force for the next block of ``n_symbols`` channel uses."""
        current = self.state
        self._left -= n_symbols
        while self._left <= 0:
            self.state = step_markov(self.model, self.state, self.rng)
            self._left += self.model.dwell_symbols
        return current


def hybrid_channel(model: MarkovLmsModel, sat_antennas: Sequence[int], n_r: int, n_t: int,
                   rng: np.random.Generator, state: Optional[int] = None,
                   noise_var: float = 1.0) -> ChannelRealization:
    """SAT columns through the LMS model under one shared state, the rest Rayleigh."""
    sat = list(sat_antennas)
    if len(set(sat)) != len(sat) or not all(0 <= i < n_t for i in sat):
        raise ValueError(f"invalid SAT antenna set {sat_antennas!r}")
    H = draw_rayleigh(n_r, n_t, rng).H
    if sat:
        s = initial_state(model, rng) if state is None else state
        phase = rng.uniform(0, 2 * np.pi, (n_r, len(sat)))
        H[:, sat] = draw_lms_gain(model, s, rng, size=(n_r, len(sat)), direct_phase=phase)
    return ChannelRealization(H, noise_var)


# ---------------------------------------------------------------------------
# Parameter file
# ---------------------------------------------------------------------------

LMS_SCHEMA = {
    "type": "object",
    "required": ["P", "states"],
    "properties": {
        "P": {"type": "array", "minItems": 3, "maxItems": 3,
              "items": {"type": "array", "minItems": 3, "maxItems": 3,
                        "items": {"type": "number", "minimum": 0, "maximum": 1}}},
        "W": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
        "L_min": {"type": "number", "exclusiveMinimum": 0},
        "speed": {"type": "number", "exclusiveMinimum": 0},
        "symbol_duration": {"type": "number", "exclusiveMinimum": 0},
        "states": {
            "type": "object",
            "required": list(STATE_LABELS),
            "properties": {s: {
                "type": "object",
                "required": ["direct_mean_db", "shadow_std_db", "multipath_power"],
                "properties": {
                    "direct_mean_db": {"type": "number"},
                    "shadow_std_db": {"type": "number", "minimum": 0},
                    "multipath_power": {"type": "number", "minimum": 0},
                },
                "additionalProperties": False,
            } for s in STATE_LABELS},
            "additionalProperties": False,
        },
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


def lms_model_from_dict(cfg: dict, require_ordered: bool = False) -> MarkovLmsModel:
    jsonschema.validate(cfg, LMS_SCHEMA)
    states = tuple(LmsStateParams(**cfg["states"][s]) for s in STATE_LABELS)
    if require_ordered:
        powers = [lms_mean_power(p) for p in states]
        if not powers[0] >= powers[1] >= powers[2]:
            raise ValueError(f"state mean powers must satisfy S1 >= S2 >= S3, got {powers}")
    kw = {k: cfg[k] for k in ("W", "L_min", "speed", "symbol_duration") if k in cfg}
    return MarkovLmsModel(P=np.array(cfg["P"], dtype=float), states=states, **kw)


def load_lms_model(path, require_ordered: bool = True) -> MarkovLmsModel:
    return lms_model_from_dict(json.loads(Path(path).read_text()), require_ordered)


def default_lms_model() -> MarkovLmsModel:
    text = resources.files("hybridst").joinpath("data/lms_default.json").read_text()
    return lms_model_from_dict(json.loads(text), require_ordered=True)
