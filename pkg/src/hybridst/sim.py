"""Monte Carlo BER harness: curves, required Eb/N0 by bisection, beta sweeps.

Every frame draws from its own RNG stream keyed by (seed, scheme, beta,
Eb/N0, frame index), and frames are aggregated strictly in index order, so
results do not depend on how many worker processes computed them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import jsonschema
import numpy as np

from .channels import MarkovLmsModel, default_lms_model, load_lms_model
from .coded_link import LinkConfig, preset_config, run_link_once

log = logging.getLogger(__name__)

__all__ = [
    "BpskAwgnLink",
    "ExperimentSpec",
    "BerPoint",
    "BerCurve",
    "RequiredEbN0",
    "frame_rng",
    "run_ber_point",
    "run_ber_curve",
    "required_ebn0",
    "beta_sweep",
    "sweep_csv",
    "curve_csv",
    "wilson_halfwidth",
    "load_experiment",
    "WORKERS_ENV",
]

WORKERS_ENV = "HYBRIDST_WORKERS"
Z95 = 1.959963984540054


@dataclass(frozen=True)
class BpskAwgnLink:
    """Debug scheme: uncoded BPSK, one antenna, AWGN (closed form Q(sqrt(2 Eb/N0)))."""

    frame_bits: int = 1 << 20
    scheme: str = "bpsk_awgn"

    @property
    def name(self) -> str:
        return self.scheme

    def to_dict(self) -> dict:
        return asdict(self)


Link = Union[LinkConfig, BpskAwgnLink]


@dataclass(frozen=True)
class ExperimentSpec:
    link: Link
    channel_kind: str = "rayleigh"
    ebn0_grid: tuple[float, ...] = tuple(float(x) for x in range(0, 16, 2))
    beta_grid: tuple[float, ...] = (0.0,)
    target_ber: float = 1e-3
    min_errors: int = 100
    max_frames: int = 200
    seed: int = 1
    workers: Optional[int] = None
    lms_file: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "ebn0_grid", tuple(float(x) for x in self.ebn0_grid))
        object.__setattr__(self, "beta_grid", tuple(float(x) for x in self.beta_grid))
        if not self.ebn0_grid or not self.beta_grid:
            raise ValueError("grids must be nonempty")
        if list(self.ebn0_grid) != sorted(set(self.ebn0_grid)):
            raise ValueError("ebn0_grid must be strictly increasing")
        if not 0 < self.target_ber < 0.5:
            raise ValueError("target_ber must lie in (0, 0.5)")
        if self.min_errors < 100:
            raise ValueError("min_errors must be >= 100")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if self.channel_kind not in ("rayleigh", "lms", "hybrid"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")

    def n_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env:
            return max(1, int(env))
        return self.workers or 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["link"] = self.link.to_dict()
        d.pop("workers")  # execution detail, not part of the experiment identity
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class BerPoint:
    ebn0_db: float
    ber: float
    frames: int
    bit_errors: int
    bits: int
    confidence_halfwidth: float
    censored: bool


@dataclass
class BerCurve:
    scheme: str
    beta_db: float
    points: list[BerPoint] = field(default_factory=list)


@dataclass
class RequiredEbN0:
    scheme: str
    beta_db: float
    target_ber: float
    ok: bool
    ebn0_db: Optional[float] = None
    bracket: Optional[tuple[float, float]] = None
    achieved_ber: Optional[float] = None
    evaluations: int = 0
    reason: str = ""


def wilson_halfwidth(errors: int, n: int, z: float = Z95) -> float:
    if n == 0:
        return float("nan")
    p = errors / n
    denom = 1 + z * z / n
    return z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom


def _wilson_bounds(errors: int, n: int, z: float) -> tuple[float, float]:
    p = errors / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    hw = wilson_halfwidth(errors, n, z)
    return centre - hw, centre + hw


def _key(x) -> int:
    return zlib.crc32(repr(x).encode())


def frame_rng(seed: int, scheme: str, beta_db: float, ebn0_db: float, frame: int) -> np.random.Generator:
    """Counter-based stream for one frame."""
    ss = np.random.SeedSequence(
        entropy=seed,
        spawn_key=(_key(scheme), _key(round(float(beta_db), 9)),
                   _key(round(float(ebn0_db), 9)), int(frame)))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# frame evaluation (top level so worker processes can import it)
# ---------------------------------------------------------------------------

_LMS_CACHE: dict = {}


def _lms(path: Optional[str]) -> MarkovLmsModel:
    if path not in _LMS_CACHE:
        _LMS_CACHE[path] = default_lms_model() if path is None else load_lms_model(path)
    return _LMS_CACHE[path]


def _bpsk_frame(link: BpskAwgnLink, ebn0_db: float, rng: np.random.Generator) -> tuple[int, int]:
    bits = rng.integers(0, 2, link.frame_bits, dtype=np.int8)
    x = 1.0 - 2.0 * bits
    sigma = math.sqrt(0.5 * 10 ** (-ebn0_db / 10))
    y = x + sigma * rng.standard_normal(x.size)
    return int(np.count_nonzero((y < 0) != (bits == 1))), link.frame_bits


def _run_frame(args) -> tuple[int, int]:
    spec, beta_db, ebn0_db, frame = args
    link = spec.link
    rng = frame_rng(spec.seed, link.name, beta_db, ebn0_db, frame)
    if isinstance(link, BpskAwgnLink):
        return _bpsk_frame(link, ebn0_db, rng)
    lms = _lms(spec.lms_file) if spec.channel_kind != "rayleigh" else None
    tx, rx = run_link_once(link, ebn0_db, beta_db, spec.channel_kind, rng, lms_model=lms)
    return int(np.count_nonzero(tx != rx)), int(tx.size)


class _Executor:
    """Maps frame jobs either inline or on a process pool."""

    def __init__(self, workers: int):
        self.workers = workers
        self.pool = ProcessPoolExecutor(workers) if workers > 1 else None

    def map(self, jobs):
        if self.pool is None:
            return map(_run_frame, jobs)
        return self.pool.map(_run_frame, jobs)

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_ber_point(spec: ExperimentSpec, ebn0_db: float, beta_db: float = 0.0,
                  executor: Optional[_Executor] = None, decide_against: Optional[float] = None) -> BerPoint:
    """Simulate frames in index order until ``min_errors`` errors or ``max_frames``.

    With ``decide_against`` set, also stops once a 99.9% Wilson interval
    excludes that BER (used for bracketing decisions only).
    """
    own = executor is None
    ex = executor or _Executor(1)
    batch = max(1, ex.workers) * 2
    errors = bits = frames = 0
    done = False
    try:
        while not done and frames < spec.max_frames:
            idx = range(frames, min(frames + batch, spec.max_frames))
            results = ex.map([(spec, beta_db, ebn0_db, i) for i in idx])
            for e, n in results:
                # strict index order: later frames in the batch are ignored once we stop
                errors += e
                bits += n
                frames += 1
                if errors >= spec.min_errors:
                    done = True
                elif decide_against is not None and frames >= 2:
                    lo, hi = _wilson_bounds(errors, bits, 3.29)
                    if hi < decide_against or lo > decide_against:
                        done = True
                if done:
                    break
    finally:
        if own:
            ex.close()
    return BerPoint(float(ebn0_db), errors / bits, frames, errors, bits,
                    wilson_halfwidth(errors, bits), errors < spec.min_errors)


def run_ber_curve(spec: ExperimentSpec, beta_db: Optional[float] = None) -> BerCurve:
    beta = spec.beta_grid[0] if beta_db is None else beta_db
    curve = BerCurve(spec.link.name, beta)
    with _Executor(spec.n_workers()) as ex:
        for e in spec.ebn0_grid:
            pt = run_ber_point(spec, e, beta, ex)
            log.info("%s beta=%g Eb/N0=%g: BER %.3e (%d errors, %d frames)",
                     spec.link.name, beta, e, pt.ber, pt.bit_errors, pt.frames)
            curve.points.append(pt)
    return curve


BerEvaluator = Callable[[float], float]


def required_ebn0(spec: ExperimentSpec, target_ber: Optional[float] = None,
                  beta_db: Optional[float] = None, evaluator: Optional[BerEvaluator] = None,
                  resolution: float = 0.25, executor: Optional[_Executor] = None) -> RequiredEbN0:
    """Eb/N0 reaching ``target_ber``: bracket on the grid, then bisect below ``resolution`` dB.

    ``evaluator`` maps Eb/N0 to a BER and replaces the Monte Carlo run (test hook).
    """
    target = spec.target_ber if target_ber is None else target_ber
    beta = spec.beta_grid[0] if beta_db is None else beta_db
    res = RequiredEbN0(spec.link.name, beta, target, ok=False)
    own = executor is None and evaluator is None
    ex = executor if executor is not None else (_Executor(spec.n_workers()) if own else None)

    def ber_at(x: float, decide: bool = True) -> float:
        res.evaluations += 1
        if evaluator is not None:
            return float(evaluator(x))
        pt = run_ber_point(spec, x, beta, ex, decide_against=target if decide else None)
        return pt.ber

    try:
        grid = spec.ebn0_grid
        first = ber_at(grid[0])
        if first <= target:
            res.reason = (f"BER {first:.3g} at the lowest grid point {grid[0]} dB "
                          f"is already at or below the target")
            return res
        lo, hi = grid[0], None
        for x in grid[1:]:
            if ber_at(x) <= target:
                hi = x
                break
            lo = x
        if hi is None:
            res.reason = f"target {target:g} not reached on the grid (max {grid[-1]} dB)"
            return res
        while hi - lo >= resolution:
            mid = 0.5 * (lo + hi)
            if ber_at(mid) <= target:
                hi = mid
            else:
                lo = mid
        x = 0.5 * (lo + hi)
        res.ok = True
        res.ebn0_db = x
        res.bracket = (lo, hi)
        res.achieved_ber = ber_at(x, decide=False)
        return res
    finally:
        if own and ex is not None:
            ex.close()


def beta_sweep(specs: Sequence[ExperimentSpec], target_ber: Optional[float] = None) -> list[RequiredEbN0]:
    """One required Eb/N0 per (scheme, beta); failures are recorded, not raised."""
    rows = []
    for spec in specs:
        with _Executor(spec.n_workers()) as ex:
            for beta in spec.beta_grid:
                try:
                    r = required_ebn0(spec, target_ber, beta, executor=ex)
                except Exception as exc:  # keep sweeping, record the failure
                    log.exception("cell %s beta=%g failed", spec.link.name, beta)
                    r = RequiredEbN0(spec.link.name, beta, target_ber or spec.target_ber,
                                     ok=False, reason=f"{type(exc).__name__}: {exc}")
                log.info("%s beta=%g: %s", spec.link.name, beta,
                         f"{r.ebn0_db:.3f} dB" if r.ok else r.reason)
                rows.append(r)
    return rows


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def curve_csv(curve: BerCurve, spec: ExperimentSpec) -> str:
    out = io.StringIO()
    out.write(f"# spec_hash={spec.digest()} seed={spec.seed}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["scheme", "beta_db", "ebn0_db", "ber", "frames", "bit_errors", "bits",
                "confidence_halfwidth", "censored"])
    for p in curve.points:
        w.writerow([curve.scheme, _fmt(curve.beta_db), _fmt(p.ebn0_db), _fmt(p.ber), p.frames,
                    p.bit_errors, p.bits, _fmt(p.confidence_halfwidth), int(p.censored)])
    return out.getvalue()


def sweep_csv(rows: Sequence[RequiredEbN0], specs: Sequence[ExperimentSpec]) -> str:
    out = io.StringIO()
    digest = hashlib.sha256("".join(s.digest() for s in specs).encode()).hexdigest()[:16]
    seeds = sorted({s.seed for s in specs})
    out.write(f"# spec_hash={digest} seed={','.join(map(str, seeds))}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["scheme", "beta_db", "target_ber", "required_ebn0_db", "bracket_lo", "bracket_hi",
                "achieved_ber", "evaluations", "ok", "reason"])
    for r in rows:
        lo, hi = r.bracket if r.bracket else (None, None)
        w.writerow([r.scheme, _fmt(r.beta_db), _fmt(r.target_ber), _fmt(r.ebn0_db), _fmt(lo),
                    _fmt(hi), _fmt(r.achieved_ber), r.evaluations, int(r.ok), r.reason])
    return out.getvalue()


def run_manifest(specs: Sequence[ExperimentSpec], wall_time: float, extra: Optional[dict] = None) -> dict:
    import numba
    from . import __version__
    m = {
        "specs": [dict(s.to_dict(), spec_hash=s.digest()) for s in specs],
        "seeds": sorted({s.seed for s in specs}),
        "workers": max(s.n_workers() for s in specs) if specs else 1,
        "wall_time_s": round(wall_time, 3),
        "versions": {"hybridst": __version__, "numpy": np.__version__,
                     "numba": numba.__version__, "python": platform.python_version()},
    }
    if extra:
        m.update(extra)
    return m


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_LINK_SCHEMA = {
    "type": "object",
    "oneOf": [
        {"required": ["preset"]},
        {"required": ["scheme", "constellation", "Rc", "eta"]},
        {"required": ["scheme"], "properties": {"scheme": {"const": "bpsk_awgn"}}},
    ],
    "properties": {
        "preset": {"type": "object", "required": ["eta", "row"],
                   "properties": {"eta": {"enum": [2, 4]}, "row": {"type": "string"},
                                  "miso_antennas": {"enum": [2, 4]}},
                   "additionalProperties": False},
        "scheme": {"type": "string"},
        "constellation": {"type": "string"},
        "Rc": {"type": ["string", "number"]},
        "eta": {"type": ["string", "number"]},
        "frame_bits": {"type": "integer", "minimum": 1},
        "interleaver_seed": {"type": ["integer", "null"]},
        "n_r": {"type": "integer", "minimum": 1},
        "beta_antennas": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "label": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["links"],
    "properties": {
        "links": {"type": "array", "minItems": 1, "items": _LINK_SCHEMA},
        "channel_kind": {"enum": ["rayleigh", "lms", "hybrid"]},
        "ebn0_grid": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "beta_grid": {"type": "array", "minItems": 1,
                      "items": {"type": "number", "minimum": -40, "maximum": 0}},
        "target_ber": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "min_errors": {"type": "integer", "minimum": 100},
        "max_frames": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "lms_file": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}


def link_from_dict(d: dict, frame_bits: Optional[int] = None) -> Link:
    d = dict(d)
    if frame_bits is not None:
        d.setdefault("frame_bits", frame_bits)
    if d.get("scheme") == "bpsk_awgn":
        return BpskAwgnLink(**{k: v for k, v in d.items() if k == "frame_bits"})
    if "preset" in d:
        t = d.pop("preset")
        return preset_config(t["eta"], t["row"], t.get("miso_antennas", 4), **d)
    d["Rc"] = Fraction(str(d["Rc"]))
    d["eta"] = Fraction(str(d["eta"]))
    return LinkConfig(**d)


def experiments_from_dict(cfg: dict) -> list[ExperimentSpec]:
    jsonschema.validate(cfg, EXPERIMENT_SCHEMA)
    common = {k: v for k, v in cfg.items() if k != "links"}
    for k in ("ebn0_grid", "beta_grid"):
        if k in common:
            common[k] = tuple(common[k])
    return [ExperimentSpec(link=link_from_dict(l), **common) for l in cfg["links"]]


def load_experiment(path) -> list[ExperimentSpec]:
    return experiments_from_dict(json.loads(Path(path).read_text()))
