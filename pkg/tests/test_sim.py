import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hybridst.coded_link import preset_config
from hybridst.sim import (BpskAwgnLink, ExperimentSpec, beta_sweep, curve_csv, frame_rng,
                          load_experiment, required_ebn0, run_ber_curve, run_ber_point,
                          run_manifest, sweep_csv, wilson_halfwidth)


def bpsk_theory(ebn0_db):
    return 0.5 * math.erfc(math.sqrt(10 ** (ebn0_db / 10)))


def small_spec(label="Alamouti", **kw):
    base = dict(min_errors=100, max_frames=40, seed=3, ebn0_grid=(0, 4, 8, 12))
    base.update(kw)
    return ExperimentSpec(link=preset_config(2, label, frame_bits=2000), **base)


def test_spec_validation():
    link = BpskAwgnLink()
    for bad in (dict(ebn0_grid=()), dict(ebn0_grid=(2, 1)), dict(target_ber=0.7),
                dict(min_errors=10), dict(channel_kind="awgn"), dict(max_frames=0)):
        with pytest.raises(ValueError):
            ExperimentSpec(link=link, **bad)


def test_wilson_halfwidth():
    assert math.isnan(wilson_halfwidth(0, 0))
    hw = wilson_halfwidth(100, 100_000)
    assert hw == pytest.approx(1.96 * math.sqrt(1e-3 * (1 - 1e-3) / 1e5), rel=0.02)
    assert wilson_halfwidth(0, 1000) > 0


def test_frame_rng_streams_are_independent_keys():
    a = frame_rng(1, "x", 0.0, 2.0, 0).random(4)
    np.testing.assert_array_equal(a, frame_rng(1, "x", 0.0, 2.0, 0).random(4))
    for other in (frame_rng(2, "x", 0.0, 2.0, 0), frame_rng(1, "y", 0.0, 2.0, 0),
                  frame_rng(1, "x", -6.0, 2.0, 0), frame_rng(1, "x", 0.0, 2.5, 0),
                  frame_rng(1, "x", 0.0, 2.0, 1)):
        assert not np.array_equal(a, other.random(4))


def test_bpsk_matches_closed_form():
    spec = ExperimentSpec(link=BpskAwgnLink(), min_errors=100, max_frames=50, seed=5)
    pt = run_ber_point(spec, 9.6)
    assert pt.bit_errors >= 100 and not pt.censored
    assert 0.5 < pt.ber / bpsk_theory(9.6) < 2.0
    low = run_ber_point(spec, 2.0)
    assert low.ber == pytest.approx(bpsk_theory(2.0), rel=0.2)


def test_high_snr_point_is_censored():
    spec = small_spec(max_frames=3)
    pt = run_ber_point(spec, 40.0)
    assert pt.bit_errors == 0 and pt.censored and pt.frames == 3 and pt.ber == 0


def test_point_is_deterministic():
    spec = small_spec()
    assert run_ber_point(spec, 4.0) == run_ber_point(spec, 4.0)
    assert run_ber_point(spec, 4.0) != run_ber_point(replace(spec, seed=4), 4.0)


def test_curve_monotone_and_csv():
    spec = small_spec(ebn0_grid=(0, 4, 8))
    curve = run_ber_curve(spec)
    bers = [p.ber for p in curve.points]
    assert bers == sorted(bers, reverse=True)
    text = curve_csv(curve, spec)
    lines = text.splitlines()
    assert lines[0] == f"# spec_hash={spec.digest()} seed=3"
    assert len(lines) == 2 + 3


def test_required_ebn0_synthetic():
    spec = ExperimentSpec(link=BpskAwgnLink(), target_ber=1e-4)
    r = required_ebn0(spec, evaluator=lambda x: 10 ** (-x / 2))
    assert r.ok and abs(r.ebn0_db - 8.0) <= 0.25
    lo, hi = r.bracket
    assert hi - lo < 0.25 and lo <= 8.0 <= hi


def test_required_ebn0_unbracketable():
    spec = ExperimentSpec(link=BpskAwgnLink(), target_ber=1e-4, ebn0_grid=(0, 2, 4))
    r = required_ebn0(spec, evaluator=lambda x: 0.1)
    assert not r.ok and "not reached" in r.reason and r.ebn0_db is None
    r = required_ebn0(spec, evaluator=lambda x: 1e-6)
    assert not r.ok and "already" in r.reason


def test_required_ebn0_bpsk_monte_carlo():
    spec = ExperimentSpec(link=BpskAwgnLink(frame_bits=1 << 16), target_ber=1e-2,
                          ebn0_grid=(0, 2, 4, 6), min_errors=200, max_frames=200)
    r = required_ebn0(spec)
    # closed form: 1e-2 at 4.32 dB
    assert r.ok and abs(r.ebn0_db - 4.32) < 0.35


def test_beta_sweep_rows_and_failure_records():
    specs = [ExperimentSpec(link=BpskAwgnLink(frame_bits=1 << 14), target_ber=1e-2,
                            ebn0_grid=(0, 4, 8), beta_grid=(0,), max_frames=50),
             ExperimentSpec(link=BpskAwgnLink(frame_bits=1 << 14), target_ber=1e-2,
                            ebn0_grid=(6, 8), beta_grid=(0,), max_frames=50)]
    rows = beta_sweep(specs)
    assert [r.ok for r in rows] == [True, False]
    text = sweep_csv(rows, specs)
    assert len(text.splitlines()) == 2 + 2
    assert "already" in text


def test_beta_sweep_grid_size():
    spec = small_spec(beta_grid=(0, -6, -12), ebn0_grid=(0, 10))
    rows = beta_sweep([spec])
    assert [r.beta_db for r in rows] == [0, -6, -12]


@pytest.mark.slow
def test_alamouti_degrades_with_imbalance():
    spec = small_spec(ebn0_grid=(6.0,), max_frames=60, min_errors=300)
    bers = [run_ber_point(spec, 6.0, b).ber for b in (0, -6, -12)]
    assert bers[0] < bers[1] < bers[2]


def test_worker_count_does_not_change_results(monkeypatch):
    spec = small_spec(ebn0_grid=(2, 6))
    one = curve_csv(run_ber_curve(spec), spec)
    monkeypatch.setenv("HYBRIDST_WORKERS", "2")
    assert spec.n_workers() == 2
    two = curve_csv(run_ber_curve(spec), spec)
    assert one == two


def test_manifest_contents():
    spec = small_spec()
    m = run_manifest([spec], 1.5, {"extra": 1})
    assert m["specs"][0]["spec_hash"] == spec.digest()
    assert m["seeds"] == [3] and m["extra"] == 1
    assert {"numpy", "numba", "python", "hybridst"} <= set(m["versions"])
    json.dumps(m, default=str)


def test_load_experiment(tmp_path):
    cfg = {"links": [{"preset": {"eta": 2, "row": "L3"}, "frame_bits": 512},
                     {"scheme": "l2", "constellation": "QAM16", "Rc": "1/2", "eta": 2},
                     {"scheme": "bpsk_awgn"}],
           "beta_grid": [0, -6], "seed": 9, "target_ber": 1e-4}
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg))
    specs = load_experiment(p)
    assert [s.link.name for s in specs] == ["L3", "l2", "bpsk_awgn"]
    assert specs[0].link.frame_bits == 512 and specs[0].beta_grid == (0.0, -6.0)
    assert all(s.seed == 9 and s.target_ber == 1e-4 for s in specs)
    cfg["beta_grid"] = [3]
    p.write_text(json.dumps(cfg))
    with pytest.raises(Exception):
        load_experiment(p)


def test_digest_ignores_workers():
    spec = small_spec()
    assert spec.digest() == replace(spec, workers=4).digest()
    assert spec.digest() != replace(spec, seed=99).digest()
