from fractions import Fraction

import numpy as np
import pytest

from hybridst.coded_link import (MEMORY, PRESETS, ConvCode, LinkConfig, conv_encode,
                                 deinterleave, interleave, noise_var_for, run_link_once,
                                 preset_config, viterbi_decode)

RATES = [Fraction(1, 2), Fraction(2, 3), Fraction(3, 4)]


def hard_llr(bits):
    return np.where(np.asarray(bits) == 0, 1.0, -1.0)


def test_all_zero_input():
    for r in RATES:
        out = conv_encode(np.zeros(50, dtype=int), ConvCode(r))
        assert not out.any()


def test_impulse_response_matches_generators():
    out = conv_encode([1], ConvCode(Fraction(1, 2)))
    pairs = out.reshape(-1, 2)
    g1 = int("".join(map(str, pairs[:, 0])), 2)
    g2 = int("".join(map(str, pairs[:, 1])), 2)
    assert (g1, g2) == (0o133, 0o171)


def test_linearity(rng):
    for r in RATES:
        a, b = rng.integers(0, 2, (2, 99))
        cc = ConvCode(r)
        np.testing.assert_array_equal(conv_encode(a ^ b, cc), conv_encode(a, cc) ^ conv_encode(b, cc))


@pytest.mark.parametrize("r,n,expect", [(Fraction(1, 2), 100, 212), (Fraction(2, 3), 100, 159),
                                        (Fraction(3, 4), 99, 140)])
def test_coded_lengths(r, n, expect):
    cc = ConvCode(r)
    assert cc.coded_length(n) == expect
    assert conv_encode(np.ones(n, dtype=int), cc).size == expect


def test_puncture_patterns():
    assert ConvCode(Fraction(2, 3)).keep_mask(2).tolist() == [True, True, False, True]
    assert ConvCode(Fraction(3, 4)).keep_mask(3).tolist() == [True, True, False, True, True, False]
    with pytest.raises(ValueError):
        ConvCode(Fraction(5, 6))


@pytest.mark.parametrize("r", RATES)
def test_noiseless_decode(r, rng):
    cc = ConvCode(r)
    for n in (1, 7, 100, 1001):
        bits = rng.integers(0, 2, n)
        llr = 4 * hard_llr(conv_encode(bits, cc))
        np.testing.assert_array_equal(viterbi_decode(llr, cc, n), bits)
        np.testing.assert_array_equal(viterbi_decode(llr, cc), bits)


def test_decode_length_mismatch():
    with pytest.raises(ValueError):
        viterbi_decode(np.ones(11), ConvCode(), n_info=10)


def test_single_error_corrected(rng):
    cc = ConvCode(Fraction(1, 2))
    for _ in range(200):
        bits = rng.integers(0, 2, 120)
        llr = hard_llr(conv_encode(bits, cc))
        llr[rng.integers(llr.size)] *= -1
        np.testing.assert_array_equal(viterbi_decode(llr, cc, bits.size), bits)


def test_soft_beats_erasure(rng):
    # weak wrong-sign values are outvoted by confident neighbours
    cc = ConvCode(Fraction(3, 4))
    bits = rng.integers(0, 2, 300)
    llr = 3 * hard_llr(conv_encode(bits, cc))
    idx = rng.choice(llr.size, 20, replace=False)
    llr[idx] = -0.2 * np.sign(llr[idx])
    np.testing.assert_array_equal(viterbi_decode(llr, cc, bits.size), bits)


def test_interleaver_roundtrip(rng):
    x = rng.normal(size=1000)
    y = interleave(x, 5)
    assert not np.array_equal(x, y)
    np.testing.assert_array_equal(np.sort(x), np.sort(y))
    np.testing.assert_array_equal(deinterleave(y, 5), x)
    np.testing.assert_array_equal(interleave(x, 5), y)


PRESET_EXPECT = {
    2: {"Alamouti": ("alamouti", "QAM16", "1/2"), "MISO": ("repetition_4", "QAM16", "1/2"),
        "L3": ("l3", "QPSK", "2/3"), "D-Alamouti": ("double_alamouti", "QAM16", "1/2"),
        "L2": ("l2", "QAM16", "1/2")},
    4: {"Alamouti": ("alamouti", "QAM64", "2/3"), "MISO": ("repetition_4", "QAM64", "2/3"),
        "L3": ("l3", "QAM16", "2/3"), "D-Alamouti": ("double_alamouti", "QAM64", "2/3"),
        "L2": ("l2", "QAM64", "2/3")},
}


@pytest.mark.parametrize("eta", [2, 4])
def test_preset_eta_arithmetic(eta):
    rows = {c.label: c for c in PRESETS[eta]}
    assert set(rows) == set(PRESET_EXPECT[eta])
    for label, (scheme, const, rc) in PRESET_EXPECT[eta].items():
        c = rows[label]
        assert (c.scheme, c.constellation, c.Rc) == (scheme, const, Fraction(rc))
        assert c.code.rate_R * c.const.bits_per_symbol * c.Rc == eta == c.eta


def test_link_config_validation():
    with pytest.raises(ValueError):
        LinkConfig("alamouti", "QAM16", Fraction(1, 2), Fraction(3))
    with pytest.raises(ValueError):
        LinkConfig("alamouti", "QAM32", Fraction(1, 2), Fraction(2))
    with pytest.raises(KeyError):
        preset_config(2, "Golden")
    assert preset_config(2, "miso", miso_antennas=2).scheme == "miso_repetition_2"
    assert LinkConfig("alamouti", "16-qam", "1/2", 2).constellation == "QAM16"
    uncoded = LinkConfig("alamouti", "QPSK", 1, 2)
    assert uncoded.Rc == 1


@pytest.mark.parametrize("cfg", PRESETS[2] + PRESETS[4], ids=lambda c: f"{c.label}-{c.eta}")
def test_preset_noiseless(cfg, rng):
    from dataclasses import replace
    cfg = replace(cfg, frame_bits=2000)
    info, rx = run_link_once(cfg, None, rng=rng)
    assert np.array_equal(info, rx)
    info, rx = run_link_once(cfg, None, beta_db=-12, rng=rng)
    assert np.array_equal(info, rx)


def test_noise_variance_mapping():
    assert noise_var_for(0, 2) == pytest.approx(0.5)
    assert noise_var_for(10, Fraction(4)) == pytest.approx(0.025)


def test_link_determinism_and_stats():
    cfg = preset_config(2, "L3", frame_bits=1500)
    a = run_link_once(cfg, 4.0, rng=np.random.default_rng(3))
    stats = {}
    b = run_link_once(cfg, 4.0, rng=np.random.default_rng(3), stats=stats)
    np.testing.assert_array_equal(a[1], b[1])
    assert stats["blocks"] > 0 and stats["noise_var"] == pytest.approx(noise_var_for(4.0, 2))


@pytest.mark.parametrize("kind", ["lms", "hybrid"])
def test_lms_channels_run(kind, rng):
    cfg = preset_config(2, "Alamouti", frame_bits=1000)
    info, rx = run_link_once(cfg, None, channel_kind=kind, rng=rng)
    assert np.array_equal(info, rx)
    with pytest.raises(ValueError):
        run_link_once(cfg, None, channel_kind="awgn", rng=rng)


def test_coding_gain():
    coded = preset_config(2, "Alamouti", frame_bits=4000)
    uncoded = LinkConfig("alamouti", "QPSK", 1, 2, frame_bits=4000)
    errs = {}
    for cfg in (coded, uncoded):
        rng = np.random.default_rng(12)
        e = 0
        for _ in range(5):
            i, r = run_link_once(cfg, 8.0, rng=rng)
            e += int(np.sum(i != r))
        errs[cfg.Rc] = e
    assert errs[Fraction(1, 2)] <= errs[Fraction(1)]
    assert errs[Fraction(1)] > 0
