import cmath
from fractions import Fraction

import numpy as np
import pytest

from hybridst.algebra import CONSTELLATIONS, GaussianInteger
from hybridst.codes import (CODE_NAMES, encode, group_symbols, make_code, read_descriptor,
                            ungroup_coefficients, write_descriptor)

Z8 = cmath.exp(2j * cmath.pi / 8)
Z5 = cmath.exp(2j * cmath.pi / 5)
R = (8 / 9) ** 0.25
cc = np.conj

SHAPES = {
    "alamouti": (2, 2, 4), "jafarkhani_qo": (4, 4, 8), "double_alamouti": (4, 2, 4),
    "alamouti_sigma": (4, 2, 6), "l2": (4, 4, 8), "double_alamouti_swapped": (4, 2, 8),
    "c1_mido": (4, 4, 16), "qam_alamouti_3tx": (3, 2, 4), "l3": (3, 2, 6),
    "repetition_4": (4, 1, 2), "miso_repetition_2": (2, 1, 2),
}


@pytest.mark.parametrize("name", CODE_NAMES)
def test_descriptor_shapes_and_rates(name):
    c = make_code(name)
    assert (c.n_t, c.T, c.K) == SHAPES[name]
    assert c.rate_R == Fraction(c.K, 2 * c.T)
    assert c.dim_rate_R1 == Fraction(c.K, c.T)
    assert np.linalg.matrix_rank(c.real_basis()) == c.K
    assert set(c.sat_rows) < set(range(c.n_t))


def test_code_rates():
    assert make_code("alamouti").rate_R == 1
    assert make_code("l3").rate_R == Fraction(3, 2)
    assert make_code("l2").rate_R == 1
    assert make_code("alamouti_sigma").rate_R == Fraction(3, 2)
    assert make_code("c1_mido").rate_R == 2
    assert make_code("double_alamouti_swapped").rate_R == 2


def test_unknown_code():
    with pytest.raises(ValueError):
        make_code("golden")


def test_encode_dimension_mismatch():
    with pytest.raises(ValueError):
        encode(make_code("alamouti"), [1, 2, 3])


def test_alamouti_example():
    X = encode(make_code("alamouti"), [1, 1, 1, 0])
    np.testing.assert_allclose(X, [[1 + 1j, -1], [1, 1 - 1j]], atol=1e-12)


def test_l3_example():
    X = encode(make_code("l3"), [1, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(X, [[1, 0], [1, 0], [0, 1]], atol=1e-12)


def test_c1_example():
    g = np.zeros(16)
    g[0] = 1
    X = encode(make_code("c1_mido"), g)
    want = np.zeros((4, 4), complex)
    want[0, 0] = 1 - Z5
    want[1, 1] = np.conj(1 - Z5)
    want[2, 2] = 1 - Z5**3
    want[3, 3] = np.conj(1 - Z5**3)
    np.testing.assert_allclose(X, want, atol=1e-12)


# --- printed matrices, typed in from the symbol-level definitions ----------

def _gauss(rng):
    return complex(*rng.integers(-3, 4, 2))


def _z8_elem(rng):
    c = rng.integers(-3, 4, 4)
    a = sum(c[k] * Z8**k for k in range(4))
    sa = sum(c[k] * (-Z8) ** k for k in range(4))
    return c, a, sa


def test_l2_printed_matrix(rng):
    code = make_code("l2")
    for _ in range(50):
        c = [_gauss(rng) for _ in range(4)]
        g = np.ravel([[x.real, x.imag] for x in c])
        c1, c2, c3, c4 = c
        want = [[c1, 1j * c2, -cc(c3), -cc(c4)],
                [c2, c1, 1j * cc(c4), -cc(c3)],
                [c3, 1j * c4, cc(c1), cc(c2)],
                [c4, c3, -1j * cc(c2), cc(c1)]]
        np.testing.assert_allclose(encode(code, g), want, atol=1e-12)


def test_l2_block_structure(rng):
    # bottom-left block [[c3, j c4],[c4, c3]] vs top-right [[-c3*, -c4*],[j c4*, -c3*]]
    code = make_code("l2")
    for _ in range(50):
        X = encode(code, rng.integers(-3, 4, 8))
        TL, TR, BL, BR = X[:2, :2], X[:2, 2:], X[2:, :2], X[2:, 2:]
        np.testing.assert_allclose(BR, np.array([[cc(TL[0, 0]), cc(TL[1, 0])],
                                                 [-1j * cc(TL[1, 0]), cc(TL[0, 0])]]), atol=1e-12)
        np.testing.assert_allclose(TR, np.array([[-cc(BL[0, 0]), -cc(BL[1, 0])],
                                                 [1j * cc(BL[1, 0]), -cc(BL[0, 0])]]), atol=1e-12)


def test_l3_and_alamouti_sigma_printed(rng):
    l3, asg = make_code("l3"), make_code("alamouti_sigma")
    for _ in range(50):
        c, a, sa = _z8_elem(rng)
        b = _gauss(rng)
        g = np.concatenate([c, [b.real, b.imag]])
        np.testing.assert_allclose(encode(l3, g), [[a, b], [sa, -cc(b)], [b, cc(sa)]], atol=1e-12)
        np.testing.assert_allclose(encode(asg, g), [[a, -cc(b)], [b, cc(a)], [sa, -cc(b)], [b, cc(sa)]],
                                   atol=1e-12)


def test_c1_printed_matrix(rng):
    code = make_code("c1_mido")

    def x_of(y):
        z = Z5
        return y[0] * (1 - z) + y[1] * (z - z**2) + y[2] * (z**2 - z**3) + y[3] * (z**3 - z**4)

    def sx_of(y):
        z = Z5
        return y[0] * (1 - z**3) + y[1] * (z**3 - z) + y[2] * (z - z**4) + y[3] * (z**4 - z**2)

    for _ in range(30):
        y = rng.integers(-3, 4, 16)
        x = [x_of(y[4 * i:4 * i + 4]) for i in range(4)]
        s = [sx_of(y[4 * i:4 * i + 4]) for i in range(4)]
        want = [[x[0], -R**2 * cc(x[1]), -R**3 * s[3], -R * cc(s[2])],
                [R**2 * x[1], cc(x[0]), R * s[2], -R**3 * cc(s[3])],
                [R * x[2], -R**3 * cc(x[3]), s[0], -R**2 * cc(s[1])],
                [R**3 * x[3], R * cc(x[2]), R**2 * s[1], cc(s[0])]]
        np.testing.assert_allclose(encode(code, y), want, atol=1e-12)


def test_c1_r_powers():
    # entry magnitudes on y-unit vectors carry r^p; the right half holds sigma images
    code = make_code("c1_mido")
    powers = np.array([[0, 2, 3, 1], [2, 0, 1, 3], [1, 3, 0, 2], [3, 1, 2, 0]])
    base = np.array([abs(1 - Z5)] * 2 + [abs(1 - Z5**3)] * 2)
    mags = np.zeros((4, 4))
    for i in range(4):
        g = np.zeros(16)
        g[4 * i] = 1  # x_i = 1 - zeta, sigma(x_i) = 1 - zeta^3
        mags += np.abs(encode(code, g))
    np.testing.assert_allclose(mags, base[None, :] * R**powers, atol=1e-12)


def test_jafarkhani_and_double_structures(rng):
    for _ in range(30):
        g = rng.integers(-3, 4, 4)
        D = encode(make_code("double_alamouti"), g)
        np.testing.assert_allclose(D[:2], D[2:], atol=0)
        a, b, c, d = (complex(*rng.integers(-3, 4, 2)) for _ in range(4))
        S = encode(make_code("double_alamouti_swapped"), [a.real, a.imag, b.real, b.imag,
                                                         c.real, c.imag, d.real, d.imag])
        np.testing.assert_allclose(S, [[a, -cc(b)], [c, -cc(d)], [b, cc(a)], [d, cc(c)]], atol=1e-12)
        q = encode(make_code("qam_alamouti_3tx"), [a.real, a.imag, b.real, b.imag])
        np.testing.assert_allclose(q, [[a, b], [a, -cc(b)], [b, cc(a)]], atol=1e-12)


def test_alamouti_orthogonality(rng):
    code = make_code("alamouti")
    for _ in range(100):
        g = rng.normal(size=4)
        X = encode(code, g)
        np.testing.assert_allclose(X.conj().T @ X, np.sum(g**2) * np.eye(2), atol=1e-12)


@pytest.mark.parametrize("name", CODE_NAMES)
def test_linearity(name, rng):
    code = make_code(name)
    for _ in range(20):
        g, h = rng.integers(-5, 6, (2, code.K))
        np.testing.assert_allclose(encode(code, g + h), encode(code, g) + encode(code, h), atol=1e-12)


@pytest.mark.parametrize("name", CODE_NAMES)
def test_unit_energy_normalization(name):
    # exact average over all QPSK symbol tuples (Monte Carlo for the large codes)
    code = make_code(name)
    q = CONSTELLATIONS["QPSK"]
    amp = code.energy_scale * q.energy_scale
    rng = np.random.default_rng(1)
    g = rng.choice([-1, 1], (20000, code.K)) if code.K > 8 else \
        np.array(np.meshgrid(*[[-1, 1]] * code.K)).reshape(code.K, -1).T
    X = encode(code, g) * amp
    energy = np.mean(np.sum(np.abs(X) ** 2, axis=(1, 2))) / code.T
    assert energy == pytest.approx(1.0, rel=1e-12 if code.K <= 8 else 0.02)


def test_group_symbols_examples():
    assert group_symbols(make_code("alamouti"), [1 + 1j, 1]).tolist() == [1, 1, 1, 0]
    # l3: a = s + t*zeta_8 with s = 1, t = j  ->  a = 1 + zeta_8^3
    g = group_symbols(make_code("l3"), [1, 1j, 1])
    assert g.tolist() == [1, 0, 0, 1, 1, 0]
    assert encode(make_code("l3"), g)[0, 0] == pytest.approx(1 + 1j * Z8)
    assert not group_symbols(make_code("l2"), [0, 0, 0, 0]).any()
    with pytest.raises(ValueError):
        group_symbols(make_code("alamouti"), [1])


@pytest.mark.parametrize("name", CODE_NAMES)
def test_group_ungroup_identity(name, rng):
    code = make_code(name)
    syms = [GaussianInteger(*rng.integers(-7, 8, 2)) for _ in range(code.n_symbols)]
    g = group_symbols(code, syms)
    assert ungroup_coefficients(code, g) == syms


@pytest.mark.parametrize("name", CODE_NAMES)
def test_descriptor_roundtrip(name, tmp_path):
    code = make_code(name)
    path = tmp_path / f"{name}.stcode"
    write_descriptor(code, path)
    back = read_descriptor(path)
    assert (back.name, back.n_t, back.T, back.K, back.sat_rows) == \
        (code.name, code.n_t, code.T, code.K, code.sat_rows)
    np.testing.assert_array_equal(back.dispersion, code.dispersion)
    np.testing.assert_array_equal(back.layout, code.layout)
    assert back.energy_scale == code.energy_scale


def test_descriptor_rejects_dependent_basis():
    text = "stcode 1\nname bad\nn_t 1\nT 1\nK 2\nsat_rows\nB 0 1 0\nB 1 2 0\n"
    with pytest.raises(ValueError, match="independent"):
        read_descriptor(text)
