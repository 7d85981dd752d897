import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semifio.errors import (InvalidInputError, InvalidSpreadingError,
                            NumericalDegeneracyError, StepTooLargeError)
from semifio.symplectic import (ConstantSpreading, FieldSpreading, J, SymplecticBlocks,
                                branch_sqrt_det, cal_A, cal_V, cal_Y, lemma_identity_residual,
                                random_symplectic, random_theta, sqrtm_spd, symplectic_defect)

import oracles


def rotation(t):
    c, s = math.cos(t), math.sin(t)
    return SymplecticBlocks(np.array([[c]]), np.array([[s]]), np.array([[-s]]), np.array([[c]]))


def J_blocks(d):
    I, Z = np.eye(d), np.zeros((d, d))
    return SymplecticBlocks(Z, I, -I, Z)


# -- symplectic_defect -----------------------------------------------------------

def test_defect_identity_is_zero():
    assert symplectic_defect(SymplecticBlocks.identity(3)) == 0.0


def test_defect_harmonic_rotation():
    assert symplectic_defect(rotation(0.7)) <= 1e-14


def test_defect_stretched_block_matches_hand_computation():
    delta = 1e-3
    F = SymplecticBlocks(np.array([[1 + delta]]), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1))
    expected = oracles.sym2x2(1 + delta, 0.0, 0.0, 1.0)
    assert symplectic_defect(F) == pytest.approx(expected, abs=1e-15)
    assert symplectic_defect(F) == pytest.approx(delta, rel=1e-12)


def test_defect_rejects_non_finite():
    F = SymplecticBlocks(np.array([[np.nan]]), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1))
    with pytest.raises(InvalidInputError):
        symplectic_defect(F)


def test_defect_batched():
    F = SymplecticBlocks.identity(2, (5,))
    assert np.all(symplectic_defect(F) == 0)


@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 32 - 1))
def test_composition_defect_subadditive(d, s1, s2):
    F1, F2 = random_symplectic(d, s1), random_symplectic(d, s2)
    scale = max(1.0, np.max(np.abs(F1.matrix())), np.max(np.abs(F2.matrix()))) ** 4
    comp = symplectic_defect(F1 @ F2)
    assert comp <= symplectic_defect(F1) + symplectic_defect(F2) + 1e-12 * scale


# -- cal_Y -----------------------------------------------------------------------

def test_Y_identity():
    np.testing.assert_array_equal(cal_Y(SymplecticBlocks.identity(2), np.eye(2)), np.eye(2))


def test_Y_of_J_is_minus_i_theta():
    th = random_theta(2, 4)
    np.testing.assert_allclose(cal_Y(J_blocks(2), th), -1j * th, atol=1e-15)


@pytest.mark.parametrize("t", [0.0, 0.4, 2.0, 5.5])
def test_Y_harmonic(t):
    assert cal_Y(rotation(t), np.eye(1))[0, 0] == pytest.approx(cmath_exp(-t), abs=1e-15)


def cmath_exp(t):
    return complex(math.cos(t), math.sin(t))


# -- cal_A -----------------------------------------------------------------------

def test_A_identity():
    np.testing.assert_allclose(cal_A(SymplecticBlocks.identity(2), np.eye(2)), -1j * np.eye(2))


def test_A_of_J():
    # C = -I, Y = -iI, so A = (-I)(-iI)^{-1} = -iI
    np.testing.assert_allclose(cal_A(J_blocks(2), np.eye(2)), -1j * np.eye(2), atol=1e-15)


@pytest.mark.parametrize("t", [0.3, 1.1, 2.9])
def test_A_harmonic_scalar_arithmetic(t):
    expected = complex(-math.sin(t), -math.cos(t)) / complex(math.cos(t), -math.sin(t))
    assert cal_A(rotation(t), np.eye(1))[0, 0] == pytest.approx(expected, abs=1e-14)


def test_A_degenerate_raises():
    # B = D = 0 is not symplectic and makes Y singular
    Z = np.zeros((1, 1))
    with pytest.raises(NumericalDegeneracyError):
        cal_A(SymplecticBlocks(np.eye(1), Z, np.eye(1), Z), np.eye(1))


# -- cal_V and the lemma identity -------------------------------------------------

def test_V_identity():
    V = cal_V(SymplecticBlocks.identity(2), np.eye(2))
    np.testing.assert_allclose(V, np.vstack([np.eye(2), np.zeros((2, 2))]))


def test_V_of_J():
    V = cal_V(J_blocks(2), np.eye(2))
    np.testing.assert_allclose(V, np.vstack([np.zeros((2, 2)), np.eye(2)]))
    np.testing.assert_allclose(V.conj().T @ V, np.eye(2))


def test_V_rejects_indefinite_real_part():
    with pytest.raises(InvalidSpreadingError):
        cal_V(SymplecticBlocks.identity(1), np.array([[-1.0 + 0j]]))


@pytest.mark.parametrize("d", [1, 2])
def test_lemma_identity_random(d):
    rng = np.random.default_rng(11 + d)
    for _ in range(20):
        F = random_symplectic(d, rng)
        th = random_theta(d, rng)
        Y = cal_Y(F, th)
        lhs = Y @ np.linalg.inv(th.real) @ Y.conj().T
        V = cal_V(F, th)
        scale = max(1.0, np.max(np.abs(lhs)))
        assert np.max(np.abs(lhs - V.conj().T @ V)) <= 1e-12 * scale
        assert lemma_identity_residual(F, th) <= 1e-12 * scale


@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_Y_invertible_and_VV_positive(d, seed):
    rng = np.random.default_rng(seed)
    F = random_symplectic(d, rng)
    th = random_theta(d, rng)
    assert abs(np.linalg.det(cal_Y(F, th))) > 0
    V = cal_V(F, th)
    G = V.conj().T @ V
    np.testing.assert_allclose(G, G.conj().T, atol=1e-10 * max(1, np.max(np.abs(G))))
    probes = rng.standard_normal((50, d)) + 1j * rng.standard_normal((50, d))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    assert np.all(np.einsum("pi,ij,pj->p", probes.conj(), G, probes).real > 0)


# -- spreading matrices ------------------------------------------------------------

def test_constant_spreading_rejects_non_symmetric():
    with pytest.raises(InvalidSpreadingError):
        ConstantSpreading(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_constant_spreading_rejects_negative_real_part():
    with pytest.raises(InvalidSpreadingError, match="admissible spreading violated"):
        ConstantSpreading(np.array([[-1.0]]))


def test_field_spreading_floor():
    field = FieldSpreading(lambda y, e: (1.0 + 0.5 * np.cos(y[:, 0]))[:, None, None], [[0.5]])
    y = np.linspace(-3, 3, 50)[:, None]
    assert field.check_floor(y, y) >= -1e-12
    low = FieldSpreading(lambda y, e: (0.3 + 0 * y[:, 0])[:, None, None], [[0.5]])
    with pytest.raises(InvalidSpreadingError):
        low.check_floor(y, y)


def test_sqrtm_spd_roundtrip():
    R = np.array([[2.0, 0.3], [0.3, 1.0]])
    half, inv_half = sqrtm_spd(R)
    np.testing.assert_allclose(half @ half, R, atol=1e-14)
    np.testing.assert_allclose(half @ inv_half, np.eye(2), atol=1e-14)


# -- branch tracking -----------------------------------------------------------------

def test_branch_harmonic_through_two_pi():
    tracker = None
    vals = {}
    for k in range(0, 126):
        t = 0.1 * k
        v, tracker = branch_sqrt_det(tracker, np.array([[cmath_exp(-t)]]))
        vals[k] = v
        assert v == pytest.approx(cmath_exp(-t / 2), abs=1e-13)
    # t = 2*pi lies between samples; check the sign at the closest sample
    assert vals[63].real < -0.99
    v, tracker = branch_sqrt_det(tracker, np.array([[cmath_exp(-4 * math.pi)]]))
    assert v == pytest.approx(1.0, abs=1e-12)


def test_branch_constant_identity():
    tracker = None
    for _ in range(10):
        v, tracker = branch_sqrt_det(tracker, np.eye(2))
        assert v == 1.0


def test_branch_free_particle():
    tracker = None
    for t in np.linspace(0, 3, 31):
        v, tracker = branch_sqrt_det(tracker, np.array([[1 - 1j * t]]))
        expected = (1 + t * t) ** 0.25 * cmath_exp(-math.atan(t) / 2)
        assert v == pytest.approx(expected, abs=1e-14)


def test_branch_guard():
    _, tracker = branch_sqrt_det(None, np.eye(1))
    with pytest.raises(StepTooLargeError):
        branch_sqrt_det(tracker, np.array([[cmath_exp(2.0)]]))


@given(st.floats(-3, 3), st.floats(0.1, 5))
def test_branch_square_is_det(phase, mag):
    Y0 = np.eye(2, dtype=complex)
    tracker = None
    n = 40
    for k in range(n + 1):
        Y = Y0 * np.sqrt(1 + (mag - 1) * k / n) * np.exp(0.5j * phase * k / n)
        v, tracker = branch_sqrt_det(tracker, Y)
        det = np.linalg.det(Y)
        assert abs(v * v - det) <= 1e-12 * abs(det)


def test_J_matrix():
    np.testing.assert_array_equal(J(1), np.array([[0, 1], [-1, 0]]))
