from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from harmofl.fourier import (
    DimensionError,
    InputError,
    SpectralConsistencyError,
    decompose,
    dft2,
    idft2,
    recompose,
)

from .conftest import naive_dft2

pow2 = st.sampled_from([1, 2, 4, 8, 16])
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def images(draw):
    h, w, c = draw(pow2), draw(pow2), draw(st.integers(1, 3))
    return draw(arrays(np.float64, (h, w, c), elements=finite))


def test_constant_image_concentrates_at_dc():
    s = dft2(np.ones((2, 2, 1)))
    np.testing.assert_array_equal(s.real[..., 0], [[4, 0], [0, 0]])
    np.testing.assert_array_equal(s.imag, 0)


def test_impulse_matches_naive_dft():
    img = np.array([[1.0, 0.0], [0.0, 0.0]])[:, :, None]
    expected = naive_dft2(img)
    np.testing.assert_allclose(expected.real[..., 0], np.ones((2, 2)), atol=1e-15)
    np.testing.assert_allclose(dft2(img), expected, atol=1e-12)


@pytest.mark.parametrize("shape", [(4, 8, 1), (8, 8, 3), (16, 4, 2), (32, 32, 1)])
def test_matches_naive_dft(rng, shape):
    img = rng.normal(size=shape)
    np.testing.assert_allclose(dft2(img), naive_dft2(img), atol=1e-9)


def test_dc_is_channel_sum(rng):
    img = rng.uniform(size=(8, 16, 3))
    np.testing.assert_allclose(dft2(img)[0, 0].real, img.sum(axis=(0, 1)), rtol=1e-12)


def test_batch_axes_are_independent(rng):
    batch = rng.normal(size=(5, 8, 8, 3))
    stacked = np.stack([dft2(x) for x in batch])
    np.testing.assert_allclose(dft2(batch), stacked, atol=1e-12)


def test_inverse_of_dc_spectrum():
    spec = np.array([[4.0, 0.0], [0.0, 0.0]], dtype=complex)[:, :, None]
    np.testing.assert_allclose(idft2(spec)[..., 0], np.ones((2, 2)), atol=1e-15)


def test_zero_spectrum_gives_zero_image():
    np.testing.assert_array_equal(idft2(np.zeros((4, 4, 2), dtype=complex)), 0.0)


def test_round_trip_random_32x32x3(rng):
    x = rng.uniform(size=(32, 32, 3))
    assert np.max(np.abs(idft2(dft2(x)) - x)) < 1e-9


def test_round_trip_conjugate_symmetric_spectrum(rng):
    s = dft2(rng.normal(size=(16, 8, 3)))
    np.testing.assert_allclose(dft2(idft2(s)), s, atol=1e-9)


def test_non_power_of_two_rejected():
    with pytest.raises(DimensionError):
        dft2(np.zeros((6, 8, 1)))
    with pytest.raises(DimensionError):
        dft2(np.zeros((8, 8)))


def test_non_finite_rejected():
    img = np.zeros((4, 4, 1))
    img[1, 1, 0] = np.nan
    with pytest.raises(InputError):
        dft2(img)


def test_malformed_spectrum_rejected():
    spec = np.zeros((4, 4, 1), dtype=complex)
    spec[1, 0, 0] = 1.0  # no conjugate partner at [3, 0]
    with pytest.raises(SpectralConsistencyError):
        idft2(spec)


def test_decompose_three_four_five():
    ap = decompose(np.array([3 + 4j]).reshape(1, 1, 1))
    assert ap.amplitude.item() == 5.0
    assert ap.phase.item() == pytest.approx(np.arctan2(4, 3))
    assert ap.phase.item() == pytest.approx(0.9273, abs=1e-4)


def test_decompose_zero_cell_has_zero_phase():
    spec = np.array([0 + 0j, -0.0 - 0.0j, complex(-0.0, 0.0)]).reshape(1, 3, 1)
    ap = decompose(spec)
    np.testing.assert_array_equal(ap.amplitude, 0.0)
    np.testing.assert_array_equal(ap.phase, 0.0)


def test_phase_range_excludes_minus_pi():
    spec = np.array([complex(-1.0, -0.0), complex(-1.0, 0.0)]).reshape(1, 2, 1)
    phase = decompose(spec).phase
    np.testing.assert_array_equal(phase, np.pi)


def test_recompose_inverts_three_four_five():
    s = recompose(np.array([[[5.0]]]), np.array([[[np.arctan2(4, 3)]]]))
    assert abs(s.item() - (3 + 4j)) < 1e-12


def test_recompose_zero_amplitude(rng):
    s = recompose(np.zeros((4, 4, 2)), rng.uniform(-np.pi, np.pi, (4, 4, 2)))
    np.testing.assert_array_equal(s, 0.0)


def test_recompose_errors():
    with pytest.raises(DimensionError):
        recompose(np.ones((2, 2, 1)), np.ones((4, 4, 1)))
    with pytest.raises(InputError):
        recompose(-np.ones((2, 2, 1)), np.ones((2, 2, 1)))


def test_full_pipeline_identity(rng):
    x = rng.uniform(size=(16, 16, 3))
    amp, phase = decompose(dft2(x))
    assert np.max(np.abs(idft2(recompose(amp, phase)) - x)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(images())
def test_round_trip_property(x):
    err = np.max(np.abs(idft2(dft2(x)) - x))
    assert err < 1e-9 * max(1.0, np.max(np.abs(x)))


@settings(max_examples=60, deadline=None)
@given(images())
def test_parseval(x):
    s = dft2(x)
    h, w, _ = x.shape
    energy = (x**2).sum(axis=(0, 1))
    spectral = (s.real**2 + s.imag**2).sum(axis=(0, 1)) / (h * w)
    np.testing.assert_allclose(spectral, energy, rtol=1e-9, atol=1e-9 * max(1.0, energy.max()))


@settings(max_examples=40, deadline=None)
@given(images(), finite, finite)
def test_linearity(x, a, b):
    y = np.roll(x[::-1], 1, axis=1)
    lhs = dft2(a * x + b * y)
    rhs = a * dft2(x) + b * dft2(y)
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(images())
def test_conjugate_symmetry(x):
    s = dft2(x)
    h, w, _ = x.shape
    u = (-np.arange(h)) % h
    v = (-np.arange(w)) % w
    mirrored = np.conj(s[u][:, v])
    assert np.max(np.abs(s - mirrored)) < 1e-9 * max(1.0, np.max(np.abs(s)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.complex128, (4, 4, 2), elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)))
def test_polar_round_trip(s):
    ap = decompose(s)
    assert np.all(ap.amplitude >= 0)
    assert np.all((ap.phase > -np.pi) & (ap.phase <= np.pi))
    np.testing.assert_allclose(recompose(*ap), s, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(s))))
