"""Per-channel 2D DFT and amplitude/phase decomposition.

Images are real arrays shaped ``(..., H, W, C)``; any leading axes are treated
as a batch. Spectra are complex arrays of the same shape in natural layout
(DC at index ``[0, 0]``, no fftshift). The forward transform is unnormalized
and the inverse carries the ``1/(H*W)`` factor.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

# Imaginary residue allowed after the inverse transform, relative to the
# largest spectral magnitude of each image.
RESIDUE_TOL = 1e-6


class DimensionError(ValueError):
    """Raised for image sizes the radix-2 transform cannot handle."""


class InputError(ValueError):
    """Raised for non-finite or malformed numeric input."""


class SpectralConsistencyError(ArithmeticError):
    """Raised when an inverse transform leaves a large imaginary residue."""


class AmpPhase(NamedTuple):
    amplitude: np.ndarray
    phase: np.ndarray


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def _fft_last_axis(x: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    n = x.shape[-1]
    out = np.asarray(x, dtype=np.complex128)[..., _bit_reversal(n)]
    lead = out.shape[:-1]
    buf = np.empty_like(out)
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(*lead, n // size, size)
        dest = buf.reshape(*lead, n // size, size)
        odd = blocks[..., half:] * _twiddles(size, inverse)
        np.add(blocks[..., :half], odd, out=dest[..., :half])
        np.subtract(blocks[..., :half], odd, out=dest[..., half:])
        out, buf = buf, out
        size *= 2
    return out


def _fft2(x: np.ndarray, inverse: bool) -> np.ndarray:
    # (..., H, W, C) -> (..., C, H, W), transform W then H, keep channels apart
    y = np.ascontiguousarray(np.moveaxis(x, -1, -3))
    y = _fft_last_axis(y, inverse)
    y = np.ascontiguousarray(np.swapaxes(y, -1, -2))
    y = np.swapaxes(_fft_last_axis(y, inverse), -1, -2)
    return np.moveaxis(y, -3, -1)


def _check_grid(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) < 3:
        raise DimensionError(f"expected (..., H, W, C) array, got shape {shape}")
    h, w = shape[-3], shape[-2]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise DimensionError(f"H and W must be powers of two, got {h}x{w}")
    if shape[-1] < 1:
        raise DimensionError("image must have at least one channel")
    return h, w


def dft2(img: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2D DFT of each channel of a real image (or batch)."""
    img = np.asarray(img)
    _check_grid(img.shape)
    if np.iscomplexobj(img):
        raise InputError("dft2 expects a real-valued image")
    if not np.all(np.isfinite(img)):
        raise InputError("image contains NaN or Inf")
    return _fft2(img.astype(np.float64, copy=False), inverse=False)


def idft2(spec: np.ndarray) -> np.ndarray:
    """Inverse 2D DFT with ``1/(H*W)`` scaling, returning the real part.

    Raises SpectralConsistencyError if any image in the batch keeps an
    imaginary residue above ``RESIDUE_TOL`` times its largest magnitude.
    """
    spec = np.asarray(spec, dtype=np.complex128)
    h, w = _check_grid(spec.shape)
    if not np.all(np.isfinite(spec)):
        raise InputError("spectrum contains NaN or Inf")
    out = _fft2(spec, inverse=True) / (h * w)
    residue = np.abs(out.imag).max(axis=(-3, -2, -1))
    scale = np.abs(spec).max(axis=(-3, -2, -1))
    if np.any(residue > RESIDUE_TOL * scale):
        raise SpectralConsistencyError(
            f"imaginary residue {float(np.max(residue)):.3e} exceeds "
            f"{RESIDUE_TOL:g} x max amplitude {float(np.max(scale)):.3e}"
        )
    return np.ascontiguousarray(out.real)


def decompose(spec: np.ndarray) -> AmpPhase:
    """Split a spectrum into amplitude and quadrant-correct phase in (-pi, pi]."""
    spec = np.asarray(spec, dtype=np.complex128)
    amplitude = np.sqrt(spec.real**2 + spec.imag**2)
    phase = np.arctan2(spec.imag, spec.real)
    # arctan2 yields -pi for (negative, -0.0) and +/-pi for signed zeros
    phase = np.where(phase <= -np.pi, np.pi, phase)
    phase = np.where(amplitude == 0.0, 0.0, phase)
    return AmpPhase(amplitude, phase)


def recompose(amplitude: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Build a complex spectrum from amplitude and phase grids."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if amplitude.shape != phase.shape:
        try:
            amplitude, phase = np.broadcast_arrays(amplitude, phase)
        except ValueError:
            raise DimensionError(
                f"amplitude shape {amplitude.shape} does not match phase shape {phase.shape}"
            ) from None
    if np.any(amplitude < 0):
        raise InputError("amplitude must be nonnegative")
    return amplitude * np.cos(phase) + 1j * (amplitude * np.sin(phase))


def amplitude(img: np.ndarray) -> np.ndarray:
    return decompose(dft2(img)).amplitude
