"""Amplitude normalization: running amplitude averages and batch harmonization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fourier import DimensionError, InputError, decompose, dft2, idft2, recompose


@dataclass(frozen=True)
class AmplitudeState:
    """Per-client moving-average amplitude.

    ``avg`` is the zero grid until the first batch has been seen.
    """

    avg: np.ndarray
    decay: float
    batches_seen: int = 0

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {self.decay}")
        if self.batches_seen < 0:
            raise ValueError("batches_seen must be nonnegative")
        if np.any(self.avg < 0):
            raise InputError("average amplitude must be nonnegative")

    @classmethod
    def empty(cls, shape: tuple[int, int, int], decay: float) -> "AmplitudeState":
        return cls(np.zeros(shape), decay, 0)


@dataclass(frozen=True)
class GlobalAmplitude:
    avg: np.ndarray
    frozen: bool = False


def update_average(state: AmplitudeState, batch_amps) -> AmplitudeState:
    """Fold the in-batch mean amplitude into the running average.

    The first batch initializes the average to its own mean rather than
    blending with a zero grid.
    """
    amps = np.asarray(batch_amps, dtype=np.float64)
    if amps.ndim == state.avg.ndim:
        amps = amps[None]
    if amps.shape[0] == 0:
        raise ValueError("batch of amplitudes is empty")
    if amps.shape[1:] != state.avg.shape:
        raise DimensionError(
            f"amplitude grids {amps.shape[1:]} do not match state {state.avg.shape}"
        )
    if np.any(amps < 0):
        raise InputError("amplitudes must be nonnegative")
    batch_mean = amps.mean(axis=0)
    if state.batches_seen == 0:
        avg = batch_mean
    else:
        avg = (1.0 - state.decay) * state.avg + state.decay * batch_mean
    return replace(state, avg=avg, batches_seen=state.batches_seen + 1)


def harmonize_phases(amplitude: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Images rebuilt from a shared amplitude grid and per-image phases."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    if phases.shape[-amplitude.ndim:] != amplitude.shape:
        raise DimensionError(
            f"amplitude grid {amplitude.shape} does not match images {phases.shape}"
        )
    return idft2(recompose(amplitude, phases))


def normalize_batch(amplitude: np.ndarray, batch: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Replace each image's amplitude spectrum with ``amplitude``, keeping its phase.

    ``batch`` is a list of ``(H, W, C)`` images or an ``(M, H, W, C)`` array;
    the result is always an array of the latter shape.
    """
    images = np.asarray(batch, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    phases = decompose(dft2(images)).phase
    return harmonize_phases(amplitude, phases)


def aggregate_amplitudes(states: Sequence[AmplitudeState], frozen: bool = False) -> GlobalAmplitude:
    """Unweighted mean of the clients' running amplitudes."""
    if len(states) == 0:
        raise ValueError("no amplitude states to aggregate")
    shape = states[0].avg.shape
    for s in states:
        if s.avg.shape != shape:
            raise DimensionError(f"amplitude grid {s.avg.shape} does not match {shape}")
    total = np.zeros(shape)
    for s in states:
        total = total + s.avg
    return GlobalAmplitude(total / len(states), frozen=frozen)
