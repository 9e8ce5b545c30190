"""Weight-perturbation local step (two gradient passes on one batch)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

# (params, batch) -> (loss, grad)
Objective = Callable[[np.ndarray, Any], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class PerturbConfig:
    alpha: float = 5e-2
    grad_floor: float = 1e-12

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.grad_floor <= 0:
            raise ValueError("grad_floor must be positive")


@dataclass(frozen=True)
class StepTelemetry:
    loss: float
    grad_norm: float
    perturbed_grad_norm: float


def perturbation(grad: np.ndarray, cfg: PerturbConfig) -> np.ndarray:
    """``alpha * grad / ||grad||``, or zeros when the gradient is below the floor."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient contains NaN or Inf")
    norm = float(np.sqrt(np.dot(grad, grad)))
    if cfg.alpha == 0.0 or norm < cfg.grad_floor:
        return np.zeros_like(grad)
    return grad * (cfg.alpha / norm)


def sgd_step(
    params: np.ndarray, batch, eta_l: float, objective: Objective
) -> tuple[np.ndarray, StepTelemetry]:
    loss, grad = objective(params, batch)
    gnorm = float(np.sqrt(np.dot(grad, grad)))
    return params - eta_l * grad, StepTelemetry(loss, gnorm, gnorm)


def harmofl_step(
    params: np.ndarray, batch, eta_l: float, cfg: PerturbConfig, objective: Objective
) -> tuple[np.ndarray, StepTelemetry]:
    """Descend from ``params`` using the gradient taken at ``params + delta``.

    The perturbation only decides where the gradient is evaluated; it is not
    kept in the returned parameters.
    """
    loss, g1 = objective(params, batch)
    delta = perturbation(g1, cfg)
    g1_norm = float(np.sqrt(np.dot(g1, g1)))
    if delta.any():
        _, g_delta = objective(params + delta, batch)
    else:
        # delta == 0 reuses g1 so the step is bitwise plain SGD
        g_delta = g1
    gd_norm = float(np.sqrt(np.dot(g_delta, g_delta)))
    return params - eta_l * g_delta, StepTelemetry(loss, g1_norm, gd_norm)
