"""2-D loss-surface slices around a model, for plotting downstream.

Two Gaussian directions are orthonormalized (Gram-Schmidt on the whole
vector) and then filter-normalized: every output unit's incoming weight
column is rescaled to the norm of the same column in the centre model, and
bias entries are zeroed. The grid evaluates ``theta + a*d1 + b*d2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mlp

MAX_EVALUATIONS = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    steps_a: int = 21
    steps_b: int = 21
    radius: float = 1.0

    def __post_init__(self):
        if self.steps_a < 1 or self.steps_b < 1:
            raise ValueError("grid needs at least one step per axis")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def coords(self, steps: int) -> np.ndarray:
        # a single step means "just the centre"
        if steps == 1:
            return np.zeros(1)
        return np.linspace(-self.radius, self.radius, steps)

    @property
    def size(self) -> int:
        return self.steps_a * self.steps_b


def filter_normalize(arch: mlp.MLPArch, direction: np.ndarray, centre: np.ndarray) -> np.ndarray:
    out = np.array(direction, dtype=np.float64, copy=True)
    for (w_dir, b_dir), (w_ref, _) in zip(arch.unpack(out), arch.unpack(centre)):
        dir_norm = np.linalg.norm(w_dir, axis=0)
        ref_norm = np.linalg.norm(w_ref, axis=0)
        scale = np.divide(ref_norm, dir_norm, out=np.zeros_like(ref_norm), where=dir_norm > 0)
        w_dir *= scale[None, :]
        b_dir[...] = 0.0
    return out


def random_directions(arch: mlp.MLPArch, centre: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 0x1A5D])
    d1 = rng.standard_normal(arch.num_params)
    d2 = rng.standard_normal(arch.num_params)
    d1 /= np.linalg.norm(d1)
    d2 -= (d2 @ d1) * d1
    d2 /= np.linalg.norm(d2)
    return filter_normalize(arch, d1, centre), filter_normalize(arch, d2, centre)


def loss_grid(
    arch: mlp.MLPArch,
    centre: np.ndarray,
    batches: list[mlp.Batch],
    grid: GridSpec,
    directions: tuple[np.ndarray, np.ndarray],
) -> list[np.ndarray]:
    """One ``(steps_a, steps_b)`` array of losses per batch (client)."""
    total = grid.size * len(batches)
    if total > MAX_EVALUATIONS:
        raise ValueError(f"grid needs {total} loss evaluations, limit is {MAX_EVALUATIONS}")
    d1, d2 = directions
    a_vals, b_vals = grid.coords(grid.steps_a), grid.coords(grid.steps_b)
    out = [np.empty((grid.steps_a, grid.steps_b)) for _ in batches]
    for i, a in enumerate(a_vals):
        for j, b in enumerate(b_vals):
            point = centre + a * d1 + b * d2
            for grid_out, batch in zip(out, batches):
                grid_out[i, j] = mlp.forward_loss(arch, point, batch)
    return out


def grid_rows(grid: GridSpec, values: np.ndarray):
    a_vals, b_vals = grid.coords(grid.steps_a), grid.coords(grid.steps_b)
    for i, a in enumerate(a_vals):
        for j, b in enumerate(b_vals):
            yield (float(a), float(b), float(values[i, j]))
