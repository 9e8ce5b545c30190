from __future__ import annotations

import numpy as np
import pytest

from harmofl import model as mlp
from harmofl.landscape import MAX_EVALUATIONS, GridSpec, filter_normalize, loss_grid, random_directions


def _problem(hidden=(5,), seed=0):
    rng = np.random.default_rng(seed)
    arch = mlp.MLPArch(6, hidden, 2)
    batches = [mlp.Batch(rng.standard_normal((30, 6)), rng.integers(0, 2, 30)) for _ in range(2)]
    return arch, mlp.init_params(arch, seed), batches


def test_single_point_grid_is_the_centre_loss():
    arch, theta, batches = _problem()
    dirs = random_directions(arch, theta, 1)
    grids = loss_grid(arch, theta, batches, GridSpec(1, 1, 2.0), dirs)
    for g, b in zip(grids, batches):
        assert g.shape == (1, 1)
        assert g[0, 0] == mlp.forward_loss(arch, theta, b)


def test_grid_matches_direct_evaluation():
    arch, theta, batches = _problem()
    grid = GridSpec(7, 5, 0.8)
    d1, d2 = random_directions(arch, theta, 2)
    grids = loss_grid(arch, theta, batches, grid, (d1, d2))
    a, b = grid.coords(7), grid.coords(5)
    for i, j in [(0, 0), (6, 4), (3, 2), (1, 3), (5, 0)]:
        for g, batch in zip(grids, batches):
            direct = mlp.forward_loss(arch, theta + a[i] * d1 + b[j] * d2, batch)
            assert g[i, j] == pytest.approx(direct, rel=1e-14, abs=0)


def test_directions_are_filter_normalized():
    arch, theta, _ = _problem((4,))
    d1, d2 = random_directions(arch, theta, 0)
    for d in (d1, d2):
        for (w, bias), (w0, _) in zip(arch.unpack(d), arch.unpack(theta)):
            assert np.allclose(np.linalg.norm(w, axis=0), np.linalg.norm(w0, axis=0), rtol=1e-12)
            assert not bias.any()
    assert random_directions(arch, theta, 0)[0].tolist() == d1.tolist()


def test_zero_columns_stay_zero():
    arch = mlp.MLPArch(3, (), 2)
    centre = np.zeros(arch.num_params)
    d = filter_normalize(arch, np.ones(arch.num_params), centre)
    assert not d.any()


def test_oversized_grid_refused():
    arch, theta, batches = _problem()
    side = int(np.sqrt(MAX_EVALUATIONS // len(batches))) + 1
    with pytest.raises(ValueError, match="limit"):
        loss_grid(arch, theta, batches, GridSpec(side, side), random_directions(arch, theta, 0))


def test_convex_model_has_minimum_at_centre_after_convergence():
    # overlapping classes keep the logistic optimum finite
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 80)
    x = rng.standard_normal((80, 3)) + 0.7 * y[:, None]
    arch = mlp.MLPArch(3, (), 2)
    batch = mlp.Batch(x, y)
    theta = np.zeros(arch.num_params)
    for _ in range(5000):
        _, g = mlp.backward(arch, theta, batch)
        theta = theta - 0.5 * g
    assert np.linalg.norm(mlp.backward(arch, theta, batch)[1]) < 1e-9
    grid = GridSpec(11, 11, 0.5)
    (values,) = loss_grid(arch, theta, [batch], grid, random_directions(arch, theta, 3))
    assert np.unravel_index(np.argmin(values), values.shape) == (5, 5)
