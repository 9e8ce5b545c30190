from __future__ import annotations

from functools import partial

import numpy as np
import pytest

from harmofl import model as mlp
from harmofl.perturb import PerturbConfig, harmofl_step, perturbation, sgd_step


def half_square(params, batch=None):
    """l(theta) = 0.5 * ||theta||^2."""
    return 0.5 * float(params @ params), params.copy()


def quadratic(a: np.ndarray, b: np.ndarray):
    def objective(params, batch=None):
        r = a @ params - b
        return 0.5 * float(r @ r), a.T @ r

    return objective


def test_three_four_five_perturbation():
    delta = perturbation(np.array([3.0, 4.0]), PerturbConfig(alpha=0.05))
    np.testing.assert_allclose(delta, [0.03, 0.04], rtol=1e-15)
    assert np.linalg.norm(delta) == pytest.approx(0.05, abs=1e-15)


def test_zero_alpha_and_tiny_gradient_give_zero():
    np.testing.assert_array_equal(perturbation(np.array([3.0, 4.0]), PerturbConfig(alpha=0.0)), 0.0)
    np.testing.assert_array_equal(perturbation(np.array([1e-13, 0.0]), PerturbConfig()), 0.0)


def test_perturbation_rejects_non_finite():
    with pytest.raises(ValueError):
        perturbation(np.array([np.nan, 1.0]), PerturbConfig())
    with pytest.raises(ValueError):
        PerturbConfig(alpha=-1.0)


def test_perturbation_norm_is_alpha(rng):
    for _ in range(200):
        g = rng.normal(size=int(rng.integers(1, 50))) * 10.0 ** rng.uniform(-6, 6)
        alpha = float(rng.uniform(0, 2))
        assert abs(np.linalg.norm(perturbation(g, PerturbConfig(alpha))) - alpha) < 1e-12


def test_one_dimensional_quadratic_step():
    theta, tel = harmofl_step(np.array([1.0]), None, 0.1, PerturbConfig(alpha=0.05), half_square)
    # g1 = 1, delta = 0.05, g_delta = 1.05, theta' = 1 - 0.1 * 1.05
    assert theta.item() == pytest.approx(0.895, abs=1e-15)
    assert tel.grad_norm == 1.0
    assert tel.perturbed_grad_norm == pytest.approx(1.05)


def test_zero_alpha_is_bitwise_sgd(rng):
    arch = mlp.MLPArch(5, (4,), 3)
    params = mlp.init_params(arch, 1)
    batch = mlp.Batch(rng.normal(size=(6, 5)), rng.integers(0, 3, 6))
    obj = partial(mlp.backward, arch)
    a, _ = harmofl_step(params, batch, 0.3, PerturbConfig(alpha=0.0), obj)
    b, _ = sgd_step(params, batch, 0.3, obj)
    assert a.tobytes() == b.tobytes()
    expected = params - 0.3 * mlp.backward(arch, params, batch)[1]
    assert a.tobytes() == expected.tobytes()


def test_stationary_point_is_fixed():
    theta = np.zeros(3)
    out, _ = harmofl_step(theta, None, 0.5, PerturbConfig(), half_square)
    np.testing.assert_array_equal(out, theta)


def test_descent_on_convex_quadratics(rng):
    for _ in range(100):
        d = int(rng.integers(1, 6))
        a = rng.normal(size=(d + 2, d))
        obj = quadratic(a, rng.normal(size=d + 2))
        lipschitz = np.linalg.eigvalsh(a.T @ a)[-1]
        theta = rng.normal(size=d) * 3
        loss0 = obj(theta)[0]
        out, _ = harmofl_step(theta, None, 0.5 / lipschitz, PerturbConfig(alpha=0.05), obj)
        assert obj(out)[0] <= loss0 + 1e-12


def test_step_has_no_hidden_state(rng):
    arch = mlp.MLPArch(4, (3,), 2)
    params = mlp.init_params(arch, 2)
    batch = mlp.Batch(rng.normal(size=(5, 4)), rng.integers(0, 2, 5))
    obj = partial(mlp.backward, arch)
    cfg = PerturbConfig(alpha=0.05)
    a, _ = harmofl_step(params, batch, 0.1, cfg, obj)
    b, _ = harmofl_step(params, batch, 0.1, cfg, obj)
    assert a.tobytes() == b.tobytes()
