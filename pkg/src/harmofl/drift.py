"""Client drift: the empirical measure, the theoretical bound, and its constants.

The empirical drift of a round is the mean, over clients and local steps, of
the squared distance between each client iterate and that round's global
model. The bound controls it through the effective step size
``eta_tilde = K * eta_g * eta_l`` and the smoothness / dissimilarity /
variance constants in :class:`DriftConstants`.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DriftConstants:
    beta: float = 0.0
    G: float = 0.0
    B: float = 1.0
    sigma: float = 0.0
    epsilon: float = 0.0
    f_gap: float = 0.0
    grad_norm: float = 0.0

    def __post_init__(self):
        if self.B < 1.0:
            raise ValueError(f"B must be at least 1, got {self.B}")
        for name in ("beta", "G", "sigma", "epsilon", "f_gap", "grad_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def with_point(self, *, f_gap: float | None = None, grad_norm: float | None = None) -> "DriftConstants":
        d = asdict(self)
        if f_gap is not None:
            d["f_gap"] = max(0.0, f_gap)
        if grad_norm is not None:
            d["grad_norm"] = grad_norm
        return DriftConstants(**d)


@dataclass(frozen=True)
class BoundInput:
    eta_tilde: float
    eta_g: float
    K: int
    N: int
    convex: bool

    def __post_init__(self):
        if self.eta_tilde < 0 or self.eta_g <= 0 or self.K < 1 or self.N < 1:
            raise ValueError("invalid bound input")

    @classmethod
    def from_rates(cls, K: int, eta_l: float, eta_g: float, N: int, convex: bool) -> "BoundInput":
        return cls(K * eta_g * eta_l, eta_g, K, N, convex)


def empirical_gamma(record) -> tuple[float, np.ndarray]:
    """Overall and per-client drift from an ``(N, K)`` table of squared distances.

    Accepts the table itself or any object exposing it as ``sq_dists``.
    """
    table = np.asarray(getattr(record, "sq_dists", record), dtype=np.float64)
    if table.ndim != 2 or table.shape[1] == 0:
        raise ValueError(f"expected an (N, K) snapshot table, got shape {table.shape}")
    if not np.all(np.isfinite(table)):
        raise ValueError("snapshot table is incomplete")
    gamma_i = table.mean(axis=1)
    return float(gamma_i.mean()), gamma_i


def theoretical_bound(c: DriftConstants, b: BoundInput) -> float:
    scale = b.eta_tilde**2 / b.eta_g**2
    heterogeneity = 4.0 * scale * c.epsilon**2 * (b.N - 1) ** 2 / b.N**2
    noise = 2.0 * scale * c.sigma**2 / b.K
    if b.convex:
        return (
            4.0 * scale * c.G**2
            + heterogeneity
            + noise
            + 8.0 * c.beta * scale * c.B**2 * c.f_gap
        )
    return 4.0 * scale * (c.G**2 + c.B**2 * c.grad_norm**2) + heterogeneity + noise


@dataclass(frozen=True)
class GradientRecord:
    """Full-batch quantities of one client objective, recorded during a round."""

    loss: float  # F_i at the round's global model
    grad: np.ndarray  # grad F_i at the global model
    grad_end: np.ndarray  # grad F_i at the client's final iterate
    step_sq: float  # squared distance from global model to final iterate
    minibatch_var: float  # E||minibatch grad - grad F_i||^2 at the global model


@dataclass(frozen=True)
class RoundGradients:
    """Per-round inputs to constant estimation, extracted from a RoundRecord."""

    params: np.ndarray
    weights: np.ndarray
    clients: Sequence[GradientRecord]

    @property
    def global_loss(self) -> float:
        return float(sum(p * g.loss for p, g in zip(self.weights, self.clients)))

    @property
    def global_grad(self) -> np.ndarray:
        return sum(p * g.grad for p, g in zip(self.weights, self.clients))


def estimate_constants(
    history: Sequence[RoundGradients], *, f_star: float | None = None
) -> DriftConstants:
    """Smallest constants consistent with every recorded round.

    ``B`` is fixed to 1 so all dissimilarity goes into ``G``. When ``f_star``
    is given (convex models) ``G`` also covers the convex form of the
    dissimilarity assumption, which trades ``||grad F||^2`` for
    ``2 beta (F - F*)``; it must not exceed any recorded global loss (see
    :func:`resolve_f_star`).
    """
    if not history:
        raise ValueError("no gradient records to estimate from")
    for r in history:
        if r.clients is None or len(r.clients) == 0:
            raise ValueError("round is missing its gradient records")

    eps = 0.0
    sigma_sq = 0.0
    beta = 0.0
    for r in history:
        grads = [g.grad for g in r.clients]
        for gi, gj in itertools.combinations(grads, 2):
            eps = max(eps, float(np.linalg.norm(gi - gj)))
        for g in r.clients:
            sigma_sq = max(sigma_sq, g.minibatch_var)
            if g.step_sq > 0:
                beta = max(beta, float(np.linalg.norm(g.grad_end - g.grad) / np.sqrt(g.step_sq)))
    for r1, r2 in itertools.combinations(history, 2):
        dtheta = float(np.linalg.norm(r1.params - r2.params))
        if dtheta > 0:
            beta = max(beta, float(np.linalg.norm(r1.global_grad - r2.global_grad)) / dtheta)

    g_sq = 0.0
    for r in history:
        mean_sq = float(np.mean([np.dot(g.grad, g.grad) for g in r.clients]))
        gf = r.global_grad
        g_sq = max(g_sq, mean_sq - float(np.dot(gf, gf)))
        if f_star is not None:
            g_sq = max(g_sq, mean_sq - 2.0 * beta * (r.global_loss - f_star))

    return DriftConstants(
        beta=float(beta),
        G=float(np.sqrt(max(0.0, g_sq))),
        B=1.0,
        sigma=float(np.sqrt(sigma_sq)),
        epsilon=eps,
        f_gap=0.0 if f_star is None else max(0.0, history[0].global_loss - f_star),
        grad_norm=float(np.linalg.norm(history[0].global_grad)),
    )


def resolve_f_star(reference: float, history: Sequence[RoundGradients]) -> float:
    """Lower of the reference optimum and every recorded global loss."""
    return min(reference, min(r.global_loss for r in history))


def assumption_holds(c: DriftConstants, r: RoundGradients, *, f_star: float | None = None,
                     rtol: float = 1e-12) -> bool:
    """Check bounded gradient dissimilarity at one recorded point."""
    mean_sq = float(np.mean([np.dot(g.grad, g.grad) for g in r.clients]))
    gf = r.global_grad
    if f_star is None:
        rhs = c.G**2 + c.B**2 * float(np.dot(gf, gf))
    else:
        rhs = c.G**2 + 2.0 * c.beta * c.B**2 * (r.global_loss - f_star)
    return mean_sq <= rhs * (1 + rtol) + rtol


def round_bound(c: DriftConstants, r: RoundGradients, b: BoundInput,
                f_star: float | None = None) -> float:
    """Bound evaluated at the global model of round ``r``."""
    if b.convex:
        if f_star is None:
            raise ValueError("convex bound needs f_star")
        point = c.with_point(f_gap=r.global_loss - f_star)
    else:
        point = c.with_point(grad_norm=float(np.linalg.norm(r.global_grad)))
    return theoretical_bound(point, b)


# Inequality predicates used as property-test oracles.

def lemma_triangle_check(a: np.ndarray, b: np.ndarray, gamma: float, rtol: float = 1e-12) -> bool:
    """||a + b||^2 <= (1 + gamma)||a||^2 + (1 + 1/gamma)||b||^2."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lhs = float(np.dot(a + b, a + b))
    rhs = (1 + gamma) * float(np.dot(a, a)) + (1 + 1 / gamma) * float(np.dot(b, b))
    return lhs <= rhs * (1 + rtol) + 1e-300


def lemma_sum_check(vectors: np.ndarray, rtol: float = 1e-12) -> bool:
    """||sum a_i||^2 <= n * sum ||a_i||^2."""
    v = np.asarray(vectors, dtype=np.float64)
    s = v.sum(axis=0)
    lhs = float(np.dot(s, s))
    rhs = v.shape[0] * float(np.sum(v * v))
    return lhs <= rhs * (1 + rtol) + 1e-300


def lemma_mean_variance_check(samples: np.ndarray, sigma: float, means: np.ndarray | None = None) -> bool:
    """Monte-Carlo check of E||sum X_i||^2 <= ||sum xi_i||^2 + n^2 sigma^2.

    ``samples`` has shape ``(draws, n, d)``: each draw is one realisation of
    the n random vectors. ``means`` defaults to the empirical means. Slack is
    three standard errors of the Monte-Carlo estimate of the left side.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("samples must have shape (draws, n, d)")
    draws, n, _ = x.shape
    xi = x.mean(axis=0) if means is None else np.asarray(means, dtype=np.float64)
    sums = x.sum(axis=1)
    sq = np.einsum("ij,ij->i", sums, sums)
    lhs = float(sq.mean())
    slack = 3.0 * float(sq.std(ddof=1)) / np.sqrt(draws) if draws > 1 else 0.0
    s = xi.sum(axis=0)
    rhs = float(np.dot(s, s)) + n**2 * sigma**2
    return lhs <= rhs + slack + 1e-12 * max(1.0, abs(rhs))


def reference_minimum(
    features: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    weights: Sequence[float],
    num_classes: int,
    steps: int = 10_000,
) -> tuple[float, float]:
    """Approximate ``F* = min sum_i p_i F_i`` for the convex (logistic) model.

    Runs full-batch gradient descent from zero with step ``1/L``. The weight
    matrix stays in the row space of the pooled data, ``W = X^T A``, so each
    step only touches the ``n x n`` Gram matrix. Returns the lowest objective
    seen and the gradient norm at the last iterate (the achieved tolerance).
    """
    x = np.concatenate([np.asarray(f, dtype=np.float64) for f in features])
    y = np.concatenate([np.asarray(lab, dtype=np.intp) for lab in labels])
    w = np.concatenate([np.full(len(lab), p / len(lab)) for p, lab in zip(weights, labels)])
    n = x.shape[0]
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0

    gram = x @ x.T
    sw = np.sqrt(w)
    # softmax cross-entropy Hessian is bounded by 1/2 * (weighted design Gram)
    lipschitz = 0.5 * float(np.linalg.eigvalsh((gram + 1.0) * np.outer(sw, sw))[-1])
    lr = 1.0 / lipschitz

    a = np.zeros((n, num_classes))
    b = np.zeros(num_classes)
    best = np.inf
    grad_norm = np.inf
    for _ in range(steps + 1):
        z = gram @ a + b
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = float(-(w * logp[np.arange(n), y]).sum())
        best = min(best, loss)
        r = w[:, None] * (np.exp(logp) - onehot)
        grad_b = r.sum(axis=0)
        # ||X^T r||_F^2 = tr(r^T K r)
        grad_norm = float(np.sqrt(np.einsum("ij,ij->", r, gram @ r) + grad_b @ grad_b))
        a -= lr * r
        b -= lr * grad_b
    return best, grad_norm
