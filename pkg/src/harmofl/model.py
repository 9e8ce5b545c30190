"""Small tanh MLP classifier over a flat parameter vector.

Parameter layout: for each layer, the weight matrix of shape
``(fan_in, fan_out)`` in row-major order followed by the bias vector.
With no hidden layers the model is multinomial logistic regression, which
keeps the objective convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MLPArch:
    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    num_classes: int = 2
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer dimensions must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)

    @property
    def convex(self) -> bool:
        return not self.hidden_dims

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` per layer into ``params``."""
        params = np.asarray(params)
        if params.shape != (self.num_params,):
            raise ValueError(
                f"parameter vector has shape {params.shape}, arch expects ({self.num_params},)"
            )
        layers = []
        pos = 0
        for fi, fo in self.layer_dims:
            w = params[pos : pos + fi * fo].reshape(fi, fo)
            pos += fi * fo
            b = params[pos : pos + fo]
            pos += fo
            layers.append((w, b))
        return layers

    def describe(self) -> str:
        hidden = "x".join(str(h) for h in self.hidden_dims) or "none"
        return f"MLP(in={self.input_dim}, hidden={hidden}, classes={self.num_classes})"


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.intp)
        if x.ndim != 2:
            raise ValueError(f"features must be a 2D matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError("label count does not match feature rows")
        if x.shape[0] < 1:
            raise ValueError("batch is empty")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]


def init_params(arch: MLPArch, seed: int) -> np.ndarray:
    """Glorot-uniform weights and zero biases from a Philox stream keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    chunks = []
    for fi, fo in arch.layer_dims:
        limit = np.sqrt(6.0 / (fi + fo))
        chunks.append(rng.uniform(-limit, limit, size=fi * fo))
        chunks.append(np.zeros(fo))
    return np.concatenate(chunks)


def _check(arch: MLPArch, batch: Batch) -> None:
    if batch.features.shape[1] != arch.input_dim:
        raise ValueError(
            f"feature dimension {batch.features.shape[1]} does not match arch input {arch.input_dim}"
        )
    if not np.all(np.isfinite(batch.features)):
        raise ValueError("features contain NaN or Inf")
    if batch.labels.min() < 0 or batch.labels.max() >= arch.num_classes:
        raise ValueError("labels out of range")


def _forward(arch: MLPArch, params: np.ndarray, x: np.ndarray):
    layers = arch.unpack(params)
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w + b)
        acts.append(a)
    w, b = layers[-1]
    return layers, acts, a @ w + b


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(arch: MLPArch, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    return _forward(arch, params, np.asarray(features, dtype=np.float64))[2]


def forward_loss(arch: MLPArch, params: np.ndarray, batch: Batch) -> float:
    """Mean softmax cross-entropy over the batch."""
    _check(arch, batch)
    z = _forward(arch, params, batch.features)[2]
    logp = _log_softmax(z)
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def _output_delta(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = np.exp(_log_softmax(z))
    p[np.arange(labels.shape[0]), labels] -= 1.0
    return p


def backward(arch: MLPArch, params: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient with respect to ``params``."""
    _check(arch, batch)
    layers, acts, z = _forward(arch, params, batch.features)
    m = len(batch)
    logp = _log_softmax(z)
    loss = float(-logp[np.arange(m), batch.labels].mean())

    delta = _output_delta(z, batch.labels) / m
    grads: list[np.ndarray] = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        a_prev = acts[li]
        grads.append(delta.sum(axis=0))
        grads.append((a_prev.T @ delta).ravel())
        if li > 0:
            delta = (delta @ w.T) * (1.0 - a_prev**2)
    grads.reverse()
    return loss, np.concatenate(grads)


def per_sample_grad_sqnorms(arch: MLPArch, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Squared norms of each sample's own loss gradient.

    Each layer's per-sample weight gradient is an outer product, so its
    squared Frobenius norm factors as ``|a|^2 |delta|^2``.
    """
    _check(arch, batch)
    layers, acts, z = _forward(arch, params, batch.features)
    delta = _output_delta(z, batch.labels)
    sq = np.zeros(len(batch))
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        a_prev = acts[li]
        d2 = np.einsum("ij,ij->i", delta, delta)
        sq += d2 * (np.einsum("ij,ij->i", a_prev, a_prev) + 1.0)
        if li > 0:
            delta = (delta @ w.T) * (1.0 - a_prev**2)
    return sq


def predict(arch: MLPArch, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    return logits(arch, params, features).argmax(axis=1)


def accuracy(arch: MLPArch, params: np.ndarray, batch: Batch) -> float:
    return float(np.mean(predict(arch, params, batch.features) == batch.labels))


def _same_layout(x: np.ndarray, y: np.ndarray) -> None:
    if np.shape(x) != np.shape(y):
        raise ValueError(f"parameter vectors differ in layout: {np.shape(x)} vs {np.shape(y)}")


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _same_layout(x, y)
    return a * np.asarray(x) + np.asarray(y)


def norm2(x: np.ndarray) -> float:
    return float(np.sqrt(np.dot(x, x)))


def dist2(x: np.ndarray, y: np.ndarray) -> float:
    """Squared Euclidean distance."""
    _same_layout(x, y)
    d = np.asarray(x) - np.asarray(y)
    return float(np.dot(d, d))
