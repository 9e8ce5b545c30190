"""Round-synchronous federated training: FedAvg, FedAvg+AmpNorm and HarmoFL."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Sequence

import numpy as np

from . import model as mlp
from .drift import GradientRecord, RoundGradients, empirical_gamma
from .fourier import decompose, dft2
from .harmonize import (
    AmplitudeState,
    GlobalAmplitude,
    aggregate_amplitudes,
    harmonize_phases,
    update_average,
)
from .perturb import PerturbConfig, StepTelemetry, harmofl_step, sgd_step
from .synthdata import ClientDataset

log = logging.getLogger(__name__)


class Algorithm(str, Enum):
    FEDAVG = "fedavg"
    FEDAVG_AMPNORM = "fedavg_ampnorm"
    HARMOFL = "harmofl"

    @property
    def uses_ampnorm(self) -> bool:
        return self is not Algorithm.FEDAVG

    @property
    def uses_perturbation(self) -> bool:
        return self is Algorithm.HARMOFL


class NumericalError(RuntimeError):
    def __init__(self, message: str, round: int, client: int):
        super().__init__(f"round {round}, client {client}: {message}")
        self.round = round
        self.client = client


@dataclass(frozen=True)
class FedConfig:
    rounds: int
    num_clients: int
    local_steps: int
    batch_size: int = 32
    eta_l: float = 0.3
    eta_g: float = 1.0
    alpha: float = 5e-2
    decay_v: float = 0.1
    amp_share_rounds: int = 1
    # "uniform", "proportional" (to train split size) or explicit weights
    client_weights: str | tuple[float, ...] = "uniform"
    algorithm: Algorithm = Algorithm.HARMOFL
    seed: int = 0
    local_epochs: int = 1
    # empty means multinomial logistic regression (the convex case)
    hidden_dims: tuple[int, ...] = ()
    grad_floor: float = 1e-12
    # model input is feature_scale * (pixel - feature_offset); None means 1/sqrt(H*W*C)
    feature_scale: float | None = 0.0625
    feature_offset: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        for name in ("rounds", "num_clients", "local_steps", "batch_size", "local_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.eta_l <= 0 or self.eta_g <= 0:
            raise ValueError("learning rates must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0.0 <= self.decay_v <= 1.0:
            raise ValueError("decay_v must lie in [0, 1]")
        if self.feature_scale is not None and not self.feature_scale > 0:
            raise ValueError("feature_scale must be positive")
        if self.amp_share_rounds < 0:
            raise ValueError("amp_share_rounds must be nonnegative")
        if isinstance(self.client_weights, str):
            if self.client_weights not in ("uniform", "proportional"):
                raise ValueError(f"unknown client_weights {self.client_weights!r}")
        else:
            w = tuple(float(p) for p in self.client_weights)
            if len(w) != self.num_clients:
                raise ValueError(f"{len(w)} client weights for {self.num_clients} clients")
            if any(p < 0 for p in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ValueError("client weights must be nonnegative and sum to 1")
            object.__setattr__(self, "client_weights", w)
        if not self.algorithm.uses_perturbation:
            object.__setattr__(self, "alpha", 0.0)

    @property
    def steps_per_round(self) -> int:
        return self.local_steps * self.local_epochs

    def resolved_feature_scale(self, image_shape: tuple[int, ...]) -> float:
        if self.feature_scale is not None:
            return float(self.feature_scale)
        return 1.0 / float(np.sqrt(np.prod(image_shape)))

    @property
    def perturb(self) -> PerturbConfig:
        return PerturbConfig(self.alpha, self.grad_floor)

    def weights(self, datasets: Sequence[ClientDataset]) -> np.ndarray:
        if self.client_weights == "uniform":
            return np.full(self.num_clients, 1.0 / self.num_clients)
        if self.client_weights == "proportional":
            sizes = np.array([len(d.train_idx) for d in datasets], dtype=np.float64)
            return sizes / sizes.sum()
        return np.array(self.client_weights)


@dataclass
class ClientState:
    client_id: int
    dataset: ClientDataset
    amp_state: AmplitudeState
    amplitudes: np.ndarray = field(repr=False)  # per-image amplitude spectra
    phases: np.ndarray = field(repr=False)
    feature_scale: float = 1.0
    feature_offset: float = 0.0

    @classmethod
    def create(cls, dataset: ClientDataset, decay: float, feature_scale: float = 1.0,
               feature_offset: float = 0.0) -> "ClientState":
        amp, phase = decompose(dft2(dataset.images))
        return cls(
            dataset.client_id,
            dataset,
            AmplitudeState.empty(dataset.image_shape, decay),
            amp,
            phase,
            feature_scale,
            feature_offset,
        )

    def features(self, idx: np.ndarray, amplitude: np.ndarray | None) -> np.ndarray:
        """Flattened images, harmonized to ``amplitude`` when one is given."""
        if amplitude is None:
            x = self.dataset.images[idx]
        else:
            x = harmonize_phases(amplitude, self.phases[idx])
        x = x.reshape(len(idx), -1)
        if self.feature_offset != 0.0:
            x = x - self.feature_offset
        return x if self.feature_scale == 1.0 else x * self.feature_scale

    def batch(self, idx: np.ndarray, amplitude: np.ndarray | None) -> mlp.Batch:
        return mlp.Batch(self.features(idx, amplitude), self.dataset.labels[idx])


def rng_stream(seed: int, client_id: int, round: int) -> np.random.Generator:
    return np.random.default_rng([seed, client_id, round])


@dataclass
class ClientResult:
    final_params: np.ndarray
    amp_state: AmplitudeState
    sq_dists: list[float]
    telemetry: list[StepTelemetry]
    gradients: GradientRecord | None = None
    snapshots: list[np.ndarray] | None = None

    @property
    def train_loss(self) -> float:
        return float(np.mean([t.loss for t in self.telemetry]))


@dataclass
class RoundRecord:
    round: int
    global_params_before: np.ndarray
    global_params_after: np.ndarray
    sq_dists: np.ndarray  # (N, K * local_epochs)
    train_loss: np.ndarray
    eval_accuracy: np.ndarray
    eval_loss: np.ndarray
    gamma: float
    gamma_i: np.ndarray
    weights: np.ndarray
    global_amp: GlobalAmplitude | None = None
    gradients: list[GradientRecord] | None = None
    snapshots: list[list[np.ndarray]] | None = None

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.eval_accuracy))

    @property
    def mean_train_loss(self) -> float:
        return float(np.mean(self.train_loss))

    def round_gradients(self) -> RoundGradients:
        if self.gradients is None:
            raise ValueError(f"round {self.round} has no gradient records")
        return RoundGradients(self.global_params_before, self.weights, self.gradients)


def _training_amplitude(amp_state: AmplitudeState, global_amp: GlobalAmplitude | None) -> np.ndarray:
    if global_amp is not None and global_amp.frozen:
        return global_amp.avg
    return amp_state.avg


def eval_amplitude(client: ClientState, global_amp: GlobalAmplitude | None,
                   cfg: FedConfig) -> np.ndarray | None:
    """Amplitude used to harmonize evaluation images (None: raw images)."""
    if not cfg.algorithm.uses_ampnorm:
        return None
    if global_amp is not None:
        return global_amp.avg
    if client.amp_state.batches_seen > 0:
        return client.amp_state.avg
    return None


def _record_gradients(
    arch: mlp.MLPArch,
    client: ClientState,
    amplitude: np.ndarray | None,
    theta: np.ndarray,
    final: np.ndarray,
    batch_size: int,
) -> GradientRecord:
    idx = client.dataset.train_idx
    full = client.batch(idx, amplitude)
    loss, grad = mlp.backward(arch, theta, full)
    _, grad_end = mlp.backward(arch, final, full)
    n = len(idx)
    m = min(batch_size, n)
    if m < n:
        # variance of a without-replacement minibatch mean of per-sample grads
        spread = mlp.per_sample_grad_sqnorms(arch, theta, full).mean() - float(grad @ grad)
        var = max(0.0, spread) * (n - m) / (m * (n - 1))
    else:
        var = 0.0
    return GradientRecord(loss, grad, grad_end, mlp.dist2(final, theta), var)


def client_update(
    client: ClientState,
    global_params: np.ndarray,
    global_amp: GlobalAmplitude | None,
    cfg: FedConfig,
    arch: mlp.MLPArch,
    round: int,
    *,
    record_gradients: bool = False,
    keep_snapshots: bool = False,
) -> ClientResult:
    """Run ``K * local_epochs`` local steps starting from the global model."""
    ds = client.dataset
    if len(ds.train_idx) == 0:
        raise ValueError(f"client {client.client_id} has no training data")
    rng = rng_stream(cfg.seed, client.client_id, round)
    objective = partial(mlp.backward, arch)
    theta = np.array(global_params, copy=True)
    amp_state = client.amp_state
    m = min(cfg.batch_size, len(ds.train_idx))
    sq_dists: list[float] = []
    telemetry: list[StepTelemetry] = []
    snapshots: list[np.ndarray] | None = [] if keep_snapshots else None

    for _ in range(cfg.steps_per_round):
        idx = rng.choice(ds.train_idx, size=m, replace=False)
        amplitude = None
        if cfg.algorithm.uses_ampnorm:
            amp_state = update_average(amp_state, client.amplitudes[idx])
            amplitude = _training_amplitude(amp_state, global_amp)
        batch = client.batch(idx, amplitude)
        if cfg.algorithm.uses_perturbation:
            theta, tel = harmofl_step(theta, batch, cfg.eta_l, cfg.perturb, objective)
        else:
            theta, tel = sgd_step(theta, batch, cfg.eta_l, objective)
        drift = mlp.dist2(theta, global_params)
        if not (np.all(np.isfinite(theta)) and np.isfinite(tel.loss) and np.isfinite(drift)):
            raise NumericalError("non-finite parameters, loss or drift", round, client.client_id)
        telemetry.append(tel)
        sq_dists.append(drift)
        if snapshots is not None:
            snapshots.append(theta.copy())

    client.amp_state = amp_state
    grads = None
    if record_gradients:
        amplitude = _training_amplitude(amp_state, global_amp) if cfg.algorithm.uses_ampnorm else None
        grads = _record_gradients(arch, client, amplitude, global_params, theta, cfg.batch_size)
    return ClientResult(theta, amp_state, sq_dists, telemetry, grads, snapshots)


def server_aggregate(
    global_params: np.ndarray,
    client_finals: Sequence[np.ndarray],
    weights: Sequence[float],
    eta_g: float,
) -> np.ndarray:
    """``theta + eta_g * sum_i p_i (theta_i - theta)``; plain FedAvg when ``eta_g == 1``."""
    if len(client_finals) != len(weights):
        raise ValueError(f"{len(client_finals)} client models for {len(weights)} weights")
    update = np.zeros_like(global_params)
    for p, final in zip(weights, client_finals):
        if final.shape != global_params.shape:
            raise ValueError("client model layout differs from the global model")
        update += p * (final - global_params)
    return global_params + eta_g * update


def evaluate(
    arch: mlp.MLPArch,
    params: np.ndarray,
    clients: Sequence[ClientState],
    global_amp: GlobalAmplitude | None,
    cfg: FedConfig,
) -> tuple[np.ndarray, np.ndarray]:
    acc = np.empty(len(clients))
    loss = np.empty(len(clients))
    for i, c in enumerate(clients):
        batch = c.batch(c.dataset.eval_idx, eval_amplitude(c, global_amp, cfg))
        acc[i] = mlp.accuracy(arch, params, batch)
        loss[i] = mlp.forward_loss(arch, params, batch)
    return acc, loss


def build_arch(cfg: FedConfig, datasets: Sequence[ClientDataset]) -> mlp.MLPArch:
    h, w, c = datasets[0].image_shape
    return mlp.MLPArch(h * w * c, cfg.hidden_dims, 2)


@dataclass
class Federation:
    """Mutable state of a run; ``step()`` advances one communication round."""

    cfg: FedConfig
    arch: mlp.MLPArch
    clients: list[ClientState]
    params: np.ndarray
    weights: np.ndarray
    global_amp: GlobalAmplitude | None = None
    round: int = 0

    @classmethod
    def create(cls, cfg: FedConfig, datasets: Sequence[ClientDataset]) -> "Federation":
        if len(datasets) != cfg.num_clients:
            raise ValueError(f"{len(datasets)} datasets for {cfg.num_clients} clients")
        arch = build_arch(cfg, datasets)
        scale = cfg.resolved_feature_scale(datasets[0].image_shape)
        clients = [ClientState.create(d, cfg.decay_v, scale, cfg.feature_offset) for d in datasets]
        return cls(cfg, arch, clients, mlp.init_params(arch, cfg.seed), cfg.weights(datasets))

    def step(self, *, workers: int = 1, record_gradients: bool = False,
             keep_snapshots: bool = False) -> RoundRecord:
        self.round += 1
        t = self.round
        theta = self.params
        run = partial(
            client_update,
            global_params=theta,
            global_amp=self.global_amp,
            cfg=self.cfg,
            arch=self.arch,
            round=t,
            record_gradients=record_gradients,
            keep_snapshots=keep_snapshots,
        )
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, self.clients))
        else:
            results = [run(c) for c in self.clients]

        self.params = server_aggregate(theta, [r.final_params for r in results], self.weights, self.cfg.eta_g)
        if not np.all(np.isfinite(self.params)):
            raise NumericalError("non-finite global parameters after aggregation", t, -1)
        if self.cfg.algorithm.uses_ampnorm and (self.global_amp is None or not self.global_amp.frozen):
            if t <= self.cfg.amp_share_rounds:
                self.global_amp = aggregate_amplitudes(
                    [r.amp_state for r in results], frozen=t >= self.cfg.amp_share_rounds
                )

        acc, eval_loss = evaluate(self.arch, self.params, self.clients, self.global_amp, self.cfg)
        sq = np.array([r.sq_dists for r in results])
        gamma, gamma_i = empirical_gamma(sq)
        log.debug("round %d: acc=%.4f gamma=%.3e", t, acc.mean(), gamma)
        return RoundRecord(
            round=t,
            global_params_before=theta,
            global_params_after=self.params,
            sq_dists=sq,
            train_loss=np.array([r.train_loss for r in results]),
            eval_accuracy=acc,
            eval_loss=eval_loss,
            gamma=gamma,
            gamma_i=gamma_i,
            weights=self.weights,
            global_amp=self.global_amp,
            gradients=[r.gradients for r in results] if record_gradients else None,
            snapshots=[r.snapshots for r in results] if keep_snapshots else None,
        )


def run_federation(
    cfg: FedConfig,
    datasets: Sequence[ClientDataset],
    *,
    workers: int = 1,
    record_gradients: bool = False,
    keep_snapshots: bool = False,
) -> list[RoundRecord]:
    """Run ``cfg.rounds`` rounds; deterministic for a fixed config and datasets."""
    fed = Federation.create(cfg, datasets)
    return [
        fed.step(workers=workers, record_gradients=record_gradients, keep_snapshots=keep_snapshots)
        for _ in range(cfg.rounds)
    ]

