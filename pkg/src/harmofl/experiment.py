"""Seed sweeps, ablation matrices and drift verification on top of ``federation``."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, serialize
from .drift import (
    BoundInput,
    DriftConstants,
    estimate_constants,
    reference_minimum,
    resolve_f_star,
    round_bound,
)
from .federation import Algorithm, Federation, RoundRecord, _training_amplitude
from .persist import Checkpoint, save_checkpoint, write_csv, write_json, write_metrics_csv
from .synthdata import ClientDataset, generate_clients

log = logging.getLogger(__name__)

VARIANTS = (Algorithm.FEDAVG, Algorithm.FEDAVG_AMPNORM, Algorithm.HARMOFL)


@dataclass
class DriftReport:
    convex: bool
    constants: DriftConstants
    bound_input: BoundInput
    bounds: list[float]
    gammas: list[float]
    f_star: float | None = None
    reference_f_star: float | None = None
    reference_grad_norm: float | None = None

    @property
    def holds(self) -> bool:
        return all(g <= b for g, b in zip(self.gammas, self.bounds))

    def to_json(self) -> dict:
        return {
            "convex": self.convex,
            "holds": self.holds,
            "constants": asdict(self.constants),
            "eta_tilde": self.bound_input.eta_tilde,
            "K": self.bound_input.K,
            "N": self.bound_input.N,
            "f_star": self.f_star,
            "reference_f_star": self.reference_f_star,
            "reference_grad_norm": self.reference_grad_norm,
        }


@dataclass
class SeedRun:
    seed: int
    algorithm: Algorithm
    federation: Federation = field(repr=False)
    records: list[RoundRecord] = field(repr=False)
    drift: DriftReport | None = None

    @property
    def final_accuracy(self) -> np.ndarray:
        return self.records[-1].eval_accuracy

    @property
    def mean_gamma(self) -> float:
        return float(np.mean([r.gamma for r in self.records]))


def train_features(fed: Federation) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Each client's full training split as the model sees it after the last round."""
    feats, labels = [], []
    for c in fed.clients:
        amp = None
        if fed.cfg.algorithm.uses_ampnorm:
            amp = _training_amplitude(c.amp_state, fed.global_amp)
        idx = c.dataset.train_idx
        feats.append(c.features(idx, amp))
        labels.append(c.dataset.labels[idx])
    return feats, labels


def verify_drift(fed: Federation, records: list[RoundRecord], reference_steps: int = 10_000) -> DriftReport:
    history = [r.round_gradients() for r in records]
    cfg = fed.cfg
    convex = fed.arch.convex
    b = BoundInput.from_rates(cfg.steps_per_round, cfg.eta_l, cfg.eta_g, cfg.num_clients, convex)
    ref = ref_grad = f_star = None
    if convex:
        feats, labels = train_features(fed)
        ref, ref_grad = reference_minimum(feats, labels, fed.weights, fed.arch.num_classes, steps=reference_steps)
        f_star = resolve_f_star(ref, history)
    constants = estimate_constants(history, f_star=f_star)
    bounds = [round_bound(constants, h, b, f_star) for h in history]
    return DriftReport(convex, constants, b, bounds, [r.gamma for r in records], f_star, ref, ref_grad)


def execute(cfg: ExperimentConfig, seed: int, algorithm: Algorithm | str | None = None,
            datasets: list[ClientDataset] | None = None) -> SeedRun:
    fcfg = cfg.fed_config(seed, algorithm)
    if datasets is None:
        datasets = generate_clients(cfg.data, seed)
    fed = Federation.create(fcfg, datasets)
    records = []
    for _ in range(fcfg.rounds):
        records.append(fed.step(workers=cfg.workers, record_gradients=cfg.drift_verification))
        log.info("seed %d %s round %d: acc %.4f gamma %.3e", seed, fcfg.algorithm.value,
                 records[-1].round, records[-1].mean_accuracy, records[-1].gamma)
    drift = verify_drift(fed, records) if cfg.drift_verification else None
    return SeedRun(seed, fcfg.algorithm, fed, records, drift)


def metric_rows(run: SeedRun) -> list[dict]:
    rows = []
    for i, r in enumerate(run.records):
        rows.append({
            "seed": run.seed,
            "round": r.round,
            "algorithm": run.algorithm.value,
            "mean_accuracy": r.mean_accuracy,
            "std_accuracy": float(np.std(r.eval_accuracy)),
            "mean_train_loss": r.mean_train_loss,
            "mean_eval_loss": float(np.mean(r.eval_loss)),
            "gamma": r.gamma,
            "max_gamma_i": float(np.max(r.gamma_i)),
            "bound": run.drift.bounds[i] if run.drift else None,
        })
    return rows


def metrics_document(cfg: ExperimentConfig, runs: list[SeedRun]) -> dict:
    out_runs = []
    for run in runs:
        rounds = []
        for row, r in zip(metric_rows(run), run.records):
            rounds.append({
                **{k: v for k, v in row.items() if k not in ("seed", "algorithm")},
                "accuracy": r.eval_accuracy,
                "train_loss": r.train_loss,
                "eval_loss": r.eval_loss,
                "gamma_i": r.gamma_i,
            })
        out_runs.append({
            "seed": run.seed,
            "algorithm": run.algorithm.value,
            "rounds": rounds,
            "drift": run.drift.to_json() if run.drift else None,
        })
    return {"config_sha256": cfg.digest(), "runs": out_runs}


def write_checkpoint(out_dir: Path, cfg: ExperimentConfig, run: SeedRun, stem: str) -> Path:
    fed = run.federation
    amp = fed.global_amp.avg if fed.global_amp is not None else None
    path = out_dir / f"{stem}.ckpt"
    save_checkpoint(path, Checkpoint(fed.arch, fed.params, amp), {
        "config_sha256": cfg.digest(),
        "seed": run.seed,
        "algorithm": run.algorithm.value,
        "round": fed.round,
        "num_params": fed.arch.num_params,
    })
    return path


def run_experiment(cfg: ExperimentConfig) -> list[SeedRun]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [execute(cfg, seed) for seed in cfg.seeds]
    (out / "config.ini").write_text(serialize(cfg))
    write_json(out / "metrics.json", metrics_document(cfg, runs))
    write_metrics_csv(out / "metrics.csv", [row for run in runs for row in metric_rows(run)])
    for run in runs:
        write_checkpoint(out, cfg, run, f"checkpoint_seed{run.seed}")
    return runs


def run_ablation(cfg: ExperimentConfig) -> dict[Algorithm, list[SeedRun]]:
    """All three variants on each seed's datasets; writes ablation.csv / ablation.json."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: dict[Algorithm, list[SeedRun]] = {v: [] for v in VARIANTS}
    for seed in cfg.seeds:
        datasets = generate_clients(cfg.data, seed)
        for variant in VARIANTS:
            results[variant].append(execute(cfg, seed, variant, datasets))

    n = cfg.fed.num_clients
    header = ["variant", "seed", *[f"client_{i}" for i in range(n)], "avg"]
    rows = []
    summary = {}
    for variant, runs in results.items():
        accs = np.array([r.final_accuracy for r in runs])
        for r, acc in zip(runs, accs):
            rows.append([variant.value, r.seed, *acc.tolist(), float(acc.mean())])
        mean = accs.mean(axis=0)
        rows.append([variant.value, "mean", *mean.tolist(), float(mean.mean())])
        summary[variant.value] = {
            "seeds": [r.seed for r in runs],
            "final_accuracy": [float(a.mean()) for a in accs],
            "mean_accuracy": float(accs.mean()),
            "mean_gamma": [r.mean_gamma for r in runs],
            "seed_mean_gamma": float(np.mean([r.mean_gamma for r in runs])),
        }
    write_csv(out / "ablation.csv", header, rows)
    write_json(out / "ablation.json", {"config_sha256": cfg.digest(), "variants": summary})
    write_metrics_csv(out / "metrics.csv", [row for runs in results.values() for r in runs for row in metric_rows(r)])
    return results
