"""Federated training experiments with amplitude normalization and weight perturbation.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load, serialize
from .experiment import run_ablation, run_experiment
from .federation import ClientState, NumericalError
from .landscape import GridSpec, grid_rows, loss_grid, random_directions
from .persist import FormatError, load_checkpoint, write_csv
from .synthdata import generate_clients

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _grid(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 21x21, got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harmofl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", type=Path)
        p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
        p.add_argument("--seed-override", type=_seed_list, metavar="SEEDS",
                       help="comma-separated seeds replacing the config's list")
        p.add_argument("--out-dir", type=Path, help="output directory replacing the config's")

    common(sub.add_parser("run", help="train every configured seed and write metrics (ablates if the config says so)"))
    common(sub.add_parser("ablate", help="fedavg / fedavg_ampnorm / harmofl on every seed"))
    land = sub.add_parser("export-landscape", help="loss grid around a checkpoint, one CSV per client")
    common(land)
    land.add_argument("--checkpoint", type=Path, required=True)
    land.add_argument("--grid", type=_grid, default=(21, 21), metavar="AxB")
    land.add_argument("--radius", type=float, default=1.0)
    land.add_argument("--direction-seed", type=int, default=0)
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load(args.config)
    if args.seed_override:
        cfg = cfg.with_seeds(args.seed_override)
    if args.out_dir is not None:
        cfg = cfg.with_output_dir(str(args.out_dir))
    return cfg


def export_landscape(cfg: ExperimentConfig, checkpoint: Path, grid: GridSpec, direction_seed: int = 0) -> list[Path]:
    ckpt, meta = load_checkpoint(checkpoint)
    seed = int(meta.get("seed", cfg.seeds[0]))
    datasets = generate_clients(cfg.data, seed)
    fcfg = cfg.fed_config(seed, meta.get("algorithm"))
    scale = fcfg.resolved_feature_scale(cfg.data.image_shape)
    if ckpt.arch.input_dim != int(np.prod(cfg.data.image_shape)):
        raise ConfigError("checkpoint input size does not match the configured images")
    batches = []
    for d in datasets:
        client = ClientState.create(d, fcfg.decay_v, scale, fcfg.feature_offset)
        batches.append(client.batch(d.train_idx, ckpt.amplitude))
    directions = random_directions(ckpt.arch, ckpt.params, direction_seed)
    grids = loss_grid(ckpt.arch, ckpt.params, batches, grid, directions)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for d, values in zip(datasets, grids):
        path = out / f"landscape_client{d.client_id}.csv"
        write_csv(path, ("a", "b", "loss"), grid_rows(grid, values))
        paths.append(path)
    return paths


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        if args.dry_run:
            sys.stdout.write(serialize(cfg))
            return EXIT_OK
        if args.command == "run" and not cfg.ablation:
            runs = run_experiment(cfg)
            for r in runs:
                print(f"seed {r.seed}: final mean accuracy {r.final_accuracy.mean():.4f}, mean gamma {r.mean_gamma:.4e}")
        elif args.command in ("run", "ablate"):
            results = run_ablation(cfg)
            for variant, runs in results.items():
                acc = np.mean([r.final_accuracy.mean() for r in runs])
                print(f"{variant.value:>15}: mean accuracy {acc:.4f}")
        else:
            grid = GridSpec(args.grid[0], args.grid[1], args.radius)
            for p in export_landscape(cfg, args.checkpoint, grid, args.direction_seed):
                print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # grid size refusal and similar request errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
