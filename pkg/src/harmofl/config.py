"""Experiment configuration: an INI file with four kinds of section.

``[experiment]`` run-level settings, ``[federation]`` training
hyperparameters, ``[data]`` the synthetic benchmark, and optional
``[client.N]`` sections with one appearance shift per client. Unknown
sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .federation import Algorithm, FedConfig
from .synthdata import DatasetSpec, ShiftProfile

REQUIRED_FEDERATION = ("rounds", "num_clients", "local_steps", "algorithm")
DEFAULT_SEEDS = (0, 1, 2)


class ConfigError(ValueError):
    def __init__(self, message: str, *, field: str | None = None, line: int | None = None,
                 source: str = "<config>"):
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")
        self.field = field
        self.line = line


def _fed_default(name: str):
    f = {x.name: x for x in dataclasses.fields(FedConfig)}[name]
    return f.default


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one invocation needs; ``fed_config`` builds the per-run FedConfig."""

    fed: FedConfig
    data: DatasetSpec
    output_dir: str = "runs"
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    ablation: bool = False
    drift_verification: bool = False
    workers: int = 1
    # the requested alpha; FedConfig zeroes it for variants without perturbation
    alpha: float = field(default=_fed_default("alpha"))

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty", field="seeds")
        if self.workers < 1:
            raise ConfigError("workers must be positive", field="workers")
        if self.data.num_clients != self.fed.num_clients:
            raise ConfigError("data and federation disagree on num_clients", field="num_clients")

    def fed_config(self, seed: int, algorithm: Algorithm | str | None = None) -> FedConfig:
        algorithm = self.fed.algorithm if algorithm is None else Algorithm(algorithm)
        return replace(self.fed, seed=seed, algorithm=algorithm, alpha=self.alpha)

    def with_seeds(self, seeds: tuple[int, ...]) -> "ExperimentConfig":
        return replace(self, seeds=tuple(seeds))

    def with_output_dir(self, path: str) -> "ExperimentConfig":
        return replace(self, output_dir=str(path))

    def digest(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        text = serialize(replace(self, output_dir=""))
        return hashlib.sha256(text.encode()).hexdigest()


# value codecs

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _weights(text: str):
    t = text.strip()
    return t if t in ("uniform", "proportional") else _float_list(t)


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() == "auto" else float(text)


def _bands(text: str) -> tuple[tuple[float, float, float], ...]:
    bands = []
    for item in text.replace(",", " ").split():
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"band gain must be lo:hi:gain, got {item!r}")
        bands.append(tuple(float(p) for p in parts))
    return tuple(bands)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Algorithm):
        return value.value
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


EXPERIMENT_KEYS = {
    "output_dir": str,
    "seeds": _int_list,
    "ablation": _bool,
    "drift_verification": _bool,
    "workers": int,
}

FEDERATION_KEYS = {
    "rounds": int,
    "num_clients": int,
    "local_steps": int,
    "algorithm": str,
    "batch_size": int,
    "eta_l": float,
    "eta_g": float,
    "alpha": float,
    "decay_v": float,
    "amp_share_rounds": int,
    "client_weights": _weights,
    "local_epochs": int,
    "hidden_dims": _int_list,
    "grad_floor": float,
    "feature_scale": _optional_float,
    "feature_offset": float,
}

DATA_KEYS = {
    "samples_per_client": int,
    "height": int,
    "width": int,
    "channels": int,
    "noise_std": float,
    "label_rule": str,
    "paired_content": _bool,
    "eval_fraction": float,
}

CLIENT_KEYS = {
    "contrast_gain": float,
    "brightness_offset": float,
    "band_gains": _bands,
}

_CLIENT_SECTION = re.compile(r"^client\.(\d+)$")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Line numbers of section headers and keys (configparser does not keep them)."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
        elif section is not None and not raw[:1].isspace():
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            index.setdefault((section, key), n)
    return index


def parse(text: str, source: str = "<config>") -> ExperimentConfig:
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_default__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line, source=source) from None

    def fail(msg, section, key=None):
        raise ConfigError(msg, field=key or section, line=lines.get((section, key)), source=source)

    def read(section: str, schema: dict) -> dict:
        out = {}
        for key, text_value in parser.items(section):
            if key not in schema:
                fail(f"unknown key {key!r} in [{section}]", section, key)
            try:
                out[key] = schema[key](text_value)
            except ValueError as exc:
                fail(f"bad value for {key!r}: {exc}", section, key)
        return out

    sections = parser.sections()
    clients: dict[int, dict] = {}
    for s in sections:
        m = _CLIENT_SECTION.match(s)
        if m:
            clients[int(m.group(1))] = read(s, CLIENT_KEYS)
        elif s not in ("experiment", "federation", "data"):
            fail(f"unknown section [{s}]", s)

    if "federation" not in sections:
        raise ConfigError("missing section [federation]", field="federation", source=source)
    fed_values = read("federation", FEDERATION_KEYS)
    for key in REQUIRED_FEDERATION:
        if key not in fed_values:
            fail(f"missing required field {key!r}", "federation")
    exp_values = read("experiment", EXPERIMENT_KEYS) if "experiment" in sections else {}
    data_values = read("data", DATA_KEYS) if "data" in sections else {}

    n = fed_values["num_clients"]
    if clients and sorted(clients) != list(range(n)):
        fail(f"client sections must be client.0 .. client.{n - 1}", f"client.{max(clients)}")
    alpha = fed_values.pop("alpha", _fed_default("alpha"))
    try:
        data = DatasetSpec(
            num_clients=n,
            shift_profiles=tuple(ShiftProfile(**clients[i]) for i in sorted(clients)),
            **data_values,
        )
        # store the resolved profiles so serialization is lossless
        data = replace(data, shift_profiles=data.profiles())
        fed = FedConfig(alpha=alpha, **fed_values)
        return ExperimentConfig(fed=fed, data=data, alpha=alpha, **exp_values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), source=source) from None


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse(text, source=str(path))


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text with every default filled in; ``parse(serialize(c)) == c``."""
    out = ["[experiment]"]
    for key in EXPERIMENT_KEYS:
        out.append(f"{key} = {_fmt(getattr(cfg, key))}")
    out += ["", "[federation]"]
    for key in FEDERATION_KEYS:
        value = cfg.alpha if key == "alpha" else getattr(cfg.fed, key)
        out.append(f"{key} = {_fmt(value)}".rstrip())
    out += ["", "[data]"]
    for key in DATA_KEYS:
        out.append(f"{key} = {_fmt(getattr(cfg.data, key))}")
    for i, p in enumerate(cfg.data.profiles()):
        out += ["", f"[client.{i}]"]
        out.append(f"contrast_gain = {_fmt(p.contrast_gain)}")
        out.append(f"brightness_offset = {_fmt(p.brightness_offset)}")
        bands = ", ".join(":".join(repr(v) for v in b) for b in p.band_gains)
        out.append(f"band_gains = {bands}".rstrip())
    return "\n".join(out) + "\n"
