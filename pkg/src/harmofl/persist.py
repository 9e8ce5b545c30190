"""On-disk formats: metrics (JSON + CSV), checkpoints, dataset dumps.

Checkpoint layout (all integers little-endian)::

    magic        8 bytes   b"HARMOFL\\x00"
    version      u16       FORMAT_VERSION
    input_dim    u32
    n_hidden     u32
    hidden       u32 * n_hidden
    num_classes  u32
    act_len      u16, then act_len ASCII bytes (activation name)
    num_params   u64
    params       f64 * num_params
    has_amp      u8
    [H, W, C     u32 * 3
     amplitude   f64 * C*H*W, channel-outermost]

A JSON sidecar ``<name>.json`` records the config digest and run identity.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .model import MLPArch
from .synthdata import ClientDataset

MAGIC = b"HARMOFL\x00"
FORMAT_VERSION = 1

METRICS_COLUMNS = (
    "seed",
    "round",
    "algorithm",
    "mean_accuracy",
    "std_accuracy",
    "mean_train_loss",
    "mean_eval_loss",
    "gamma",
    "max_gamma_i",
    "bound",
)


class FormatError(ValueError):
    pass


# JSON with 17 significant digits

def _json_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps_json(obj: Any, indent: int = 1) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path: Path, obj: Any) -> None:
    Path(path).write_text(dumps_json(obj))


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_csv_value(v) for v in row])
    Path(path).write_text(buf.getvalue())


def write_metrics_csv(path: Path, rows: Iterable[dict]) -> None:
    write_csv(path, METRICS_COLUMNS, ([r.get(c) for c in METRICS_COLUMNS] for r in rows))


# checkpoints

@dataclass(frozen=True)
class Checkpoint:
    arch: MLPArch
    params: np.ndarray
    amplitude: np.ndarray | None = None  # (H, W, C)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arch = ckpt.arch
    params = np.asarray(ckpt.params, dtype="<f8")
    if params.shape != (arch.num_params,):
        raise ValueError("parameter vector does not match the architecture")
    act = arch.activation.encode("ascii")
    out = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    out.append(struct.pack("<II", arch.input_dim, len(arch.hidden_dims)))
    out.append(struct.pack(f"<{len(arch.hidden_dims)}I", *arch.hidden_dims))
    out.append(struct.pack("<I", arch.num_classes))
    out.append(struct.pack("<H", len(act)) + act)
    out.append(struct.pack("<Q", params.size) + params.tobytes())
    if ckpt.amplitude is None:
        out.append(b"\x00")
    else:
        amp = np.asarray(ckpt.amplitude, dtype="<f8")
        h, w, c = amp.shape
        out.append(b"\x01" + struct.pack("<III", h, w, c))
        out.append(np.ascontiguousarray(amp.transpose(2, 0, 1)).tobytes())
    return b"".join(out)


def decode_checkpoint(data: bytes) -> Checkpoint:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated checkpoint")
        chunk = bytes(view[pos : pos + n])
        pos += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    input_dim, n_hidden = struct.unpack("<II", take(8))
    hidden = struct.unpack(f"<{n_hidden}I", take(4 * n_hidden))
    (num_classes,) = struct.unpack("<I", take(4))
    (act_len,) = struct.unpack("<H", take(2))
    activation = take(act_len).decode("ascii")
    arch = MLPArch(input_dim, tuple(hidden), num_classes, activation)
    (n,) = struct.unpack("<Q", take(8))
    if n != arch.num_params:
        raise FormatError("parameter count does not match the architecture")
    params = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
    amplitude = None
    if take(1) == b"\x01":
        h, w, c = struct.unpack("<III", take(12))
        grid = np.frombuffer(take(8 * h * w * c), dtype="<f8").reshape(c, h, w)
        amplitude = grid.transpose(1, 2, 0).astype(np.float64)
    if pos != len(view):
        raise FormatError("trailing bytes after checkpoint payload")
    return Checkpoint(arch, params, amplitude)


def save_checkpoint(path: Path, ckpt: Checkpoint, sidecar: dict) -> None:
    path = Path(path)
    path.write_bytes(encode_checkpoint(ckpt))
    write_json(path.with_suffix(".json"), {"format_version": FORMAT_VERSION, **sidecar})


def load_checkpoint(path: Path) -> tuple[Checkpoint, dict]:
    path = Path(path)
    ckpt = decode_checkpoint(path.read_bytes())
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return ckpt, meta


# datasets

def save_datasets(path: Path, datasets: list[ClientDataset]) -> None:
    arrays = {}
    for d in datasets:
        p = f"client{d.client_id}_"
        arrays[p + "images"] = d.images
        arrays[p + "labels"] = d.labels
        arrays[p + "train_idx"] = d.train_idx
        arrays[p + "eval_idx"] = d.eval_idx
        if d.raw_images is not None:
            arrays[p + "raw_images"] = d.raw_images
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_datasets(path: Path) -> list[ClientDataset]:
    with np.load(path) as z:
        ids = sorted({int(k.split("_")[0][len("client"):]) for k in z.files})
        out = []
        for cid in ids:
            p = f"client{cid}_"
            raw = z[p + "raw_images"] if p + "raw_images" in z.files else None
            out.append(ClientDataset(cid, z[p + "images"], z[p + "labels"], z[p + "train_idx"], z[p + "eval_idx"], raw))
    return out
