from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmofl import model as mlp
from harmofl.persist import (
    MAGIC,
    Checkpoint,
    FormatError,
    decode_checkpoint,
    dumps_json,
    encode_checkpoint,
    load_checkpoint,
    load_datasets,
    save_checkpoint,
    save_datasets,
    write_csv,
)
from harmofl.synthdata import DatasetSpec, generate_clients


def _ckpt(hidden=(3,), amp=True):
    arch = mlp.MLPArch(12, hidden, 2)
    params = np.random.default_rng(0).standard_normal(arch.num_params)
    amplitude = np.random.default_rng(1).random((2, 2, 3)) if amp else None
    return Checkpoint(arch, params, amplitude)


@pytest.mark.parametrize("hidden,amp", [((3,), True), ((), False), ((4, 2), True)])
def test_checkpoint_round_trip_is_exact(hidden, amp):
    ck = _ckpt(hidden, amp)
    back = decode_checkpoint(encode_checkpoint(ck))
    assert back.arch == ck.arch
    assert np.array_equal(back.params, ck.params)
    if amp:
        assert np.array_equal(back.amplitude, ck.amplitude)
    else:
        assert back.amplitude is None


def test_checkpoint_header_layout():
    data = encode_checkpoint(_ckpt())
    assert data[:8] == MAGIC
    assert int.from_bytes(data[8:10], "little") == 1
    assert int.from_bytes(data[10:14], "little") == 12


def test_bad_magic_version_and_truncation():
    data = encode_checkpoint(_ckpt())
    with pytest.raises(FormatError, match="magic"):
        decode_checkpoint(b"X" + data[1:])
    with pytest.raises(FormatError, match="version"):
        decode_checkpoint(data[:8] + (9).to_bytes(2, "little") + data[10:])
    for cut in (3, 20, len(data) - 1):
        with pytest.raises(FormatError):
            decode_checkpoint(data[:cut])
    with pytest.raises(FormatError, match="trailing"):
        decode_checkpoint(data + b"\x00")


def test_wrong_parameter_length_rejected():
    ck = _ckpt()
    with pytest.raises(ValueError):
        encode_checkpoint(Checkpoint(ck.arch, ck.params[:-1], None))


def test_save_writes_sidecar(tmp_path):
    ck = _ckpt()
    save_checkpoint(tmp_path / "m.ckpt", ck, {"seed": 4, "config_sha256": "ab"})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta == {"format_version": 1, "seed": 4, "config_sha256": "ab"}
    assert np.array_equal(back.params, ck.params)


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_round_trip_exactly(x):
    assert json.loads(dumps_json({"v": x}))["v"] == x


def test_json_layout_and_non_finite():
    text = dumps_json({"a": [1, 0.1], "b": np.float64(2.0), "c": float("nan"), "d": np.arange(2)})
    doc = json.loads(text)
    assert doc == {"a": [1, 0.1], "b": 2.0, "c": None, "d": [0, 1]}
    assert "0.10000000000000001" in text


def test_csv_uses_17_digits(tmp_path):
    write_csv(tmp_path / "x.csv", ["a", "b"], [[0.1, None], [1, "s"]])
    assert (tmp_path / "x.csv").read_text() == "a,b\n0.10000000000000001,\n1,s\n"


def test_dataset_dump_round_trip(tmp_path):
    spec = DatasetSpec(num_clients=2, samples_per_client=10, height=8, width=8, channels=1, paired_content=True)
    ds = generate_clients(spec, 3)
    save_datasets(tmp_path / "d.npz", ds)
    back = load_datasets(tmp_path / "d.npz")
    for a, b in zip(ds, back):
        assert a.client_id == b.client_id
        assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.train_idx, b.train_idx) and np.array_equal(a.eval_idx, b.eval_idx)
