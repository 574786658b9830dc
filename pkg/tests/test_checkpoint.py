"""Record container format and checkpoint round trips."""

import struct

import numpy as np
import pytest

from stcorr.checkpoint import (
    MAGIC,
    load_checkpoint,
    read_records,
    restore_into,
    save_checkpoint,
    write_records,
)
from stcorr.tensor import parameter


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    records = {
        "alpha": rng.normal(size=(3, 4)).astype(np.float32),
        "beta": rng.normal(size=(2, 1, 5)).astype(np.float32),
        "gamma": np.float32(2.5),
    }
    path = tmp_path / "records.bin"
    write_records(path, records)
    loaded = read_records(path)
    assert list(loaded) == ["alpha", "beta", "gamma"]
    for name, values in records.items():
        arr = np.asarray(values, dtype=np.float32)
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.tobytes()


def test_scalar_record_keeps_rank_zero(tmp_path):
    path = tmp_path / "scalar.bin"
    write_records(path, {"s": np.float32(-0.125)})
    loaded = read_records(path)
    assert loaded["s"].shape == ()
    assert loaded["s"] == np.float32(-0.125)


def test_empty_container_round_trips(tmp_path):
    path = tmp_path / "empty.bin"
    write_records(path, {})
    assert read_records(path) == {}


def test_non_ascii_names_round_trip(tmp_path):
    path = tmp_path / "names.bin"
    write_records(path, {"weights/étage": np.zeros(2, dtype=np.float32)})
    assert "weights/étage" in read_records(path)


def test_rejects_overlong_name(tmp_path):
    with pytest.raises(ValueError):
        write_records(tmp_path / "x.bin", {"n" * 70000: np.zeros(1)})


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + struct.pack("<II", 1, 0))
    with pytest.raises(ValueError, match="magic"):
        read_records(path)


def test_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(MAGIC + struct.pack("<II", 9, 0))
    with pytest.raises(ValueError, match="version"):
        read_records(path)


def test_rejects_truncated_file(tmp_path):
    path = tmp_path / "full.bin"
    write_records(path, {"w": np.arange(6, dtype=np.float32)})
    clipped = tmp_path / "clipped.bin"
    clipped.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ValueError, match="truncated|corrupt"):
        read_records(clipped)


def test_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "full.bin"
    write_records(path, {"w": np.arange(6, dtype=np.float32)})
    padded = tmp_path / "padded.bin"
    padded.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        read_records(padded)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    params = {
        "layer.weight": parameter(rng.normal(size=(4, 3))),
        "layer.bias": parameter(np.zeros(4)),
    }
    m1 = {name: np.zeros_like(p.data) for name, p in params.items()}
    m2 = {name: np.full_like(p.data, 0.5) for name, p in params.items()}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, step=12345, seed=42, moment1=m1, moment2=m2)
    ckpt = load_checkpoint(path)
    assert ckpt.step == 12345
    assert ckpt.seed == 42
    assert set(ckpt.params) == set(params)
    assert set(ckpt.moment1) == set(params)
    assert set(ckpt.moment2) == set(params)
    for name, p in params.items():
        assert ckpt.params[name].tobytes() == p.data.tobytes()
        assert (ckpt.moment2[name] == 0.5).all()


def test_counters_use_full_u64_range(tmp_path):
    path = tmp_path / "model.ckpt"
    big = (1 << 63) + 12345
    save_checkpoint(path, {"w": parameter(np.zeros(1))}, step=big, seed=(1 << 64) - 1)
    ckpt = load_checkpoint(path)
    assert ckpt.step == big
    assert ckpt.seed == (1 << 64) - 1


def test_negative_counter_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "x.ckpt", {"w": parameter(np.zeros(1))},
                        step=-1, seed=0)


def test_reserved_parameter_names_rejected(tmp_path):
    for name in ("meta.thing", "opt.m.w", "opt.v.w"):
        with pytest.raises(ValueError, match="reserved"):
            save_checkpoint(tmp_path / "x.ckpt", {name: parameter(np.zeros(1))},
                            step=0, seed=0)


def test_plain_container_is_not_a_checkpoint(tmp_path):
    path = tmp_path / "plain.bin"
    write_records(path, {"w": np.zeros(1, dtype=np.float32)})
    with pytest.raises(ValueError, match="checkpoint"):
        load_checkpoint(path)


def test_restore_into_copies_values():
    target = {"w": parameter(np.zeros((2, 2))), "b": parameter(np.zeros(2))}
    saved = {"w": np.arange(4, dtype=np.float32).reshape(2, 2),
             "b": np.ones(2, dtype=np.float32)}
    restore_into(target, saved)
    assert (target["w"].data == saved["w"]).all()
    assert target["w"].data.dtype == np.float32


def test_restore_into_rejects_name_mismatches():
    target = {"w": parameter(np.zeros(2))}
    with pytest.raises(ValueError, match="mismatch"):
        restore_into(target, {})
    with pytest.raises(ValueError, match="mismatch"):
        restore_into(target, {"w": np.zeros(2, dtype=np.float32),
                              "extra": np.zeros(1, dtype=np.float32)})


def test_restore_into_rejects_shape_mismatch():
    target = {"w": parameter(np.zeros((2, 3)))}
    with pytest.raises(ValueError, match="shape"):
        restore_into(target, {"w": np.zeros((3, 2), dtype=np.float32)})
