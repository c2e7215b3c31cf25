import numpy as np
import pytest

from conftest import tiny_config
from gridseq.checkpoint import (CKPT_MAGIC, load_checkpoint, read_arrays,
    save_checkpoint)
from gridseq.errors import CorruptFileError
from gridseq.model import FreezeMask


def test_round_trip(tmp_path, params):
    mask = FreezeMask.default(params.names())
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(params, mask, path, meta={"stage": "teaf", "epoch": 3})
    (again, mask2, config, meta) = load_checkpoint(path, with_meta=True)
    assert config == params.config
    assert mask2 == mask
    assert meta == {"stage": "teaf", "epoch": 3}
    for name in params.names():
        assert np.array_equal(again[name], params[name])
    (arrays, flags, blob) = read_arrays(path)
    assert list(arrays) == params.names()
    assert blob["model"]["L_p"] == 8


def test_truncated_and_bad_magic(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, FreezeMask.default(params.names()), str(path))
    good = path.read_bytes()
    assert good.startswith(CKPT_MAGIC)

    path.write_bytes(good[:len(good)//2])
    with pytest.raises(CorruptFileError):
        load_checkpoint(str(path))

    path.write_bytes(b"XXXXXXXX" + good[8:])
    with pytest.raises(CorruptFileError) as info:
        load_checkpoint(str(path))
    assert info.value.array_name == "magic"

    path.write_bytes(good + b"\x01")
    with pytest.raises(CorruptFileError):
        load_checkpoint(str(path))


def test_shape_mismatch_names_array(tmp_path, params):
    mask = FreezeMask.default(params.names())
    params.config = tiny_config(L_pred=2)
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(params, mask, path)
    with pytest.raises(CorruptFileError) as info:
        load_checkpoint(path)
    assert info.value.array_name == "head.W_out"
