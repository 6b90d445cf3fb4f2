import struct

import numpy as np
import pytest

from engine import DataError, FeatureMap, ShapeError
from training import Checkpoint, EncoderConfig, init_params, load_checkpoint, predict, save_checkpoint
from training.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint

CONFIG = EncoderConfig(levels=3, widths=(4, 6, 8), class_count=3, embedding=4)


def make_checkpoint(seed=0):
    return Checkpoint(CONFIG, init_params(CONFIG, seed), best_epoch=4, val_accuracy=0.625,
                      extra={"lambda": 0.075})


def test_round_trip_matches_stored_precision():
    checkpoint = make_checkpoint()
    decoded = decode_checkpoint(encode_checkpoint(checkpoint))
    expected = checkpoint.stored()

    assert decoded.encoder == CONFIG
    assert decoded.best_epoch == 4 and decoded.val_accuracy == 0.625
    assert decoded.extra == {"lambda": 0.075}
    assert set(decoded.params) == set(expected.params)
    for name, value in expected.params.items():
        np.testing.assert_array_equal(decoded.params[name], value)


def test_stored_is_float32_rounding():
    checkpoint = make_checkpoint()
    for name, value in checkpoint.stored().params.items():
        np.testing.assert_array_equal(value, checkpoint.params[name].astype(np.float32))


def test_encoding_is_deterministic():
    assert encode_checkpoint(make_checkpoint(3)) == encode_checkpoint(make_checkpoint(3))
    assert encode_checkpoint(make_checkpoint(3)) != encode_checkpoint(make_checkpoint(4))


def test_header_layout():
    payload = encode_checkpoint(make_checkpoint())
    assert payload.startswith(MAGIC)
    (length,) = struct.unpack('<I', payload[8:12])
    assert payload[12:12 + length].startswith(b"{")


def test_bad_magic():
    payload = encode_checkpoint(make_checkpoint())
    with pytest.raises(DataError, match="magic"):
        decode_checkpoint(b"NOTSPIX1" + payload[8:])


def test_truncated_payloads():
    payload = encode_checkpoint(make_checkpoint())
    with pytest.raises(DataError):
        decode_checkpoint(payload[:10])
    with pytest.raises(DataError):
        decode_checkpoint(payload[:-4])
    (length,) = struct.unpack('<I', payload[8:12])
    with pytest.raises(DataError):
        decode_checkpoint(payload[:12 + length // 2])


def test_save_and_load(tmp_path):
    checkpoint = make_checkpoint()
    path = save_checkpoint(tmp_path / "nested" / "model.ckpt", checkpoint)
    assert path.exists()
    assert not path.with_name("model.ckpt.tmp").exists()

    loaded = load_checkpoint(path)
    image = FeatureMap(np.random.default_rng(0).random((16, 16, 3)))
    np.testing.assert_array_equal(predict(loaded, image).ids, predict(checkpoint.stored(), image).ids)


def test_load_rejects_mismatched_parameters(tmp_path):
    params = init_params(CONFIG)
    params['classifier.bias'] = np.zeros(5)
    path = save_checkpoint(tmp_path / "broken.ckpt", Checkpoint(CONFIG, params))
    with pytest.raises(ShapeError):
        load_checkpoint(path)
