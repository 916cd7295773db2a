import hashlib

import numpy as np
import pytest

from shs_bench.errors import ParseError
from shs_bench.model_format import MAGIC, decode_model, encode_model, load_model, model_info, save_model
from shs_bench.models import Algorithm, TrainingConfig, train


@pytest.mark.parametrize("name", ["dt", "rf", "lr", "nn"])
def test_save_and_load_reproduce_predictions(tmp_path, victims, test_ds, name):
    model = victims[name]
    path = save_model(model, tmp_path / f"{name}.shsm")
    loaded = load_model(path)
    assert loaded.algorithm is model.algorithm
    assert loaded.config == model.config
    Z = model.scaler.transform(test_ds.X)
    assert np.array_equal(loaded.scores_normalized(Z), model.scores_normalized(Z))
    assert encode_model(loaded) == encode_model(model)


def test_retraining_gives_identical_file(tmp_path, train_ds):
    config = TrainingConfig(Algorithm.DECISION_TREE, 42)
    a = save_model(train(config, train_ds), tmp_path / "a.shsm")
    b = save_model(train(config, train_ds), tmp_path / "b.shsm")
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_bad_magic(victims):
    data = bytearray(encode_model(victims["lr"]))
    data[0] ^= 0xFF
    with pytest.raises(ParseError, match="magic"):
        decode_model(bytes(data))


def test_truncated_file(victims):
    data = encode_model(victims["lr"])
    with pytest.raises(ParseError, match="Truncated"):
        decode_model(data[:-5])


def test_trailing_bytes(victims):
    with pytest.raises(ParseError, match="trailing"):
        decode_model(encode_model(victims["dt"]) + b"\0")


def test_header_layout(victims):
    data = encode_model(victims["lr"])
    assert int.from_bytes(data[:4], "little") == MAGIC


def test_missing_model_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "none.shsm")


def test_model_info(victims):
    info = model_info(victims["dt"])
    assert info["algorithm"] == "dt"
    assert info["leaves"] >= 2
    assert info["nodes"] == 2 * info["leaves"] - 1
    assert info["parameter_count"] > 0
    assert "nodes" not in model_info(victims["lr"])
    assert model_info(victims["lr"])["parameter_count"] == 15 * 11 + 11
