"""
Versioned Binary Model Files (.shsm)

Layout (little endian):
    0x00  uint32  magic 0x4D534853 ("SHSM")
    0x04  uint32  format version
    0x08  uint32  metadata length M
    0x0C  M bytes metadata (UTF-8 JSON, sorted keys)
    ...   uint32  array count, then per array:
              uint32 name length, name (UTF-8)
              uint8  dtype code (0 = float64, 1 = int64)
              uint32 ndim, ndim x uint64 shape
              raw little-endian data

Arrays are written in sorted name order, so the same classifier always
serializes to the same bytes and reloads bit-exactly.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .dataset import Scaler
from .errors import ParseError
from .models import Algorithm, Classifier, TrainingConfig, classifier_type
from .schema import FeatureSchema, default_schema

logger = logging.getLogger(__name__)

MAGIC = 0x4D534853
FORMAT_VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


def _metadata(classifier: Classifier) -> Dict:
    hp = classifier.config.describe()
    hp.pop("algorithm")
    hp.pop("seed")
    return {
        "algorithm": classifier.algorithm.value,
        "seed": classifier.config.seed,
        "hyperparameters": hp,
        "train_accuracy": classifier.train_accuracy,
        "features": classifier.schema.feature_names,
    }


def encode_model(classifier: Classifier) -> bytes:
    meta = json.dumps(_metadata(classifier), sort_keys=True, separators=(",", ":")).encode("utf-8")
    arrays = dict(classifier.parameters())
    arrays["scaler.lo"] = classifier.scaler.lo
    arrays["scaler.hi"] = classifier.scaler.hi

    parts = [struct.pack("<III", MAGIC, FORMAT_VERSION, len(meta)), meta, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        dtype = np.dtype("<i8") if np.issubdtype(arr.dtype, np.integer) else np.dtype("<f8")
        arr = np.ascontiguousarray(arr, dtype=dtype)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BI", _DTYPE_CODES[dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, fmt: str) -> Tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ParseError(f"Truncated model file at byte {self.offset}", path=self.path)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ParseError(f"Truncated model file at byte {self.offset}", path=self.path)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def decode_model(data: bytes, path: str = "<bytes>",
                 schema: Optional[FeatureSchema] = None) -> Classifier:
    schema = schema or default_schema()
    reader = _Reader(data, path)
    magic, version, meta_len = reader.take("<III")
    if magic != MAGIC:
        raise ParseError(f"Not a model file (magic 0x{magic:08X})", path=path)
    if version != FORMAT_VERSION:
        raise ParseError(f"Unsupported model format version {version}", path=path)
    try:
        meta = json.loads(reader.raw(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"Corrupt metadata block: {e}", path=path) from None

    (count,) = reader.take("<I")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.take("<I")
        name = reader.raw(name_len).decode("utf-8")
        code, ndim = reader.take("<BI")
        if code not in _DTYPES:
            raise ParseError(f"Unknown dtype code {code} for array '{name}'", path=path)
        shape = reader.take(f"<{ndim}Q")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[name] = np.frombuffer(reader.raw(nbytes), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if reader.offset != len(data):
        raise ParseError(f"{len(data) - reader.offset} trailing bytes after the last array", path=path)

    if meta.get("features") != schema.feature_names:
        raise ParseError("Model was trained on a different feature schema", path=path)
    config = TrainingConfig.from_dict(meta["algorithm"], meta["seed"], meta["hyperparameters"])
    scaler = Scaler(arrays.pop("scaler.lo"), arrays.pop("scaler.hi"))
    return classifier_type(config.algorithm).from_parameters(
        config, scaler, schema, arrays, float(meta["train_accuracy"])
    )


def save_model(classifier: Classifier, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(encode_model(classifier))
    logger.info("Saved %s model to %s", classifier.algorithm.value, path)
    return path


def load_model(path: Union[str, Path], schema: Optional[FeatureSchema] = None) -> Classifier:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    return decode_model(path.read_bytes(), str(path), schema)


def model_info(classifier: Classifier) -> Dict:
    """Summary used by the model-info view."""
    info = {
        "algorithm": classifier.algorithm.value,
        "seed": classifier.config.seed,
        "train_accuracy": classifier.train_accuracy,
        "hyperparameters": _metadata(classifier)["hyperparameters"],
        "parameter_count": int(sum(np.asarray(a).size for a in classifier.parameters().values())),
    }
    tree = classifier.tree_structure() if classifier.algorithm is Algorithm.DECISION_TREE else None
    if tree is not None:
        info["nodes"] = tree.n_nodes
        info["leaves"] = tree.n_leaves
        info["depth"] = tree.depth()
    return info
