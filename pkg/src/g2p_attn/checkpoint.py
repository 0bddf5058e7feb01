"""Versioned binary checkpoint container.

Layout::

    b"G2PCKPT\\0"            8-byte magic
    uint32 LE               format version
    uint64 LE               header length N
    N bytes                 UTF-8 JSON header
    tensor payload          little-endian float32, in header order

The header carries the model config, both vocabularies (with the gate order
of the LSTM blocks), training metadata and a ``tensors`` list of
``{"name", "shape", "offset"}`` records; offsets are relative to the start of
the payload. Optimizer moments, when saved, are stored as extra tensors under
``adam.m/<param>`` and ``adam.v/<param>``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .errors import CheckpointError
from .layers import GATE_ORDER
from .model import G2PModel, ModelConfig
from .tensor import Tensor

MAGIC = b"G2PCKPT\0"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


def _encode(tensors: dict[str, np.ndarray]) -> tuple[list, bytes]:
    index, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    return index, b"".join(chunks)


def save_checkpoint(path, model: G2PModel, metadata: dict | None = None, optimizer=None) -> None:
    tensors = {name: p.data for name, p in model.params.items()}
    opt_meta = None
    if optimizer is not None:
        for name in model.params:
            tensors[f"adam.m/{name}"] = optimizer.m[name]
            tensors[f"adam.v/{name}"] = optimizer.v[name]
        opt_meta = optimizer.header()
    index, payload = _encode(tensors)
    header = {
        "config": model.config.to_dict(),
        "gate_order": list(GATE_ORDER),
        "grapheme_vocab": model.g_vocab.corpus_symbols,
        "phoneme_vocab": model.p_vocab.corpus_symbols,
        "metadata": metadata or {},
        "optimizer": opt_meta,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Raw ``(header, tensors)`` without building a model."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, n = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = 8 + struct.calcsize("<IQ")
    try:
        header = json.loads(data[start:start + n].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = memoryview(data)[start + n:]
    tensors = {}
    for rec in header["tensors"]:
        count = int(np.prod(rec["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=_LE_F32, count=count, offset=rec["offset"])
        tensors[rec["name"]] = arr.astype(np.float32).reshape(rec["shape"])
    return header, tensors


def load_checkpoint(path, with_optimizer: bool = False):
    """Rebuild the model; returns ``(model, metadata)`` or, with
    ``with_optimizer``, ``(model, metadata, optimizer_or_None)``."""
    header, tensors = read_checkpoint(path)
    if tuple(header.get("gate_order", GATE_ORDER)) != GATE_ORDER:
        raise CheckpointError(f"{path}: incompatible LSTM gate order {header['gate_order']}")
    config = ModelConfig.from_dict(header["config"])
    params = {name: Tensor(arr, requires_grad=True, name=name)
              for name, arr in tensors.items() if not name.startswith("adam.")}
    model = G2PModel(config, Vocabulary(header["grapheme_vocab"]), Vocabulary(header["phoneme_vocab"]), params)
    if not with_optimizer:
        return model, header["metadata"]
    optimizer = None
    if header.get("optimizer") is not None:
        from .train import Adam
        optimizer = Adam.from_header(header["optimizer"])
        for name in params:
            optimizer.m[name] = tensors[f"adam.m/{name}"]
            optimizer.v[name] = tensors[f"adam.v/{name}"]
    return model, header["metadata"], optimizer
