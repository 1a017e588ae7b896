"""
Checkpoint container

Layout (little endian):

    magic      8 bytes   b"MRTCKPT\\0"
    version    u32
    header_len u64
    payload_len u64
    header     header_len bytes of UTF-8 JSON (configs, tensor table)
    payload    payload_len bytes of '<f8' tensor data
    digest     32 bytes, SHA-256 of everything above

Editors are stored as raw_U (not the orthonormalized U) so a run resumes exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.editor import EditorBank
from src.errors import DimensionError, IntegrityError, UnsupportedVersionError
from src.model.config import EditPlan, ToyModelConfig
from src.model.toy_model import ToyMultimodalModel
from src.model.weights import FrozenWeights

logger = logging.getLogger(__name__)

MAGIC = b"MRTCKPT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQQ")
_DIGEST_LEN = 32
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    model_config: ToyModelConfig
    weights: FrozenWeights
    editors: EditorBank = field(default_factory=EditorBank)
    plan: Optional[EditPlan] = None
    run_config: Optional[Dict[str, Any]] = None
    config_hash: Optional[str] = None
    train_loss: Optional[float] = None
    rng_state: Optional[Dict[str, Any]] = None
    optimizer_state: Optional[Dict[str, Any]] = None
    version: int = FORMAT_VERSION

    def model(self) -> ToyMultimodalModel:
        return ToyMultimodalModel(self.model_config, self.weights)


def _tensor_items(ckpt: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    items = [(f"base/{name}", array) for name, array in ckpt.weights.items()]
    for record in ckpt.editors.to_arrays():
        for key in ("raw_U", "W", "bias"):
            items.append((f"editor/{record['site']}/{record['layer']}/{key}", record[key]))
    if ckpt.optimizer_state:
        for kind in ("m", "v"):
            for i, array in enumerate(ckpt.optimizer_state.get(kind, [])):
                items.append((f"optimizer/{kind}/{i}", np.asarray(array)))
    return items


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    table, chunks, offset = [], [], 0
    for name, array in _tensor_items(ckpt):
        data = np.ascontiguousarray(array, dtype=_DTYPE).tobytes()
        table.append({"name": name, "shape": list(np.shape(array)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)

    header = {
        "model_config": ckpt.model_config.model_dump(),
        "plan": ckpt.plan.model_dump() if ckpt.plan is not None else None,
        "run_config": ckpt.run_config,
        "config_hash": ckpt.config_hash,
        "train_loss": ckpt.train_loss,
        "rng_state": ckpt.rng_state,
        "optimizer_t": (ckpt.optimizer_state or {}).get("t"),
        "editors": [
            {"site": r["site"], "layer": r["layer"], "rank": r["rank"], "dim": r["dim"]}
            for r in ckpt.editors.to_arrays()
        ],
        "tensors": table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes), len(payload)) + header_bytes + payload
    blob = body + hashlib.sha256(body).digest()

    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    logger.info("saved checkpoint %s (%d tensors, %d bytes)", path, len(table), len(blob))
    return path


def load_checkpoint(path: Union[str, Path], model_config: Optional[ToyModelConfig] = None) -> Checkpoint:
    """
    Read and verify a checkpoint.

    Args:
        path: checkpoint file
        model_config: when given, base tensors must match its shapes

    Raises:
        IntegrityError: truncated file, bad magic or checksum mismatch
        UnsupportedVersionError: unknown format version
        DimensionError: tensor shape mismatch, naming the tensor
    """
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size + _DIGEST_LEN:
        raise IntegrityError(f"checkpoint {path} is truncated: {len(blob)} bytes")
    magic, version, header_len, payload_len = _PREFIX.unpack_from(blob, 0)
    expected = _PREFIX.size + header_len + payload_len + _DIGEST_LEN
    if magic != MAGIC:
        raise IntegrityError(f"checkpoint {path} has a bad magic number")
    if len(blob) != expected:
        raise IntegrityError(f"checkpoint {path} is truncated or padded: {len(blob)} bytes, expected {expected}")
    body, digest = blob[:-_DIGEST_LEN], blob[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"checkpoint {path} failed its checksum")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"checkpoint {path} has format version {version}; supported: {FORMAT_VERSION}")

    header = json.loads(body[_PREFIX.size:_PREFIX.size + header_len].decode("utf-8"))
    payload = body[_PREFIX.size + header_len:]
    tensors: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE).reshape(entry["shape"]).copy()

    stored_config = ToyModelConfig(**header["model_config"])
    weights = FrozenWeights({name[len("base/"):]: a for name, a in tensors.items() if name.startswith("base/")})
    weights.check_shapes(model_config or stored_config)

    records = []
    for e in header["editors"]:
        key = f"editor/{e['site']}/{e['layer']}"
        records.append(dict(e, raw_U=tensors[f"{key}/raw_U"], W=tensors[f"{key}/W"], bias=tensors[f"{key}/bias"]))
    editors = EditorBank.from_arrays(records)
    if model_config is not None:
        _check_editor_dims(editors, model_config)

    optimizer_state = None
    if header.get("optimizer_t") is not None:
        optimizer_state = {
            "t": header["optimizer_t"],
            "m": [a for n, a in sorted(_indexed(tensors, "optimizer/m/"))],
            "v": [a for n, a in sorted(_indexed(tensors, "optimizer/v/"))],
        }

    return Checkpoint(
        model_config=model_config or stored_config,
        weights=weights,
        editors=editors,
        plan=EditPlan(**header["plan"]) if header.get("plan") is not None else None,
        run_config=header.get("run_config"),
        config_hash=header.get("config_hash"),
        train_loss=header.get("train_loss"),
        rng_state=header.get("rng_state"),
        optimizer_state=optimizer_state,
        version=version,
    )


def _indexed(tensors: Dict[str, np.ndarray], prefix: str) -> List[Tuple[int, np.ndarray]]:
    return [(int(name[len(prefix):]), a) for name, a in tensors.items() if name.startswith(prefix)]


def _check_editor_dims(editors: EditorBank, config: ToyModelConfig) -> None:
    for site, layer, editor in editors.items():
        width = config.d_v if site.value == "visual" else config.d_t
        if editor.dim != width:
            raise DimensionError(
                f"editor tensor 'editor/{site.value}/{layer}/raw_U' has dim {editor.dim}, model expects {width}"
            )
