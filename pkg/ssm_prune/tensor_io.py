"""
Raw tensor files: little-endian bytes plus a ``<file>.json`` sidecar holding
``{"shape": [...], "dtype": "float64", "name": "..."}``.
"""
import json
import logging
import os
from typing import List, Tuple

import numpy as np

from ssm_prune.errors import StructuralError
from ssm_prune.model_config import ModelConfig
from ssm_prune.traversal import model_paths
from ssm_prune.vim_model import BlockWeights, DirectionWeights

logger = logging.getLogger(__name__)

SUPPORTED_DTYPES = ("float32", "float64", "int32", "int64", "bool")
BLOCK_FIELDS = ("in_proj", "gate_proj", "out_proj")
DIRECTION_FIELDS = ("delta_proj", "delta_bias", "b_proj", "c_proj", "a_diag")


def sidecar_path(path) -> str:
    return f"{path}.json"


def save_tensor(path, array, name=None):
    array = np.asarray(array)
    if array.dtype.name not in SUPPORTED_DTYPES:
        raise StructuralError(f"unsupported dtype {array.dtype.name}")
    le = array.astype(array.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(le).tobytes())
    meta = {"shape": list(array.shape), "dtype": array.dtype.name,
            "name": name or os.path.splitext(os.path.basename(path))[0]}
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f)
    logger.debug(f"Saved tensor {meta['name']} {meta['shape']} -> {path}")


def load_tensor_with_name(path) -> Tuple[np.ndarray, str]:
    with open(sidecar_path(path), "r", encoding="utf-8") as f:
        meta = json.load(f)
    if meta.get("dtype") not in SUPPORTED_DTYPES:
        raise StructuralError(f"unsupported dtype {meta.get('dtype')!r} in {sidecar_path(path)}")
    dtype = np.dtype(meta["dtype"]).newbyteorder("<")
    shape = tuple(int(s) for s in meta["shape"])
    with open(path, "rb") as f:
        data = f.read()
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(data) != expected:
        raise StructuralError(f"{path} holds {len(data)} bytes, sidecar shape {shape} needs {expected}")
    array = np.frombuffer(data, dtype=dtype).reshape(shape)
    return array.astype(dtype.newbyteorder("="), copy=True), meta.get("name", "")


def load_tensor(path) -> np.ndarray:
    return load_tensor_with_name(path)[0]


def save_weights(directory, weights: List[BlockWeights]):
    os.makedirs(directory, exist_ok=True)
    for i, block in enumerate(weights):
        for field in BLOCK_FIELDS:
            name = f"block{i}.{field}"
            save_tensor(os.path.join(directory, f"{name}.bin"), getattr(block, field), name)
        for m, dw in enumerate(block.directions):
            for field in DIRECTION_FIELDS:
                name = f"block{i}.dir{m}.{field}"
                save_tensor(os.path.join(directory, f"{name}.bin"), getattr(dw, field), name)
    logger.info(f"Saved {len(weights)} blocks to {directory}")


def load_weights(directory, cfg: ModelConfig) -> List[BlockWeights]:
    """Blocks written by save_weights, shape-checked against cfg; one direction set per scan path."""
    n_directions = len(model_paths(cfg.grid, cfg.directions))
    d, inner, state = cfg.embed_dim, cfg.inner_dim, cfg.state_dim
    block_shapes = {"in_proj": (d, inner), "gate_proj": (d, inner), "out_proj": (inner, d)}
    dir_shapes = {"delta_proj": (inner, 1), "delta_bias": (inner,), "b_proj": (inner, state),
                  "c_proj": (inner, state), "a_diag": (inner, state)}

    def read(name, shape):
        array = load_tensor(os.path.join(directory, f"{name}.bin")).astype(np.float64)
        if array.shape != shape:
            raise StructuralError(f"{name} has shape {array.shape}, config needs {shape}")
        return array

    blocks = []
    for i in range(cfg.depth):
        directions = tuple(
            DirectionWeights(**{f: read(f"block{i}.dir{m}.{f}", s) for f, s in dir_shapes.items()})
            for m in range(n_directions)
        )
        blocks.append(BlockWeights(
            **{f: read(f"block{i}.{f}", s) for f, s in block_shapes.items()},
            directions=directions,
        ))
    logger.info(f"Loaded {len(blocks)} blocks from {directory}")
    return blocks
