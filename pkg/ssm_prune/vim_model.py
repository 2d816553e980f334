"""
Desk-scale bidirectional Mamba block stack with scheduled token pruning.

This is a simplified surrogate of a vision Mamba encoder: no patch embedding,
no conv branch, no normalisation, no head. Each block projects the kept
tokens to the inner width, runs one selective scan per direction on the
pruned sequence (position-aligned when tokens are missing), gates every
direction with silu(z), sums the directions and adds the residual.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ssm_prune.aligned_scan import AlignedScanInput, scan_aligned, scan_condensed_naive
from ssm_prune.counters import OpCounter
from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.model_config import ModelConfig
from ssm_prune.pruning import (
    ImportanceScores,
    PositionMap,
    compose_maps,
    importance_scores,
    keep_count_for,
    select_tokens,
)
from ssm_prune.ssm_core import ScanMode, StateSpace, StepParams, TokenTensor, as_tokens, scan_recurrent
from ssm_prune.traversal import ScanPath, cross_merge, inverse_path, model_paths, permute, restrict_path

logger = logging.getLogger(__name__)

DT_MIN = 1e-3
DT_MAX = 0.1
SCAN_STRATEGIES = ("aligned", "condensed")


@dataclass(frozen=True, eq=False)
class DirectionWeights:
    """Scan parameters of one direction: Δ = softplus(x·delta_proj + delta_bias), B = x·b_proj, C = x·c_proj."""

    delta_proj: np.ndarray  # (D', 1)
    delta_bias: np.ndarray  # (D',)
    b_proj: np.ndarray  # (D', state)
    c_proj: np.ndarray  # (D', state)
    a_diag: np.ndarray  # (D', state), strictly negative


@dataclass(frozen=True, eq=False)
class BlockWeights:
    in_proj: np.ndarray  # (D, D')
    gate_proj: np.ndarray  # (D, D')
    out_proj: np.ndarray  # (D', D)
    directions: Tuple[DirectionWeights, ...]


@dataclass(frozen=True, eq=False)
class BlockOutput:
    tokens: TokenTensor
    y_dirs: List[TokenTensor]  # ungated, original token order


@dataclass(frozen=True, eq=False)
class ModelOutput:
    features: TokenTensor
    stage_maps: List[PositionMap]
    stage_scores: List[ImportanceScores]
    token_counts: List[int]  # tokens entering each layer


def softplus(v):
    return np.logaddexp(0.0, v)


def silu(v):
    return v * expit(v)


def inverse_softplus(v):
    return v + np.log(-np.expm1(-v))


def _init_direction(rng, inner_dim, state_dim) -> DirectionWeights:
    dt = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=inner_dim))
    dt = np.clip(dt, DT_MIN, DT_MAX)
    return DirectionWeights(
        delta_proj=rng.normal(0.0, 0.1 / np.sqrt(inner_dim), size=(inner_dim, 1)),
        delta_bias=inverse_softplus(dt),
        b_proj=rng.normal(0.0, 1.0 / np.sqrt(inner_dim), size=(inner_dim, state_dim)),
        c_proj=rng.normal(0.0, 1.0 / np.sqrt(inner_dim), size=(inner_dim, state_dim)),
        a_diag=-np.tile(np.arange(1, state_dim + 1, dtype=np.float64), (inner_dim, 1)),
    )


def init_weights(cfg: ModelConfig) -> List[BlockWeights]:
    """Deterministic weights from cfg.seed; Δ biases start with softplus(bias) in [1e-3, 0.1]."""
    rng = np.random.default_rng(cfg.seed)
    d, inner = cfg.embed_dim, cfg.inner_dim
    n_dirs = len(model_paths(cfg.grid, cfg.directions))
    blocks = []
    for _ in range(cfg.depth):
        blocks.append(BlockWeights(
            in_proj=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, inner)),
            gate_proj=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, inner)),
            out_proj=rng.normal(0.0, 1.0 / np.sqrt(inner * cfg.depth), size=(inner, d)),
            directions=tuple(_init_direction(rng, inner, cfg.state_dim) for _ in range(n_dirs)),
        ))
    logger.debug(f"init_weights: depth={cfg.depth} D={d} D'={inner} seed={cfg.seed}")
    return blocks


def make_inputs(cfg: ModelConfig) -> TokenTensor:
    """Benchmark input tokens derived from the config seed."""
    rng = np.random.default_rng([cfg.seed, 1])
    return rng.standard_normal((cfg.batch_size, cfg.token_count, cfg.embed_dim))


def direction_params(x_dir: TokenTensor, dw: DirectionWeights) -> StepParams:
    delta = softplus(x_dir @ dw.delta_proj + dw.delta_bias)
    return StepParams.selective(delta, x_dir @ dw.b_proj, x_dir @ dw.c_proj)


def block_forward(t_prev, w: BlockWeights, paths: Sequence[ScanPath],
                  position_map: Optional[PositionMap] = None, *, scan: str = "aligned",
                  gap_strategy: str = "power", threads: int = 1,
                  counter: Optional[OpCounter] = None) -> BlockOutput:
    """
    T_l = out_proj(Σ_m y_m ⊙ silu(z)) + T_{l-1}.

    ``t_prev`` holds only the currently kept tokens in ascending original
    order; ``position_map`` records where they sit among the ``len(path)``
    original tokens (all-keep when omitted).
    """
    t_prev = as_tokens(t_prev, "t_prev")
    batch, kept, embed = t_prev.shape
    if embed != w.in_proj.shape[0]:
        raise StructuralError(f"tokens have width {embed}, block expects {w.in_proj.shape[0]}")
    if len(paths) != len(w.directions):
        raise StructuralError(f"{len(paths)} paths for {len(w.directions)} direction weight sets")
    if scan not in SCAN_STRATEGIES:
        raise DomainError(f"scan must be one of {SCAN_STRATEGIES}, got {scan!r}")
    if position_map is None:
        position_map = PositionMap.all_keep(kept)
    if position_map.kept_count != kept:
        raise StructuralError(f"map keeps {position_map.kept_count} tokens, tensor has {kept}")

    inner = w.in_proj.shape[1]
    x_in = t_prev @ w.in_proj
    gate = silu(t_prev @ w.gate_proj)

    gated, y_dirs = [], []
    for path, dw in zip(paths, w.directions):
        local_path, scan_keep = restrict_path(path, position_map)
        x_dir = permute(x_in, local_path)
        params = direction_params(x_dir, dw)
        ss = StateSpace(dw.a_diag, ScanMode.SELECTIVE)
        if position_map.is_all_keep:
            out = scan_recurrent(ss, params, x_dir, threads=threads, counter=counter)
        elif scan == "condensed":
            out = scan_condensed_naive(ss, x_dir, params, threads=threads, counter=counter)
        else:
            inp = AlignedScanInput(x_dir, params, PositionMap(scan_keep.size, scan_keep))
            out = scan_aligned(ss, inp, gap_strategy=gap_strategy, threads=threads, counter=counter)
        y_dirs.append(permute(out.y, inverse_path(local_path)))
        gated.append((out.y * permute(gate, local_path), local_path))

    tokens = cross_merge(gated) @ w.out_proj + t_prev

    if counter is not None:
        state = w.directions[0].b_proj.shape[1]
        counter.add_matmul("projections", batch * kept, embed, 2 * inner)
        counter.add_matmul("projections", batch * kept * len(paths), inner, 1 + 2 * state)
        counter.add("gating", batch * kept * inner * len(paths))
        counter.add_matmul("output_projection", batch * kept, inner, embed)
    return BlockOutput(tokens=tokens, y_dirs=y_dirs)


def model_forward(x0, cfg: ModelConfig, weights: Sequence[BlockWeights], *, scan: str = "aligned",
                  gap_strategy: str = "power", threads: int = 1,
                  counter: Optional[OpCounter] = None) -> ModelOutput:
    """Run every block, pruning after each scheduled layer; features are the final kept tokens."""
    x0 = as_tokens(x0, "x0")
    if x0.shape[1] != cfg.token_count:
        raise StructuralError(f"x0 has {x0.shape[1]} tokens, grid has {cfg.token_count}")
    if len(weights) != cfg.depth:
        raise StructuralError(f"{len(weights)} weight blocks for depth {cfg.depth}")

    paths = model_paths(cfg.grid, cfg.directions)
    global_map = PositionMap.all_keep(cfg.token_count)
    tokens = x0
    stage_maps, stage_scores, token_counts = [], [], []
    schedule = set(cfg.prune.prune_after_layers)

    for layer, w in enumerate(weights, start=1):
        token_counts.append(tokens.shape[1])
        out = block_forward(tokens, w, paths, global_map, scan=scan, gap_strategy=gap_strategy,
                            threads=threads, counter=counter)
        tokens = out.tokens
        if layer not in schedule:
            continue
        scores = importance_scores(out.y_dirs, cfg.prune.metric)
        local = select_tokens(scores, keep_count_for(cfg.prune.keep_rate, tokens.shape[1]))
        global_map = compose_maps(global_map, local)
        tokens = tokens[:, local.remaining_indices]
        stage_maps.append(global_map)
        stage_scores.append(scores)
        logger.info(f"Layer {layer}: pruned to {global_map.kept_count}/{cfg.token_count} tokens "
                    f"({cfg.prune.metric.value}, keep_rate={cfg.prune.keep_rate})")

    return ModelOutput(features=tokens, stage_maps=stage_maps, stage_scores=stage_scores,
                       token_counts=token_counts)
