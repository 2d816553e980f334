"""End-to-end block stack invariants on a toy config."""
import dataclasses

import numpy as np

from ssm_prune.checks.instances import CheckResult
from ssm_prune.model_config import ModelConfig
from ssm_prune.pruning import PruneConfig, keep_count_for
from ssm_prune.traversal import TokenGrid, model_paths
from ssm_prune.vim_model import block_forward, init_weights, make_inputs, model_forward


def toy_config(seed):
    return ModelConfig(depth=4, embed_dim=8, inner_dim=16, state_dim=4, grid=TokenGrid(4, 4),
                       prune=PruneConfig(keep_rate=0.5, prune_after_layers=(1, 3)), seed=seed)


def stagewise_counts(n, keep_rate, stages):
    counts = [n]
    for _ in range(stages):
        counts.append(keep_count_for(keep_rate, counts[-1]))
    return counts


def run(rng, threads=1):
    problems = []
    cfg = toy_config(int(rng.integers(0, 2**31)))
    weights = init_weights(cfg)
    x0 = make_inputs(cfg)

    silent = dataclasses.replace(weights[0], out_proj=np.zeros_like(weights[0].out_proj))
    out = block_forward(x0, silent, model_paths(cfg.grid), threads=threads)
    if not np.array_equal(out.tokens, x0):
        problems.append("residual identity")

    first = model_forward(x0, cfg, weights, threads=threads)
    second = model_forward(x0, cfg, weights, threads=threads)
    if not np.array_equal(first.features, second.features):
        problems.append("determinism")
    if any(b > a for a, b in zip(first.token_counts, first.token_counts[1:])):
        problems.append("pruning monotonicity")
    for earlier, later in zip(first.stage_maps, first.stage_maps[1:]):
        if np.any(later.keep & ~earlier.keep):
            problems.append("nested keep sets")
    if [m.kept_count for m in first.stage_maps] != [8, 4]:
        problems.append("toy stage counts")
    if stagewise_counts(196, 0.7, 4) != [196, 137, 96, 67, 47]:
        problems.append("stagewise arithmetic")

    return CheckResult("model invariants", not problems, 1,
                       "all invariants hold" if not problems else f"failed: {', '.join(problems)}")
