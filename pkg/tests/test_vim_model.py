import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ssm_prune.aligned_scan import AlignedScanInput, expand_to_full, oracle_zeroed_scan
from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.model_config import ModelConfig
from ssm_prune.pruning import (
    PositionMap,
    PruneConfig,
    compose_maps,
    importance_scores,
    keep_count_for,
    select_tokens,
)
from ssm_prune.ssm_core import ScanMode, StateSpace, scan_recurrent
from ssm_prune.traversal import TokenGrid, cross_merge, model_paths, permute, restrict_path
from ssm_prune.vim_model import (
    DT_MAX,
    DT_MIN,
    BlockWeights,
    DirectionWeights,
    block_forward,
    direction_params,
    init_weights,
    make_inputs,
    model_forward,
    silu,
    softplus,
)


def reference_block(t_prev, w, paths):
    x_in = t_prev @ w.in_proj
    gate = silu(t_prev @ w.gate_proj)
    gated = []
    for path, dw in zip(paths, w.directions):
        x_dir = permute(x_in, path)
        out = scan_recurrent(StateSpace(dw.a_diag, ScanMode.SELECTIVE), direction_params(x_dir, dw), x_dir)
        gated.append((out.y * permute(gate, path), path))
    return cross_merge(gated) @ w.out_proj + t_prev


class TestInitWeights:
    def test_same_seed_is_bitwise(self, toy_config):
        first, second = init_weights(toy_config), init_weights(toy_config)
        for a, b in zip(first, second):
            assert_array_equal(a.in_proj, b.in_proj)
            assert_array_equal(a.directions[1].delta_bias, b.directions[1].delta_bias)

    def test_different_seed_differs(self, toy_config):
        other = dataclasses.replace(toy_config, seed=1)
        assert not np.array_equal(init_weights(toy_config)[0].in_proj, init_weights(other)[0].in_proj)

    def test_finite_and_delta_range(self, toy_config):
        for block in init_weights(toy_config):
            assert np.all(np.isfinite(block.in_proj)) and np.all(np.isfinite(block.out_proj))
            for dw in block.directions:
                dt = softplus(dw.delta_bias)
                assert np.all(dt >= DT_MIN * (1 - 1e-9)) and np.all(dt <= DT_MAX * (1 + 1e-9))
                assert np.all(dw.a_diag < 0)
                assert dw.b_proj.shape == (16, 4)


class TestBlockForward:
    def test_zero_output_projection_passes_residual(self, toy_config):
        w = init_weights(toy_config)[0]
        silent = dataclasses.replace(w, out_proj=np.zeros_like(w.out_proj))
        x0 = make_inputs(toy_config)
        assert_array_equal(block_forward(x0, silent, model_paths(toy_config.grid)).tokens, x0)

    def test_all_keep_matches_reference(self, toy_config):
        w = init_weights(toy_config)[0]
        paths = model_paths(toy_config.grid)
        x0 = make_inputs(toy_config)
        out = block_forward(x0, w, paths, PositionMap.all_keep(16))
        assert np.max(np.abs(out.tokens - reference_block(x0, w, paths))) <= 1e-12

    def test_two_token_hand_unroll(self):
        # a = -1 and Δ = softplus(0) = ln 2 give Ā = 0.5 and B̄ = 0.5·B with B = C = x
        one = np.ones((1, 1))
        dw = DirectionWeights(delta_proj=np.zeros((1, 1)), delta_bias=np.zeros(1), b_proj=one,
                              c_proj=one, a_diag=-one)
        w = BlockWeights(in_proj=one, gate_proj=one, out_proj=one, directions=(dw, dw))
        t = np.array([[[1.0], [2.0]]])
        out = block_forward(t, w, model_paths(TokenGrid(1, 2)))
        # forward: y = [0.5, 4.5], backward: y = [1.5, 4.0]
        silu1, silu2 = 1 / (1 + math.exp(-1)), 2 / (1 + math.exp(-2))
        assert_allclose(out.tokens[0, :, 0], [2.0 * silu1 + 1.0, 8.5 * silu2 + 2.0], rtol=1e-12)

    def test_pruned_gap_strategies_agree(self, toy_config):
        w = init_weights(toy_config)[0]
        pmap = PositionMap.from_indices(16, [0, 3, 4, 9, 10, 15])
        t = make_inputs(toy_config)[:, pmap.remaining_indices]
        walk = block_forward(t, w, model_paths(toy_config.grid), pmap, gap_strategy="walk")
        power = block_forward(t, w, model_paths(toy_config.grid), pmap, gap_strategy="power")
        assert np.max(np.abs(walk.tokens - power.tokens)) <= 1e-12

    def test_condensed_differs_after_pruning(self, toy_config):
        w = init_weights(toy_config)[0]
        pmap = PositionMap.from_indices(16, [0, 5, 10, 15])
        t = make_inputs(toy_config)[:, pmap.remaining_indices]
        aligned = block_forward(t, w, model_paths(toy_config.grid), pmap)
        condensed = block_forward(t, w, model_paths(toy_config.grid), pmap, scan="condensed")
        assert np.max(np.abs(aligned.tokens - condensed.tokens)) > 1e-9

    def test_map_mismatch(self, toy_config):
        w = init_weights(toy_config)[0]
        with pytest.raises(StructuralError):
            block_forward(make_inputs(toy_config)[:, :8], w, model_paths(toy_config.grid),
                          PositionMap.from_indices(16, [0, 1]))

    def test_unknown_scan(self, toy_config):
        with pytest.raises(DomainError):
            block_forward(make_inputs(toy_config), init_weights(toy_config)[0],
                          model_paths(toy_config.grid), scan="sparse")


class TestModelForward:
    def test_keep_rate_one(self, toy_config):
        cfg = toy_config.with_keep_rate(1.0)
        out = model_forward(make_inputs(cfg), cfg, init_weights(cfg))
        assert all(m.is_all_keep for m in out.stage_maps)
        assert out.features.shape[1] == 16

    def test_depth_four_single_stage(self):
        cfg = ModelConfig(depth=4, embed_dim=8, inner_dim=16, state_dim=4, grid=TokenGrid(4, 4),
                          prune=PruneConfig(keep_rate=0.5, prune_after_layers=(2,)))
        out = model_forward(make_inputs(cfg), cfg, init_weights(cfg))
        assert out.features.shape == (1, 8, 8)
        assert out.stage_maps[0].kept_count == 8
        assert out.token_counts == [16, 16, 8, 8]

    def test_deterministic(self, toy_config):
        weights = init_weights(toy_config)
        x0 = make_inputs(toy_config)
        first = model_forward(x0, toy_config, weights)
        second = model_forward(x0, toy_config, weights)
        assert_array_equal(first.features, second.features)
        assert first.stage_maps == second.stage_maps

    def test_snake_directions(self, toy_config):
        cfg = dataclasses.replace(toy_config, directions="snake")
        weights = init_weights(cfg)
        assert len(weights[0].directions) == 4
        assert model_forward(make_inputs(cfg), cfg, weights).features.shape == (1, 8, 8)

    def test_wrong_token_count(self, toy_config):
        with pytest.raises(StructuralError):
            model_forward(np.zeros((1, 15, 8)), toy_config, init_weights(toy_config))

    def test_wrong_depth(self, toy_config):
        with pytest.raises(StructuralError):
            model_forward(make_inputs(toy_config), toy_config, init_weights(toy_config)[:1])

    def test_zero_output_projections_keep_surviving_inputs(self):
        cfg = ModelConfig(depth=4, embed_dim=8, inner_dim=16, state_dim=4, grid=TokenGrid(4, 4),
                          prune=PruneConfig(keep_rate=0.5, prune_after_layers=(1, 3)))
        silent = [dataclasses.replace(w, out_proj=np.zeros_like(w.out_proj)) for w in init_weights(cfg)]
        x0 = make_inputs(cfg)
        out = model_forward(x0, cfg, silent)
        assert out.features.shape == (1, 4, 8)
        assert_array_equal(out.features, x0[:, out.stage_maps[-1].remaining_indices])

    def test_vim_s_token_grid_four_stages(self):
        cfg = ModelConfig(depth=5, embed_dim=8, inner_dim=8, state_dim=2, grid=TokenGrid(14, 14),
                          prune=PruneConfig(keep_rate=0.7, prune_after_layers=(1, 2, 3, 4)))
        out = model_forward(make_inputs(cfg), cfg, init_weights(cfg))
        assert out.token_counts == [196, 137, 96, 67, 47]
        assert [m.kept_count for m in out.stage_maps] == [137, 96, 67, 47]
        assert out.features.shape == (1, 47, 8)
        assert out.stage_maps[-1].original_len == 196


@pytest.mark.parametrize("directions", ["vim", "snake"])
def test_aligned_blocks_match_zeroed_oracle(directions):
    """
    Replay model_forward layer by layer with full-length shadow inputs and
    check every direction of the first block after each pruning stage
    against the zeroed-input oracle.
    """
    cfg = ModelConfig(depth=4, embed_dim=8, inner_dim=16, state_dim=4, grid=TokenGrid(4, 4),
                      prune=PruneConfig(keep_rate=0.5, prune_after_layers=(1, 2)), directions=directions)
    weights = init_weights(cfg)
    x0 = make_inputs(cfg)
    reference = model_forward(x0, cfg, weights)
    paths = model_paths(cfg.grid, cfg.directions)

    tokens, global_map, stage_maps, checked = x0, PositionMap.all_keep(cfg.token_count), [], 0
    for layer, w in enumerate(weights, start=1):
        out = block_forward(tokens, w, paths, global_map)
        if stage_maps and layer - 1 in cfg.prune.prune_after_layers:
            x_in = tokens @ w.in_proj
            for path, dw, y_dir in zip(paths, w.directions, out.y_dirs):
                local_path, scan_keep = restrict_path(path, global_map)
                x_dir = permute(x_in, local_path)
                ss = StateSpace(dw.a_diag, ScanMode.SELECTIVE)
                inp = AlignedScanInput(x_dir, direction_params(x_dir, dw), PositionMap(scan_keep.size, scan_keep))
                oracle = oracle_zeroed_scan(ss, *expand_to_full(ss, inp), inp.position_map)
                kept_oracle = oracle.y[:, inp.position_map.remaining_indices]
                assert np.max(np.abs(permute(y_dir, local_path) - kept_oracle)) <= 1e-10
            checked += 1
        tokens = out.tokens
        if layer in cfg.prune.prune_after_layers:
            local = select_tokens(importance_scores(out.y_dirs, cfg.prune.metric),
                                  keep_count_for(cfg.prune.keep_rate, tokens.shape[1]))
            global_map = compose_maps(global_map, local)
            tokens = tokens[:, local.remaining_indices]
            stage_maps.append(global_map)

    assert checked == 2
    assert stage_maps == reference.stage_maps
    assert_array_equal(tokens, reference.features)
