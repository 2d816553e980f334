import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.pruning import PositionMap
from ssm_prune.traversal import (
    Direction,
    ScanPath,
    TokenGrid,
    build_path,
    cross_merge,
    inverse_path,
    model_paths,
    permute,
    restrict_path,
)


@pytest.mark.parametrize("grid, direction, expected", [
    (TokenGrid(2, 2), Direction.FORWARD_ROW_MAJOR, [0, 1, 2, 3]),
    (TokenGrid(2, 2), Direction.BACKWARD_ROW_MAJOR, [3, 2, 1, 0]),
    (TokenGrid(2, 3), Direction.SNAKE_FORWARD, [0, 1, 2, 5, 4, 3]),
    (TokenGrid(2, 3), Direction.SNAKE_BACKWARD, [3, 4, 5, 2, 1, 0]),
])
def test_build_path(grid, direction, expected):
    assert build_path(grid, direction).perm.tolist() == expected


@pytest.mark.parametrize("height, width", [(3, 4), (5, 5), (1, 7)])
def test_snake_steps_are_grid_adjacent(height, width):
    perm = build_path(TokenGrid(height, width), Direction.SNAKE_FORWARD).perm
    rows, cols = np.divmod(perm, width)
    steps = np.abs(np.diff(rows)) + np.abs(np.diff(cols))
    assert np.all(steps == 1)


def test_bad_grid():
    with pytest.raises(DomainError):
        TokenGrid(0, 3)


def test_perm_must_be_bijection():
    with pytest.raises(StructuralError):
        ScanPath(Direction.FORWARD_ROW_MAJOR, [0, 0, 1])


def test_model_paths():
    assert len(model_paths(TokenGrid(2, 2))) == 2
    assert len(model_paths(TokenGrid(2, 2), "snake")) == 4
    with pytest.raises(DomainError):
        model_paths(TokenGrid(2, 2), "diagonal")


class TestPermute:
    def test_identity(self, rng):
        x = rng.normal(size=(2, 4, 3))
        assert_array_equal(permute(x, build_path(TokenGrid(2, 2), Direction.FORWARD_ROW_MAJOR)), x)

    def test_swap(self):
        x = np.array([[[1.0], [2.0]]])
        path = ScanPath(Direction.BACKWARD_ROW_MAJOR, [1, 0])
        assert permute(x, path)[0, :, 0].tolist() == [2.0, 1.0]

    def test_inverse_roundtrip(self, rng):
        x = rng.normal(size=(1, 12, 2))
        path = ScanPath(Direction.FORWARD_ROW_MAJOR, rng.permutation(12))
        assert_array_equal(permute(permute(x, path), inverse_path(path)), x)

    def test_length_mismatch(self, rng):
        with pytest.raises(StructuralError):
            permute(rng.normal(size=(1, 3, 1)), build_path(TokenGrid(2, 2), Direction.FORWARD_ROW_MAJOR))


class TestCrossMerge:
    def test_single_forward(self, rng):
        y = rng.normal(size=(1, 6, 2))
        path = build_path(TokenGrid(2, 3), Direction.FORWARD_ROW_MAJOR)
        assert_array_equal(cross_merge([(y, path)]), y)

    def test_two_token_forward_backward(self):
        grid = TokenGrid(1, 2)
        y = np.array([[[1.0], [10.0]]])
        merged = cross_merge([(y, build_path(grid, Direction.FORWARD_ROW_MAJOR)),
                              (y, build_path(grid, Direction.BACKWARD_ROW_MAJOR))])
        # backward scan position 0 is token 1, so token 0 receives 1 + 10
        assert merged[0, :, 0].tolist() == [11.0, 11.0]

    def test_zeros(self):
        grid = TokenGrid(2, 2)
        merged = cross_merge([(np.zeros((1, 4, 3)), p) for p in model_paths(grid, "snake")])
        assert_array_equal(merged, 0.0)

    def test_shape_mismatch(self):
        grid = TokenGrid(2, 2)
        fwd, bwd = model_paths(grid)
        with pytest.raises(StructuralError):
            cross_merge([(np.zeros((1, 4, 3)), fwd), (np.zeros((1, 4, 2)), bwd)])


class TestRestrictPath:
    def test_backward_over_kept(self):
        path = build_path(TokenGrid(2, 3), Direction.BACKWARD_ROW_MAJOR)
        pmap = PositionMap.from_indices(6, [0, 2, 5])
        local, scan_keep = restrict_path(path, pmap)
        # scan order visits tokens 5, 2, 0 which sit at ranks 2, 1, 0
        assert local.perm.tolist() == [2, 1, 0]
        assert scan_keep.tolist() == [True, False, False, True, False, True]

    def test_all_keep_is_unchanged(self):
        path = build_path(TokenGrid(3, 3), Direction.SNAKE_FORWARD)
        local, scan_keep = restrict_path(path, PositionMap.all_keep(9))
        assert_array_equal(local.perm, path.perm)
        assert scan_keep.all()

    def test_length_mismatch(self):
        with pytest.raises(StructuralError):
            restrict_path(build_path(TokenGrid(2, 2), Direction.FORWARD_ROW_MAJOR), PositionMap.all_keep(5))
