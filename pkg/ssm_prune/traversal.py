"""Scan orders over a 2D token grid and merging of per-direction outputs."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.ssm_core import TokenTensor, as_tokens

logger = logging.getLogger(__name__)


class Direction(Enum):
    FORWARD_ROW_MAJOR = "forward"
    BACKWARD_ROW_MAJOR = "backward"
    SNAKE_FORWARD = "snake_forward"
    SNAKE_BACKWARD = "snake_backward"


DIRECTION_SETS = {
    "vim": (Direction.FORWARD_ROW_MAJOR, Direction.BACKWARD_ROW_MAJOR),
    "snake": (Direction.FORWARD_ROW_MAJOR, Direction.BACKWARD_ROW_MAJOR,
              Direction.SNAKE_FORWARD, Direction.SNAKE_BACKWARD),
}


@dataclass(frozen=True)
class TokenGrid:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DomainError(f"grid dims must be >= 1, got {self.height}x{self.width}")

    @property
    def token_count(self) -> int:
        return self.height * self.width


@dataclass(frozen=True, eq=False)
class ScanPath:
    """perm[i] is the original token index visited at scan position i."""

    direction: Direction
    perm: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise StructuralError("perm must be a permutation of 0..N-1")
        object.__setattr__(self, "perm", perm)

    def __len__(self) -> int:
        return self.perm.size


def build_path(grid: TokenGrid, direction: Direction) -> ScanPath:
    direction = Direction(direction)
    order = np.arange(grid.token_count).reshape(grid.height, grid.width)
    if direction in (Direction.SNAKE_FORWARD, Direction.SNAKE_BACKWARD):
        order = order.copy()
        order[1::2] = order[1::2, ::-1]
    perm = order.ravel()
    if direction in (Direction.BACKWARD_ROW_MAJOR, Direction.SNAKE_BACKWARD):
        perm = perm[::-1]
    return ScanPath(direction, perm)


def inverse_path(path: ScanPath) -> ScanPath:
    return ScanPath(path.direction, np.argsort(path.perm))


def model_paths(grid: TokenGrid, directions: str = "vim") -> List[ScanPath]:
    if directions not in DIRECTION_SETS:
        raise DomainError(f"unknown direction set {directions!r}, expected one of {sorted(DIRECTION_SETS)}")
    return [build_path(grid, d) for d in DIRECTION_SETS[directions]]


def permute(x, path: ScanPath) -> TokenTensor:
    """Output position i holds input token perm[i]."""
    x = as_tokens(x)
    if x.shape[1] != len(path):
        raise StructuralError(f"tensor has {x.shape[1]} tokens, path has {len(path)}")
    return x[:, path.perm]


def cross_merge(outputs: Sequence[Tuple[TokenTensor, ScanPath]]) -> TokenTensor:
    """Inverse-permute every directional output back to grid order and sum."""
    if not outputs:
        raise StructuralError("cross_merge needs at least one output")
    shape = np.shape(outputs[0][0])
    merged = None
    for y, path in outputs:
        if np.shape(y) != shape:
            raise StructuralError(f"cannot merge outputs of shapes {shape} and {np.shape(y)}")
        restored = permute(y, inverse_path(path))
        merged = restored if merged is None else merged + restored
    return merged


def restrict_path(path: ScanPath, position_map) -> Tuple[ScanPath, np.ndarray]:
    """
    The path over the kept tokens only, plus the keep mask in scan order.

    Kept tokens are indexed by their rank among the map's remaining indices,
    which is the order they are stored in after pruning.
    """
    if len(path) != position_map.original_len:
        raise StructuralError(f"path covers {len(path)} tokens, map covers {position_map.original_len}")
    rank = np.full(position_map.original_len, -1, dtype=np.intp)
    rank[position_map.remaining_indices] = np.arange(position_map.kept_count)
    scan_keep = position_map.keep[path.perm]
    return ScanPath(path.direction, rank[path.perm[scan_keep]]), scan_keep
