"""
Token importance scoring, keep-set selection and position maps.

Scores are always computed in original (grid) token order, so a single keep
decision applies to every scan direction.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Sequence, Tuple, Union

import numpy as np
from typing_extensions import Self

from ssm_prune.errors import ConfigError, DomainError, StructuralError
from ssm_prune.ssm_core import TokenTensor, as_tokens

logger = logging.getLogger(__name__)

DEFAULT_KEEP_RATE = 0.7


class ImportanceMetric(Enum):
    CLIPPED_MEAN = "clipped_mean"
    L1_NORM = "l1"
    L2_NORM = "l2"
    UNCLIPPED_MEAN = "unclipped"


@dataclass(frozen=True, eq=False)
class ImportanceScores:
    scores: np.ndarray  # (batch, tokens)
    metric: ImportanceMetric

    def reduced(self) -> np.ndarray:
        """Per-token scores shared by the whole batch (batch mean)."""
        return self.scores[0] if self.scores.shape[0] == 1 else self.scores.mean(axis=0)

    def to_json(self) -> dict:
        return {"metric": self.metric.value, "scores": self.scores.tolist()}


@dataclass(frozen=True, eq=False)
class PositionMap:
    original_len: int
    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=bool)
        if keep.shape != (self.original_len,):
            raise StructuralError(f"keep mask must have shape ({self.original_len},), got {keep.shape}")
        object.__setattr__(self, "keep", keep)

    @classmethod
    def all_keep(cls, n: int) -> Self:
        return cls(n, np.ones(n, dtype=bool))

    @classmethod
    def from_indices(cls, n: int, indices) -> Self:
        indices = np.asarray(indices, dtype=np.intp).reshape(-1)
        if indices.size and (np.any(np.diff(indices) <= 0)):
            raise StructuralError("remaining indices must be strictly increasing")
        if indices.size and (indices[0] < 0 or indices[-1] >= n):
            raise DomainError(f"remaining indices must lie in [0, {n})")
        keep = np.zeros(n, dtype=bool)
        keep[indices] = True
        return cls(n, keep)

    @classmethod
    def from_json(cls, indices, original_len: int) -> Self:
        return cls.from_indices(original_len, indices)

    def to_json(self) -> list:
        return [int(i) for i in self.remaining_indices]

    @cached_property
    def remaining_indices(self) -> np.ndarray:
        return np.flatnonzero(self.keep)

    @property
    def kept_count(self) -> int:
        return int(self.remaining_indices.size)

    @property
    def is_all_keep(self) -> bool:
        return self.kept_count == self.original_len

    def scatter(self, values, fill: float = 0.0) -> np.ndarray:
        """Place a (batch, K, ...) tensor of kept tokens onto the (batch, N, ...) grid."""
        values = np.asarray(values)
        if values.ndim < 2 or values.shape[1] != self.kept_count:
            raise StructuralError(f"expected {self.kept_count} kept tokens on axis 1, got shape {values.shape}")
        out = np.full((values.shape[0], self.original_len) + values.shape[2:], fill, dtype=values.dtype)
        out[:, self.remaining_indices] = values
        return out

    def __eq__(self, other):
        if not isinstance(other, PositionMap):
            return NotImplemented
        return self.original_len == other.original_len and np.array_equal(self.keep, other.keep)

    __hash__ = None

    def __repr__(self):
        return f"PositionMap(original_len={self.original_len}, remaining={self.to_json()})"


@dataclass(frozen=True)
class PruneConfig:
    keep_rate: float = DEFAULT_KEEP_RATE
    prune_after_layers: Tuple[int, ...] = ()
    metric: ImportanceMetric = ImportanceMetric.CLIPPED_MEAN

    def __post_init__(self):
        if not 0.0 < self.keep_rate <= 1.0:
            raise ConfigError(f"keep_rate must be in (0, 1], got {self.keep_rate}")
        layers = tuple(int(layer) for layer in self.prune_after_layers)
        if any(b <= a for a, b in zip(layers, layers[1:])):
            raise ConfigError(f"prune_after_layers must be strictly increasing, got {list(layers)}")
        if layers and layers[0] < 1:
            raise ConfigError("prune_after_layers are 1-based layer indices")
        object.__setattr__(self, "prune_after_layers", layers)
        try:
            object.__setattr__(self, "metric", ImportanceMetric(self.metric))
        except ValueError:
            raise ConfigError(f"unknown importance metric {self.metric!r}") from None


def _token_scores(y: np.ndarray, metric: ImportanceMetric) -> np.ndarray:
    channels = y.shape[-1]
    if metric is ImportanceMetric.CLIPPED_MEAN:
        values = np.maximum(y, 0.0)
    elif metric is ImportanceMetric.L1_NORM:
        values = np.abs(y)
    elif metric is ImportanceMetric.L2_NORM:
        values = y * y
    else:
        values = y
    # left-to-right accumulation over channels
    total = np.cumsum(values, axis=-1)[..., -1]
    mean = total / channels
    return np.sqrt(mean) if metric is ImportanceMetric.L2_NORM else mean


def importance_scores(y: Union[TokenTensor, Sequence[TokenTensor]],
                      metric: ImportanceMetric = ImportanceMetric.CLIPPED_MEAN) -> ImportanceScores:
    """
    Per-token importance from SSM outputs.

    ``y`` is one (batch, tokens, channels) tensor or a sequence of them, one
    per scan direction, all in original token order. Per-direction scores are
    averaged.
    """
    metric = ImportanceMetric(metric)
    outputs = [as_tokens(y, "y")] if isinstance(y, np.ndarray) else [as_tokens(v, "y") for v in y]
    if not outputs:
        raise StructuralError("importance_scores needs at least one output tensor")
    shape = outputs[0].shape
    if shape[-1] == 0:
        raise StructuralError("cannot score tokens with an empty channel dimension")
    if any(o.shape != shape for o in outputs):
        raise StructuralError("per-direction outputs must share one shape")
    per_direction = [_token_scores(o, metric) for o in outputs]
    scores = per_direction[0] if len(per_direction) == 1 else sum(per_direction) / len(per_direction)
    return ImportanceScores(scores=scores, metric=metric)


def keep_count_for(keep_rate: float, current_count: int) -> int:
    """round(keep_rate · current_count), halves rounded up, never below 1."""
    if not 0.0 < keep_rate <= 1.0:
        raise DomainError(f"keep_rate must be in (0, 1], got {keep_rate}")
    return max(1, int(math.floor(keep_rate * current_count + 0.5)))


def select_tokens(s: ImportanceScores, keep_count: int) -> PositionMap:
    """Keep the keep_count highest scores; ties keep the lower original index."""
    scores = s.reduced()
    n = scores.size
    if not 1 <= keep_count <= n:
        raise DomainError(f"keep_count must be in [1, {n}], got {keep_count}")
    order = np.argsort(-scores, kind="stable")
    keep = np.zeros(n, dtype=bool)
    keep[order[:keep_count]] = True
    logger.debug(f"select_tokens: kept {keep_count} of {n} ({s.metric.value})")
    return PositionMap(n, keep)


def compose_maps(outer: PositionMap, inner: PositionMap) -> PositionMap:
    """A map over outer's original space keeping what inner keeps of outer's survivors."""
    if inner.original_len != outer.kept_count:
        raise StructuralError(
            f"inner map covers {inner.original_len} tokens but outer keeps {outer.kept_count}"
        )
    keep = np.zeros(outer.original_len, dtype=bool)
    keep[outer.remaining_indices[inner.remaining_indices]] = True
    return PositionMap(outer.original_len, keep)
