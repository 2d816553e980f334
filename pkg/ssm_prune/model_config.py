"""
Model / pruning configuration and its JSON file format.

    {
      "depth": 24, "embed_dim": 384, "inner_dim": 768, "state_dim": 16,
      "grid": {"height": 14, "width": 14},
      "batch_size": 1, "seed": 0, "directions": "vim",
      "prune": {"keep_rate": 0.7, "prune_after_layers": [5, 10, 15, 20], "metric": "clipped_mean"}
    }
"""
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field

from typing_extensions import Self

from ssm_prune.errors import ConfigError, SSMPruneError
from ssm_prune.pruning import DEFAULT_KEEP_RATE, ImportanceMetric, PruneConfig
from ssm_prune.settings import get_seed_override
from ssm_prune.traversal import DIRECTION_SETS, TokenGrid

logger = logging.getLogger(__name__)

REQUIRED_KEYS = {"depth", "embed_dim", "inner_dim", "state_dim", "grid"}
OPTIONAL_KEYS = {"batch_size", "seed", "directions", "prune"}
PRUNE_KEYS = {"keep_rate", "prune_after_layers", "metric"}


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelConfig:
    depth: int
    embed_dim: int
    inner_dim: int
    state_dim: int
    grid: TokenGrid
    prune: PruneConfig = field(default_factory=PruneConfig)
    seed: int = 0
    batch_size: int = 1
    directions: str = "vim"

    def __post_init__(self):
        for name in ("depth", "embed_dim", "inner_dim", "state_dim", "batch_size"):
            _positive_int(name, getattr(self, name))
        if self.directions not in DIRECTION_SETS:
            raise ConfigError(f"directions must be one of {sorted(DIRECTION_SETS)}, got {self.directions!r}")
        if self.prune.prune_after_layers and self.prune.prune_after_layers[-1] > self.depth:
            raise ConfigError(
                f"prune_after_layers {list(self.prune.prune_after_layers)} exceed depth {self.depth}"
            )

    @property
    def token_count(self) -> int:
        return self.grid.token_count

    def with_keep_rate(self, keep_rate: float) -> Self:
        return dataclasses.replace(self, prune=dataclasses.replace(self.prune, keep_rate=keep_rate))

    def without_pruning(self) -> Self:
        return dataclasses.replace(self, prune=dataclasses.replace(self.prune, prune_after_layers=()))

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "embed_dim": self.embed_dim,
            "inner_dim": self.inner_dim,
            "state_dim": self.state_dim,
            "grid": {"height": self.grid.height, "width": self.grid.width},
            "batch_size": self.batch_size,
            "seed": self.seed,
            "directions": self.directions,
            "prune": {
                "keep_rate": self.prune.keep_rate,
                "prune_after_layers": list(self.prune.prune_after_layers),
                "metric": self.prune.metric.value,
            },
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def config_from_dict(data: dict, apply_env: bool = True) -> ModelConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    missing = REQUIRED_KEYS - data.keys()
    unknown = data.keys() - REQUIRED_KEYS - OPTIONAL_KEYS
    if missing:
        raise ConfigError(f"config is missing keys: {sorted(missing)}")
    if unknown:
        raise ConfigError(f"config has unknown keys: {sorted(unknown)}")
    prune = data.get("prune", {})
    if not isinstance(prune, dict) or prune.keys() - PRUNE_KEYS:
        raise ConfigError(f"prune must be an object with keys among {sorted(PRUNE_KEYS)}")
    grid = data["grid"]
    if not isinstance(grid, dict) or set(grid) != {"height", "width"}:
        raise ConfigError("grid must be an object with exactly 'height' and 'width'")

    seed = data.get("seed", 0)
    if apply_env:
        override = get_seed_override()
        if override is not None:
            logger.info(f"Seed {seed} overridden by ALIGNED_SCAN_SEED={override}")
            seed = override

    try:
        return ModelConfig(
            depth=data["depth"],
            embed_dim=data["embed_dim"],
            inner_dim=data["inner_dim"],
            state_dim=data["state_dim"],
            grid=TokenGrid(_positive_int("grid.height", grid["height"]),
                           _positive_int("grid.width", grid["width"])),
            prune=PruneConfig(
                keep_rate=float(prune.get("keep_rate", DEFAULT_KEEP_RATE)),
                prune_after_layers=tuple(prune.get("prune_after_layers", ())),
                metric=ImportanceMetric(prune.get("metric", ImportanceMetric.CLIPPED_MEAN.value)),
            ),
            seed=int(seed),
            batch_size=data.get("batch_size", 1),
            directions=data.get("directions", "vim"),
        )
    except ConfigError:
        raise
    except (SSMPruneError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid config: {e}") from None


def load_config(path, apply_env: bool = True) -> ModelConfig:
    """Read a JSON config file; ALIGNED_SCAN_SEED overrides its seed."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    cfg = config_from_dict(data, apply_env=apply_env)
    logger.info(f"Loaded config {path} (digest {cfg.digest()})")
    return cfg
