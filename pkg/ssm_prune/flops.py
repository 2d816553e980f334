"""
Closed-form operation counts for the block stack, in the same units as the
runtime OpCounter (1 MAC = one multiply paired with one add).

Per layer with K alive tokens, batch B, widths D / D', state N and M scan
directions:

    projections        B·K·D·2D'  +  M·B·K·D'·(1 + 2N)
    scan kept steps    M·B·K·D'·3N
    scan pruned steps  B·D'·N per state-decay multiply, summed over directions
    gating             M·B·K·D'
    output projection  B·K·D'·D

A walked run of g pruned positions costs g decay multiplies; under the
"power" gap strategy a long run costs one power by squaring plus the apply.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from ssm_prune.aligned_scan import GAP_STRATEGIES, gap_multiplies
from ssm_prune.counters import CATEGORIES, DECAY_MACS_PER_STATE, KEPT_STEP_MACS_PER_STATE
from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.model_config import ModelConfig
from ssm_prune.pruning import PositionMap, keep_count_for
from ssm_prune.traversal import model_paths

logger = logging.getLogger(__name__)


@dataclass
class LayerFlops:
    layer: int
    tokens: int
    projections: int = 0
    scan_kept: int = 0
    scan_pruned: int = 0
    gating: int = 0
    output_projection: int = 0

    @property
    def total(self) -> int:
        return sum(getattr(self, c) for c in CATEGORIES)


@dataclass
class FlopsReport:
    config_digest: str
    dense_layers: List[LayerFlops]
    pruned_layers: List[LayerFlops]
    pruned_steps_exact: bool
    scan: str = "aligned"
    gap_strategy: str = "walk"
    dense_totals: dict = field(default_factory=dict)
    pruned_totals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dense_totals = _totals(self.dense_layers)
        self.pruned_totals = _totals(self.pruned_layers)

    @property
    def dense_macs(self) -> int:
        return self.dense_totals["total"]

    @property
    def pruned_macs(self) -> int:
        return self.pruned_totals["total"]

    @property
    def reduction_percent(self) -> float:
        return 100.0 * (1.0 - self.pruned_macs / self.dense_macs)

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "scan": self.scan,
            "gap_strategy": self.gap_strategy,
            "pruned_steps_exact": self.pruned_steps_exact,
            "dense": {"macs": self.dense_macs, "flops": 2 * self.dense_macs, "by_category": self.dense_totals},
            "pruned": {"macs": self.pruned_macs, "flops": 2 * self.pruned_macs, "by_category": self.pruned_totals},
            "reduction_percent": self.reduction_percent,
            "layers": [asdict(layer) for layer in self.pruned_layers],
        }


def _totals(layers: Sequence[LayerFlops]) -> dict:
    totals = {c: sum(getattr(layer, c) for layer in layers) for c in CATEGORIES}
    totals["total"] = sum(totals[c] for c in CATEGORIES)
    return totals


def token_schedule(cfg: ModelConfig) -> List[int]:
    """Tokens entering each layer, 1..depth."""
    counts, alive = [], cfg.token_count
    schedule = set(cfg.prune.prune_after_layers)
    for layer in range(1, cfg.depth + 1):
        counts.append(alive)
        if layer in schedule:
            alive = keep_count_for(cfg.prune.keep_rate, alive)
    return counts


def layer_macs(cfg: ModelConfig, layer: int, tokens: int, decay_multiplies: int) -> LayerFlops:
    b, d, inner, state = cfg.batch_size, cfg.embed_dim, cfg.inner_dim, cfg.state_dim
    dirs = len(model_paths(cfg.grid, cfg.directions))
    return LayerFlops(
        layer=layer,
        tokens=tokens,
        projections=b * tokens * d * 2 * inner + dirs * b * tokens * inner * (1 + 2 * state),
        scan_kept=dirs * b * tokens * inner * state * KEPT_STEP_MACS_PER_STATE,
        scan_pruned=b * decay_multiplies * inner * state * DECAY_MACS_PER_STATE,
        gating=dirs * b * tokens * inner,
        output_projection=b * tokens * inner * d,
    )


def _decay_multiplies(cfg: ModelConfig, position_map: Optional[PositionMap], tokens: int,
                      gap_strategy: str) -> int:
    """Decay multiplies per lane of the aligned kernel in one layer, summed over directions."""
    paths = model_paths(cfg.grid, cfg.directions)
    if tokens == cfg.token_count:
        return 0
    if position_map is None:
        # one multiply per pruned position bounds both strategies
        return len(paths) * (cfg.token_count - tokens)
    multiplies = 0
    for path in paths:
        ranks = np.flatnonzero(position_map.keep[path.perm])
        gaps = np.diff(ranks, prepend=-1) - 1
        multiplies += sum(gap_multiplies(int(g), gap_strategy) for g in gaps if g)
    return multiplies


def count_flops(cfg: ModelConfig, stage_maps: Optional[Sequence[PositionMap]] = None,
                scan: str = "aligned", gap_strategy: str = "walk") -> FlopsReport:
    """
    Dense and pruned counts for ``cfg``.

    The aligned kernel stops after the last kept position of each direction
    and, under ``gap_strategy="power"``, squares its way across long runs, so
    the exact decay-multiply count depends on which tokens survive. Pass the
    realised ``stage_maps`` (one per scheduled layer, as returned by
    model_forward) together with the strategy that ran for exact counts;
    otherwise every pruned position is charged one multiply and
    ``pruned_steps_exact`` is False.
    """
    if gap_strategy not in GAP_STRATEGIES:
        raise DomainError(f"gap_strategy must be one of {GAP_STRATEGIES}, got {gap_strategy!r}")
    schedule = list(cfg.prune.prune_after_layers)
    if stage_maps is not None and len(stage_maps) != len(schedule):
        raise StructuralError(f"{len(stage_maps)} stage maps for {len(schedule)} scheduled stages")
    counts = token_schedule(cfg)
    dense, pruned = [], []
    stages_done = 0
    for layer, tokens in enumerate(counts, start=1):
        dense.append(layer_macs(cfg, layer, cfg.token_count, 0))
        active = stage_maps[stages_done - 1] if (stage_maps is not None and stages_done) else None
        if active is not None and active.kept_count != tokens:
            raise StructuralError(f"stage map keeps {active.kept_count} tokens, schedule expects {tokens}")
        multiplies = 0 if scan == "condensed" else _decay_multiplies(cfg, active, tokens, gap_strategy)
        pruned.append(layer_macs(cfg, layer, tokens, multiplies))
        if layer in cfg.prune.prune_after_layers:
            stages_done += 1
    report = FlopsReport(
        config_digest=cfg.digest(),
        dense_layers=dense,
        pruned_layers=pruned,
        pruned_steps_exact=(stage_maps is not None or scan == "condensed"
                            or all(t == cfg.token_count for t in counts)),
        scan=scan,
        gap_strategy=gap_strategy,
    )
    logger.debug(f"count_flops: dense={report.dense_macs} pruned={report.pruned_macs} "
                 f"reduction={report.reduction_percent:.2f}%")
    return report


def calibrate_keep_rate(cfg: ModelConfig, target_reduction_percent: float, xtol: float = 1e-6) -> float:
    """Per-stage keep rate whose (upper-bound) FLOPs reduction is closest to the target."""
    if not cfg.prune.prune_after_layers:
        raise DomainError("cannot calibrate a config without pruning stages")
    lowest = 1e-3
    ceiling = count_flops(cfg.with_keep_rate(lowest)).reduction_percent
    if not 0.0 < target_reduction_percent < ceiling:
        raise DomainError(f"target reduction must lie in (0, {ceiling:.2f}) for this schedule")

    def gap(rate):
        return count_flops(cfg.with_keep_rate(rate)).reduction_percent - target_reduction_percent

    rate = bisect(gap, lowest, 1.0, xtol=xtol)
    logger.info(f"Calibrated keep_rate={rate:.4f} for {target_reduction_percent}% reduction")
    return rate
