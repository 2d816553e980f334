"""Multiply-accumulate counters filled in by the scans and the model blocks."""
from dataclasses import dataclass, field
from typing import Dict, Optional

# Kept step per lane: Ā·h, B̄·x and C·h, one MAC per state entry each.
KEPT_STEP_MACS_PER_STATE = 3
# Decay multiply per lane: one elementwise product over the state.
DECAY_MACS_PER_STATE = 1

CATEGORIES = ("projections", "scan_kept", "scan_pruned", "gating", "output_projection")


@dataclass
class OpCounter:
    macs: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    kept_steps: int = 0
    pruned_steps: int = 0
    decay_multiplies: int = 0

    def add(self, category: str, count: int):
        if category not in self.macs:
            raise KeyError(f"unknown counter category {category!r}")
        self.macs[category] += int(count)

    def add_matmul(self, category: str, rows: int, inner: int, outer: int):
        self.add(category, rows * inner * outer)

    def add_kept_steps(self, lanes: int, steps: int, state_dim: int):
        self.kept_steps += steps
        self.add("scan_kept", lanes * steps * state_dim * KEPT_STEP_MACS_PER_STATE)

    def add_pruned_steps(self, lanes: int, steps: int, state_dim: int, decay_multiplies: Optional[int] = None):
        """
        ``steps`` pruned positions crossed per lane, using ``decay_multiplies``
        state-decay multiplies per lane (one per position when walked).
        """
        multiplies = steps if decay_multiplies is None else int(decay_multiplies)
        self.pruned_steps += steps
        self.decay_multiplies += multiplies
        self.add("scan_pruned", lanes * multiplies * state_dim * DECAY_MACS_PER_STATE)

    @property
    def total(self) -> int:
        return sum(self.macs.values())

    def snapshot(self) -> dict:
        return {**self.macs, "kept_steps": self.kept_steps, "pruned_steps": self.pruned_steps,
                "decay_multiplies": self.decay_multiplies}
