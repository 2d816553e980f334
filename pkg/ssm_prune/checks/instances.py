"""Random problem instances shared by the verification suites and the tests."""
from dataclasses import dataclass

import numpy as np

from ssm_prune.aligned_scan import AlignedScanInput
from ssm_prune.pruning import PositionMap
from ssm_prune.ssm_core import ScanMode, StateSpace, StepParams


@dataclass
class CheckResult:
    name: str
    passed: bool
    instances: int
    detail: str = ""


def random_state_space(rng, mode, channels, state):
    return StateSpace(-rng.uniform(0.1, 2.0, size=(channels, state)), ScanMode(mode))


def random_params(rng, ss, steps, batch=1):
    channels, state = ss.channel_dim, ss.state_dim
    if ss.mode is ScanMode.LTI:
        return StepParams.lti(rng.uniform(0.01, 1.0, size=channels),
                              rng.normal(size=(channels, state)),
                              rng.normal(size=(channels, state)))
    return StepParams.selective(rng.uniform(0.01, 1.0, size=(batch, steps, channels)),
                                rng.normal(size=(batch, steps, state)),
                                rng.normal(size=(batch, steps, state)))


def random_map(rng, n, prune_fraction, interior=False):
    """Keep round((1 - prune_fraction)·n) tokens; ``interior`` forces a pruned token between two kept ones."""
    kept = max(1, n - int(round(prune_fraction * n)))
    if interior:
        kept = min(max(2, kept), n - 1)
    while True:
        indices = np.sort(rng.choice(n, size=kept, replace=False))
        if not interior or indices[-1] - indices[0] + 1 > kept:
            return PositionMap.from_indices(n, indices)


def random_instance(rng, mode, max_len=64, max_state=8, max_channels=8, max_fraction=0.9,
                    interior=False, batch=None):
    """(state space, aligned input) with N <= max_len tokens."""
    n = int(rng.integers(3 if interior else 1, max_len + 1))
    ss = random_state_space(rng, mode, int(rng.integers(1, max_channels + 1)), int(rng.integers(1, max_state + 1)))
    pmap = random_map(rng, n, rng.uniform(0.0, max_fraction), interior=interior)
    batch = batch or int(rng.integers(1, 3))
    params = random_params(rng, ss, pmap.kept_count, batch)
    x = rng.normal(size=(batch, pmap.kept_count, ss.channel_dim))
    return ss, AlignedScanInput(x, params, pmap)
