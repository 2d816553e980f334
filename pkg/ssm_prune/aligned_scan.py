"""
Position-aligned scan over a pruned token sequence.

The kernel takes only the kept tokens plus a position map over the original
sequence. It walks the original positions in scan order: a kept position runs
the full update h <- Āh + B̄x and emits y = Ch, a pruned position only decays
the state, h <- Āh, so every kept token sees its predecessors at their
original distance.

Pruned positions reuse Ā of the closest preceding kept token (positions
before the first kept token hold a zero state, so their Ā is irrelevant).
Positions after the last kept token are not walked.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ssm_prune.errors import DomainError, StructuralError
from ssm_prune.pruning import PositionMap
from ssm_prune.ssm_core import (
    Discretization,
    KERNEL_OUT_AXES,
    ScanMode,
    ScanOutput,
    StateSpace,
    StepParams,
    TokenTensor,
    as_step_params,
    as_tokens,
    broadcast_steps,
    discretize_zoh,
    map_lanes,
    scan_recurrent,
)

logger = logging.getLogger(__name__)

GAP_STRATEGIES = ("walk", "power")


@dataclass(frozen=True, eq=False)
class AlignedScanInput:
    x_remaining: TokenTensor
    params_remaining: StepParams  # or a sequence of per-step StepParams
    position_map: PositionMap

    def __post_init__(self):
        x = as_tokens(self.x_remaining, "x_remaining")
        params = as_step_params(self.params_remaining)
        if self.position_map.kept_count == 0:
            raise DomainError("position map keeps no tokens")
        if x.shape[1] != self.position_map.kept_count:
            raise StructuralError(
                f"x_remaining has {x.shape[1]} tokens, map keeps {self.position_map.kept_count}"
            )
        object.__setattr__(self, "x_remaining", x)
        object.__setattr__(self, "params_remaining", params)


def power_by_squaring(base: np.ndarray, exponent: int) -> Tuple[np.ndarray, int]:
    """base**exponent elementwise, with the number of array multiplies it took."""
    result = np.ones_like(base)
    multiplies = 0
    while exponent:
        if exponent & 1:
            result = result * base
            multiplies += 1
        base = base * base
        multiplies += 1
        exponent >>= 1
    return result, multiplies


def squaring_multiplies(gap: int) -> int:
    """Decay multiplies to cross ``gap`` positions with one power plus the apply."""
    return gap.bit_length() + bin(gap).count("1") + 1


def gap_multiplies(gap: int, gap_strategy: str) -> int:
    """Decay multiplies the kernel spends on a run of ``gap`` pruned positions."""
    if gap_strategy == "power":
        return min(gap, squaring_multiplies(gap))
    return gap


def _check_steps(ss: StateSpace, params: StepParams, kept: int):
    if ss.mode is ScanMode.SELECTIVE and len(params) != kept:
        raise StructuralError(f"selective aligned scan needs {kept} step params, got {len(params)}")
    if ss.mode is ScanMode.LTI and len(params) != 1:
        raise StructuralError(f"LTI aligned scan takes exactly one step params, got {len(params)}")


# y, h and trace split on their channel axis; the multiply count is the same for every lane chunk.
ALIGNED_OUT_AXES = KERNEL_OUT_AXES + (None,)


def _aligned_kernel(a_bar, bx, c, remaining, gap_strategy, keep_trace):
    batch, kept, channels, state = bx.shape
    h = np.zeros((batch, channels, state))
    y = np.zeros((batch, kept, channels))
    span = int(remaining[-1]) + 1
    trace = np.zeros((batch, span, channels, state)) if keep_trace else None
    position = 0
    decay_multiplies = 0
    for j in range(kept):
        gap = int(remaining[j]) - position
        if gap:
            decay = a_bar[:, j - 1] if j else a_bar[:, 0]
            # short runs are walked
            if gap_strategy == "power" and not keep_trace and squaring_multiplies(gap) < gap:
                power, multiplies = power_by_squaring(decay, gap)
                h = power * h
                decay_multiplies += multiplies + 1
                position += gap
            else:
                for _ in range(gap):
                    h = decay * h
                    decay_multiplies += 1
                    if keep_trace:
                        trace[:, position] = h
                    position += 1
        h = a_bar[:, j] * h + bx[:, j]
        y[:, j] = np.sum(h * c[:, j], axis=-1)
        if keep_trace:
            trace[:, position] = h
        position += 1
    return y, h, trace, decay_multiplies


def scan_aligned(ss: StateSpace, inp: AlignedScanInput, *, gap_strategy: str = "walk",
                 keep_trace: bool = False, threads: int = 1,
                 rule: Discretization = Discretization.ZOH, counter=None) -> ScanOutput:
    """
    Scan the kept tokens at their original positions.

    ``gap_strategy="walk"`` decays the state one pruned position at a time;
    ``"power"`` collapses a run of g pruned positions into one multiply by
    Ā^g whenever squaring takes fewer multiplies than walking the run. With
    ``keep_trace`` the walk is always used and ``h_trace`` holds the state at
    every walked original position.

    The counter is charged the kept steps and the decay multiplies the
    kernel actually executed.
    """
    if gap_strategy not in GAP_STRATEGIES:
        raise DomainError(f"gap_strategy must be one of {GAP_STRATEGIES}, got {gap_strategy!r}")
    x = inp.x_remaining
    if x.shape[2] != ss.channel_dim:
        raise StructuralError(f"x has {x.shape[2]} channels, state space has {ss.channel_dim}")
    remaining = inp.position_map.remaining_indices
    kept = remaining.size
    _check_steps(ss, inp.params_remaining, kept)

    disc = discretize_zoh(ss, inp.params_remaining, rule)
    a_bar, bx, c = broadcast_steps(disc, inp.params_remaining.c_out, x, kept)
    y, h, trace, decay_multiplies = map_lanes(
        lambda a, b, cc: _aligned_kernel(a, b, cc, remaining, gap_strategy, keep_trace),
        (a_bar, bx, c), threads, out_axes=ALIGNED_OUT_AXES)

    crossed = int(remaining[-1]) + 1 - kept
    if counter is not None:
        lanes = x.shape[0] * ss.channel_dim
        counter.add_kept_steps(lanes, kept, ss.state_dim)
        counter.add_pruned_steps(lanes, crossed, ss.state_dim, decay_multiplies=decay_multiplies)
    skipped = inp.position_map.original_len - int(remaining[-1]) - 1
    logger.debug(f"scan_aligned: kept={kept} pruned_crossed={crossed} decay_multiplies={decay_multiplies} "
                 f"trailing_skipped={skipped} strategy={gap_strategy}")
    return ScanOutput(y=y, h_final=h, h_trace=trace)


def scan_condensed_naive(ss: StateSpace, x_remaining, params_remaining: StepParams, *,
                         keep_trace: bool = False, threads: int = 1,
                         rule: Discretization = Discretization.ZOH, counter=None) -> ScanOutput:
    """Scan the kept tokens as if they were contiguous, discarding their original gaps."""
    return scan_recurrent(ss, params_remaining, x_remaining, keep_trace=keep_trace,
                          threads=threads, rule=rule, counter=counter)


def expand_to_full(ss: StateSpace, inp: AlignedScanInput) -> Tuple[TokenTensor, StepParams]:
    """
    Full-length shadow inputs for the oracle: zero input at pruned positions,
    params forward-filled from the preceding kept token (the first kept
    token's params before it).
    """
    pmap = inp.position_map
    remaining = pmap.remaining_indices
    _check_steps(ss, inp.params_remaining, remaining.size)
    x = inp.x_remaining
    x_full = np.zeros((x.shape[0], pmap.original_len, x.shape[2]))
    x_full[:, remaining] = x
    if ss.mode is ScanMode.LTI:
        return x_full, inp.params_remaining
    source = np.searchsorted(remaining, np.arange(pmap.original_len), side="right") - 1
    return x_full, inp.params_remaining.take(np.maximum(source, 0))


def oracle_zeroed_scan(ss: StateSpace, x_full, params_full: StepParams, position_map: PositionMap, *,
                       keep_trace: bool = False, rule: Discretization = Discretization.ZOH) -> ScanOutput:
    """
    Dense scan over all N positions with the input zeroed at pruned positions.

    The decay h <- Āh still runs at every position. Restricted to the kept
    positions, ``y`` is the ground truth for scan_aligned.
    """
    x_full = as_tokens(x_full, "x_full")
    if x_full.shape[1] != position_map.original_len:
        raise StructuralError(f"x_full has {x_full.shape[1]} tokens, map covers {position_map.original_len}")
    zeroed = np.where(position_map.keep[None, :, None], x_full, 0.0)
    return scan_recurrent(ss, params_full, zeroed, keep_trace=keep_trace, rule=rule)
