"""
Discretization and reference scans for the diagonal state-space layer.

Tensors follow one layout throughout the package:

    tokens        (batch, length, channels)
    step params   (batch, length, channels, state), size-1 axes broadcast
    hidden state  (batch, channels, state)

Every (batch, channel) pair is an independent lane. Lanes may be split across
threads; within a lane the recurrence is strictly sequential.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from scipy.linalg import expm
from typing_extensions import Self

from ssm_prune.errors import DomainError, StructuralError, UnsupportedModeError

logger = logging.getLogger(__name__)

TokenTensor = npt.NDArray[np.float64]

# Below this |Δ·a| the ZOH factor (exp(Δa) - 1)/(Δa) is replaced by its limit 1.
SERIES_THRESHOLD = 1e-8


class ScanMode(Enum):
    LTI = "lti"
    SELECTIVE = "selective"


class Discretization(Enum):
    ZOH = "zoh"
    EULER = "euler"


def as_tokens(x, name="x") -> TokenTensor:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise StructuralError(f"{name} must be (batch, tokens, channels), got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Diagonal evolution matrix, one diagonal of length state_dim per channel."""

    a_diag: np.ndarray
    mode: ScanMode = ScanMode.SELECTIVE

    def __post_init__(self):
        a = np.asarray(self.a_diag, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise StructuralError(f"a_diag must be (channel_dim, state_dim) with both >= 1, got {a.shape}")
        if not np.all(a < 0):
            raise DomainError("a_diag entries must be strictly negative")
        object.__setattr__(self, "a_diag", a)
        object.__setattr__(self, "mode", ScanMode(self.mode))

    @property
    def channel_dim(self) -> int:
        return self.a_diag.shape[0]

    @property
    def state_dim(self) -> int:
        return self.a_diag.shape[1]


@dataclass(frozen=True, eq=False)
class StepParams:
    """
    Per-step Δ, B and C stacked along the token axis.

    delta is (batch, steps, channels) and b_in / c_out are
    (batch, steps, channels, state); batch and channel axes may have size 1.
    A StepParams of length L is the "sequence of per-step params" consumed by
    the scans; LTI params have length 1. The scans also accept a plain
    sequence of StepParams, which is stacked along the token axis.
    """

    delta: np.ndarray
    b_in: np.ndarray
    c_out: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.float64)
        b_in = np.asarray(self.b_in, dtype=np.float64)
        c_out = np.asarray(self.c_out, dtype=np.float64)
        if delta.ndim != 3 or b_in.ndim != 4 or c_out.ndim != 4:
            raise StructuralError(
                f"expected delta 3-D and b_in/c_out 4-D, got {delta.shape}, {b_in.shape}, {c_out.shape}"
            )
        if b_in.shape[-1] != c_out.shape[-1]:
            raise StructuralError("b_in and c_out must have the same state length")
        if not (delta.shape[1] == b_in.shape[1] == c_out.shape[1]):
            raise StructuralError("delta, b_in and c_out must have the same number of steps")
        if np.any(delta < 0):
            raise DomainError("delta must be nonnegative")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "b_in", b_in)
        object.__setattr__(self, "c_out", c_out)

    @classmethod
    def lti(cls, delta, b_in, c_out) -> Self:
        """One time-invariant step: delta scalar or (channels,), b/c (state,) or (channels, state)."""
        delta = np.asarray(delta, dtype=np.float64)
        b_in = np.atleast_1d(np.asarray(b_in, dtype=np.float64))
        c_out = np.atleast_1d(np.asarray(c_out, dtype=np.float64))
        delta = delta.reshape(1, 1, -1)
        b_in = b_in.reshape(1, 1, *(b_in.shape if b_in.ndim == 2 else (1, b_in.shape[-1])))
        c_out = c_out.reshape(1, 1, *(c_out.shape if c_out.ndim == 2 else (1, c_out.shape[-1])))
        return cls(delta, b_in, c_out)

    @classmethod
    def selective(cls, delta, b_in, c_out) -> Self:
        """Input-dependent steps: delta (batch, L, channels), b/c (batch, L, state) shared by channels."""
        b_in = np.asarray(b_in, dtype=np.float64)
        c_out = np.asarray(c_out, dtype=np.float64)
        if b_in.ndim != 3 or c_out.ndim != 3:
            raise StructuralError("selective b_in and c_out must be (batch, steps, state)")
        return cls(delta, b_in[:, :, None, :], c_out[:, :, None, :])

    @classmethod
    def stack(cls, steps: Sequence["StepParams"]) -> Self:
        """Concatenate along the token axis; size-1 batch and channel axes broadcast to the widest step."""
        if not steps:
            raise StructuralError("cannot stack an empty sequence of step params")
        parts = []
        for field in ("delta", "b_in", "c_out"):
            arrays = [getattr(s, field) for s in steps]
            shape = np.broadcast_shapes(*(a[:, :1].shape for a in arrays))
            parts.append(np.concatenate(
                [np.broadcast_to(a, (shape[0], a.shape[1]) + shape[2:]) for a in arrays], axis=1))
        return cls(*parts)

    def __len__(self) -> int:
        return self.delta.shape[1]

    def take(self, indices) -> Self:
        """Select steps along the token axis."""
        indices = np.asarray(indices, dtype=np.intp)
        return type(self)(self.delta[:, indices], self.b_in[:, indices], self.c_out[:, indices])


def as_step_params(params: Union[StepParams, Sequence[StepParams]]) -> StepParams:
    return params if isinstance(params, StepParams) else StepParams.stack(list(params))


@dataclass(frozen=True, eq=False)
class DiscretizedParams:
    a_bar: np.ndarray
    b_bar: np.ndarray


@dataclass(frozen=True, eq=False)
class ScanOutput:
    y: TokenTensor
    h_final: np.ndarray
    h_trace: Optional[np.ndarray] = None


def check_params(ss: StateSpace, p: StepParams):
    channels, state = ss.channel_dim, ss.state_dim
    for name, arr in (("b_in", p.b_in), ("c_out", p.c_out)):
        if arr.shape[-1] != state:
            raise StructuralError(f"{name} state length {arr.shape[-1]} != state_dim {state}")
        if arr.shape[2] not in (1, channels):
            raise StructuralError(f"{name} channel axis {arr.shape[2]} != channel_dim {channels}")
    if p.delta.shape[2] not in (1, channels):
        raise StructuralError(f"delta channel axis {p.delta.shape[2]} != channel_dim {channels}")


def discretize_zoh(ss: StateSpace, p: StepParams, rule: Discretization = Discretization.ZOH) -> DiscretizedParams:
    """Ā = exp(Δa); B̄ = (Δa)⁻¹(exp(Δa) − 1)·Δ·B, or Δ·B under the Euler rule."""
    check_params(ss, p)
    dt = p.delta[..., None]
    dA = dt * ss.a_diag
    a_bar = np.exp(dA)
    if Discretization(rule) is Discretization.EULER:
        return DiscretizedParams(a_bar, dt * p.b_in)
    small = np.abs(dA) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, dA)
    factor = np.where(small, 1.0, np.expm1(safe) / safe)
    return DiscretizedParams(a_bar, factor * dt * p.b_in)


def discretize_dense_zoh(a_matrix, b, delta):
    """ZOH for a dense (N, N) evolution matrix via the augmented matrix exponential."""
    a_matrix = np.asarray(a_matrix, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n = a_matrix.shape[0]
    if a_matrix.shape != (n, n) or b.shape != (n,):
        raise StructuralError(f"dense A must be square and match B, got {a_matrix.shape} and {b.shape}")
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    block = np.zeros((n + 1, n + 1))
    block[:n, :n] = a_matrix
    block[:n, n] = b
    e = expm(block * delta)
    return e[:n, :n], e[:n, n]


def scan_dense_lti(a_matrix, b, c, delta, x):
    """Single-channel LTI scan with a dense A; x is (batch, length)."""
    a_bar, b_bar = discretize_dense_zoh(a_matrix, b, delta)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros((x.shape[0], a_bar.shape[0]))
    y = np.zeros_like(x)
    for t in range(x.shape[1]):
        h = h @ a_bar.T + x[:, t, None] * b_bar
        y[:, t] = h @ c
    return y


# Channel axis of each kernel output: y (batch, L, D'), h (batch, D', N), trace (batch, L, D', N).
KERNEL_OUT_AXES = (2, 1, 2)


def map_lanes(kernel: Callable, arrays: Sequence[np.ndarray], threads: int = 1, out_axes=KERNEL_OUT_AXES):
    """
    Run ``kernel`` over channel chunks of ``arrays`` (channel axis 2) and
    concatenate each output along its channel axis in ``out_axes``. An axis
    of None marks a per-lane count that every chunk reports identically; the
    first chunk's value is returned.

    Lanes never interact, so the chunked result equals the single-chunk one
    bit for bit.
    """
    channels = arrays[0].shape[2]
    threads = max(1, min(int(threads), channels))
    if threads == 1:
        return kernel(*arrays)
    bounds = np.linspace(0, channels, threads + 1).astype(int)
    chunks = [
        [np.ascontiguousarray(a[:, :, lo:hi]) for a in arrays]
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda chunk: kernel(*chunk), chunks))
    merged = []
    for axis, parts in zip(out_axes, zip(*results)):
        if parts[0] is None or axis is None:
            merged.append(parts[0])
        else:
            merged.append(np.concatenate(parts, axis=axis))
    return tuple(merged)


def broadcast_steps(disc: DiscretizedParams, c_out: np.ndarray, x: TokenTensor, steps: int):
    """(a_bar, b_bar·x, c) broadcast to (batch, steps, channels, state)."""
    batch, _, channels = x.shape
    shape = (batch, steps, channels, disc.a_bar.shape[-1])
    try:
        a_bar = np.broadcast_to(disc.a_bar, shape)
        bx = np.broadcast_to(disc.b_bar, shape) * x[..., None]
        c = np.broadcast_to(c_out, shape)
    except ValueError as e:
        raise StructuralError(f"step params do not broadcast to {shape}: {e}") from None
    return a_bar, bx, c


def scan_recurrent(ss: StateSpace, params: Union[StepParams, Sequence[StepParams]], x, *,
                   keep_trace: bool = False, threads: int = 1,
                   rule: Discretization = Discretization.ZOH, counter=None) -> ScanOutput:
    """h_t = Ā_t h_{t-1} + B̄_t x_t, y_t = C_t h_t, from h_{-1} = 0."""
    x = as_tokens(x)
    params = as_step_params(params)
    if x.shape[2] != ss.channel_dim:
        raise StructuralError(f"x has {x.shape[2]} channels, state space has {ss.channel_dim}")
    length = x.shape[1]
    if ss.mode is ScanMode.SELECTIVE and len(params) != length:
        raise StructuralError(f"selective scan needs {length} step params, got {len(params)}")
    if ss.mode is ScanMode.LTI and len(params) != 1:
        raise StructuralError(f"LTI scan takes exactly one step params, got {len(params)}")
    disc = discretize_zoh(ss, params, rule)
    a_bar, bx, c = broadcast_steps(disc, params.c_out, x, length)
    y, h, trace = map_lanes(lambda a, b, cc: recurrence(a, b, cc, keep_trace), (a_bar, bx, c), threads)
    if counter is not None:
        counter.add_kept_steps(x.shape[0] * ss.channel_dim, length, ss.state_dim)
    logger.debug(f"scan_recurrent: mode={ss.mode.value} batch={x.shape[0]} length={length}")
    return ScanOutput(y=y, h_final=h, h_trace=trace)


def recurrence(a_bar, bx, c, keep_trace=False):
    """Sequential kernel shared by the dense and aligned scans."""
    batch, length, channels, state = bx.shape
    h = np.zeros((batch, channels, state))
    y = np.zeros((batch, length, channels))
    trace = np.zeros((batch, length, channels, state)) if keep_trace else None
    for t in range(length):
        h = a_bar[:, t] * h + bx[:, t]
        y[:, t] = np.sum(h * c[:, t], axis=-1)
        if keep_trace:
            trace[:, t] = h
    return y, h, trace


def _convolution_terms(ss: StateSpace, p: StepParams, length: int, rule: Discretization):
    """(K̄, Ā^k B̄) for k < length; K̄ is (batch, length, channels), Ā^k B̄ keeps the state axis."""
    if ss.mode is not ScanMode.LTI:
        raise UnsupportedModeError("the convolution form needs time-invariant parameters")
    if len(p) != 1:
        raise StructuralError(f"LTI convolution takes exactly one step params, got {len(p)}")
    disc = discretize_zoh(ss, p, rule)
    powers = disc.a_bar ** np.arange(length, dtype=np.float64)[None, :, None, None]
    weighted = powers * disc.b_bar
    return np.sum(p.c_out * weighted, axis=-1), weighted


def convolution_kernel(ss: StateSpace, p: StepParams, length: int, rule: Discretization = Discretization.ZOH):
    """K̄_k = Σ_n C_n Ā_n^k B̄_n for k < length, shape (batch, length, channels)."""
    return _convolution_terms(ss, p, length, rule)[0]


def scan_convolution(ss: StateSpace, p: StepParams, x, rule: Discretization = Discretization.ZOH) -> ScanOutput:
    """y = K̄ * x (causal), the global-convolution form of the LTI scan."""
    x = as_tokens(x)
    if ss.mode is not ScanMode.LTI:
        raise UnsupportedModeError("scan_convolution is only defined in LTI mode")
    if x.shape[2] != ss.channel_dim:
        raise StructuralError(f"x has {x.shape[2]} channels, state space has {ss.channel_dim}")
    batch, length, channels = x.shape
    kernel, weighted = _convolution_terms(ss, p, length, rule)
    kernel = np.broadcast_to(kernel, x.shape)
    y = np.empty_like(x)
    for b in range(batch):
        for d in range(channels):
            y[b, :, d] = np.convolve(x[b, :, d], kernel[b, :, d])[:length]
    # h_{L-1} = Σ_k Ā^k B̄ x_{L-1-k}
    h_final = np.sum(weighted * x[:, ::-1, :, None], axis=1)
    return ScanOutput(y=y, h_final=h_final)
