"""Wall-clock benchmarking of model_forward in dense, aligned and condensed modes."""
import csv
import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence

from ssm_prune.aligned_scan import GAP_STRATEGIES
from ssm_prune.counters import OpCounter
from ssm_prune.errors import DomainError
from ssm_prune.model_config import ModelConfig
from ssm_prune.vim_model import BlockWeights, init_weights, make_inputs, model_forward

logger = logging.getLogger(__name__)

MODES = ("dense", "aligned", "condensed")
MIN_REPEATS = 5
MIN_WARMUP = 2
CSV_COLUMNS = ("config_digest", "mode", "median_ms", "speedup")


@dataclass
class BenchResult:
    config_digest: str
    mode: str
    keep_rate: float
    repeats: int
    warmup: int
    threads: int
    median_ms: float
    min_ms: float
    max_ms: float
    tokens_per_sec: float
    baseline_median_ms: float
    speedup: float
    timer_resolution_ok: bool
    work_deterministic: bool
    op_counts: dict
    gap_strategy: str = "power"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchResult":
        return cls(**data)


def time_calls(fn: Callable[[], object], repeats: int, warmup: int) -> List[float]:
    """Milliseconds per call on the monotonic perf counter, after ``warmup`` untimed calls."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1000.0)
    return times


def _forward_runner(cfg: ModelConfig, mode: str, threads: int, gap_strategy: str,
                    weights: Optional[Sequence[BlockWeights]]):
    run_cfg = cfg.without_pruning() if mode == "dense" else cfg
    scan = "condensed" if mode == "condensed" else "aligned"
    if weights is None:
        weights = init_weights(cfg)
    x0 = make_inputs(cfg)
    counts = []

    def run():
        counter = OpCounter()
        model_forward(x0, run_cfg, weights, scan=scan, gap_strategy=gap_strategy, threads=threads,
                      counter=counter)
        counts.append(counter.snapshot())

    return run, counts


def run_benchmark(cfg: ModelConfig, mode: str, *, repeats: int = MIN_REPEATS, warmup: int = MIN_WARMUP,
                  threads: int = 1, gap_strategy: str = "power",
                  weights: Optional[Sequence[BlockWeights]] = None,
                  baseline_median_ms: Optional[float] = None) -> BenchResult:
    """
    Time model_forward for one mode. Speedup is measured against a dense run
    of the same config in this session (timed here unless
    ``baseline_median_ms`` is given). ``weights`` default to init_weights(cfg).
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if gap_strategy not in GAP_STRATEGIES:
        raise DomainError(f"gap_strategy must be one of {GAP_STRATEGIES}, got {gap_strategy!r}")
    if repeats < MIN_REPEATS or warmup < MIN_WARMUP:
        raise DomainError(f"need repeats >= {MIN_REPEATS} and warmup >= {MIN_WARMUP}")

    logger.info(f"🚀 Benchmarking {mode} (digest {cfg.digest()}, repeats={repeats}, warmup={warmup})")
    run, counts = _forward_runner(cfg, mode, threads, gap_strategy, weights)
    times = time_calls(run, repeats, warmup)
    median_ms = statistics.median(times)

    if mode == "dense":
        baseline_median_ms = median_ms
    elif baseline_median_ms is None:
        dense_run, _ = _forward_runner(cfg, "dense", threads, gap_strategy, weights)
        baseline_median_ms = statistics.median(time_calls(dense_run, repeats, warmup))

    resolution_ms = time.get_clock_info("perf_counter").resolution * 1000.0
    timer_ok = median_ms > 1000.0 * resolution_ms
    if not timer_ok:
        logger.warning(f"⚠️ Median {median_ms:.6f} ms is too close to timer resolution {resolution_ms:.6f} ms")

    result = BenchResult(
        config_digest=cfg.digest(),
        mode=mode,
        keep_rate=1.0 if mode == "dense" else cfg.prune.keep_rate,
        repeats=repeats,
        warmup=warmup,
        threads=threads,
        median_ms=median_ms,
        min_ms=min(times),
        max_ms=max(times),
        tokens_per_sec=cfg.batch_size * cfg.token_count / (median_ms / 1000.0),
        baseline_median_ms=baseline_median_ms,
        speedup=baseline_median_ms / median_ms,
        timer_resolution_ok=timer_ok,
        work_deterministic=all(c == counts[0] for c in counts),
        op_counts=counts[0],
        gap_strategy=gap_strategy,
    )
    logger.info(f"✅ {mode}: median {median_ms:.2f} ms (min {result.min_ms:.2f}, max {result.max_ms:.2f}), "
                f"speedup {result.speedup:.3f}x")
    return result


def write_csv(results: List[BenchResult], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in results:
            writer.writerow([r.config_digest, r.mode, f"{r.median_ms:.4f}", f"{r.speedup:.4f}"])
    logger.info(f"Wrote {len(results)} rows to {path}")
