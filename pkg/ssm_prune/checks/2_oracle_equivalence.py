"""Aligned scan against the zeroed-input dense oracle at kept positions."""
import numpy as np

from ssm_prune.aligned_scan import GAP_STRATEGIES, expand_to_full, oracle_zeroed_scan, scan_aligned
from ssm_prune.checks.instances import CheckResult, random_instance
from ssm_prune.ssm_core import ScanMode

INSTANCES = 200
TOLERANCE = 1e-12


def run(rng, threads=1):
    worst = 0.0
    for i in range(INSTANCES):
        mode = ScanMode.LTI if i % 2 else ScanMode.SELECTIVE
        ss, inp = random_instance(rng, mode)
        aligned = scan_aligned(ss, inp, gap_strategy=GAP_STRATEGIES[(i // 2) % 2], threads=threads)
        x_full, params_full = expand_to_full(ss, inp)
        oracle = oracle_zeroed_scan(ss, x_full, params_full, inp.position_map)
        kept = oracle.y[:, inp.position_map.remaining_indices]
        worst = max(worst, float(np.max(np.abs(aligned.y - kept))))
    return CheckResult("oracle equivalence", worst <= TOLERANCE, INSTANCES, f"max abs diff {worst:.3e}")
