"""All-keep maps reproduce the plain recurrent scan bit for bit."""
import numpy as np

from ssm_prune.aligned_scan import AlignedScanInput, scan_aligned
from ssm_prune.checks.instances import CheckResult, random_params, random_state_space
from ssm_prune.pruning import PositionMap
from ssm_prune.ssm_core import ScanMode, scan_recurrent

INSTANCES = 50


def run(rng, threads=1):
    failures = 0
    for i in range(INSTANCES):
        mode = ScanMode.LTI if i % 2 else ScanMode.SELECTIVE
        ss = random_state_space(rng, mode, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        n = int(rng.integers(1, 65))
        params = random_params(rng, ss, n)
        x = rng.normal(size=(1, n, ss.channel_dim))
        aligned = scan_aligned(ss, AlignedScanInput(x, params, PositionMap.all_keep(n)), threads=threads)
        dense = scan_recurrent(ss, params, x, threads=threads)
        if not (np.array_equal(aligned.y, dense.y) and np.array_equal(aligned.h_final, dense.h_final)):
            failures += 1
    return CheckResult("no-prune identity", failures == 0, INSTANCES, f"{failures} non-identical")
