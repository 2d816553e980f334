"""LTI convolution form against the recurrent scan."""
import numpy as np

from ssm_prune.checks.instances import CheckResult, random_params, random_state_space
from ssm_prune.ssm_core import ScanMode, scan_convolution, scan_recurrent

INSTANCES = 100
MAX_LEN = 32
TOLERANCE = 1e-10


def run(rng, threads=1):
    worst = 0.0
    for _ in range(INSTANCES):
        ss = random_state_space(rng, ScanMode.LTI, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        params = random_params(rng, ss, 1)
        x = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, MAX_LEN + 1)), ss.channel_dim))
        reference = scan_recurrent(ss, params, x, threads=threads).y
        conv = scan_convolution(ss, params, x).y
        scale = max(np.max(np.abs(reference)), 1e-300)
        worst = max(worst, float(np.max(np.abs(conv - reference)) / scale))
    return CheckResult("convolution equivalence", worst <= TOLERANCE, INSTANCES,
                       f"max relative error {worst:.3e}")
