"""Closed-form gap jump h(q') = Ā^(q'-q) h(q) + B̄x(q') and the repeated-squaring path."""
import numpy as np

from ssm_prune.aligned_scan import scan_aligned
from ssm_prune.checks.instances import CheckResult, random_instance
from ssm_prune.ssm_core import ScanMode, discretize_zoh

INSTANCES = 100
TOLERANCE = 1e-12


def run(rng, threads=1):
    worst_jump, worst_power = 0.0, 0.0
    for _ in range(INSTANCES):
        ss, inp = random_instance(rng, ScanMode.LTI)
        walked = scan_aligned(ss, inp, gap_strategy="walk", keep_trace=True, threads=threads)
        powered = scan_aligned(ss, inp, gap_strategy="power", threads=threads)
        worst_power = max(worst_power, float(np.max(np.abs(walked.y - powered.y))))

        disc = discretize_zoh(ss, inp.params_remaining)
        a_bar, b_bar = disc.a_bar[:, 0], disc.b_bar[:, 0]
        q = inp.position_map.remaining_indices
        states = walked.h_trace[:, q]
        for i in range(1, q.size):
            jump = np.power(a_bar, int(q[i] - q[i - 1])) * states[:, i - 1]
            expected = jump + b_bar * inp.x_remaining[:, i, :, None]
            worst_jump = max(worst_jump, float(np.max(np.abs(states[:, i] - expected))))
    passed = worst_jump <= TOLERANCE and worst_power <= TOLERANCE
    return CheckResult("gap-power identity", passed, INSTANCES,
                       f"jump error {worst_jump:.3e}, power vs walk {worst_power:.3e}")
