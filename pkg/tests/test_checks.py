import numpy as np
import pytest

from ssm_prune.checks.instances import random_instance, random_map
from ssm_prune.checks.run_checks import get_numbered_checks, load_check
from ssm_prune.ssm_core import ScanMode


def test_checks_are_ordered():
    checks = get_numbered_checks()
    assert len(checks) == 7
    assert [int(c.split("_", 1)[0]) for c in checks] == list(range(1, 8))


@pytest.mark.parametrize("check", get_numbered_checks())
def test_suite_passes(check):
    result = load_check(check).run(np.random.default_rng([7, 7]))
    assert result.passed, result.detail
    assert result.instances >= 1


def test_interior_map_has_a_gap(rng):
    for _ in range(50):
        pmap = random_map(rng, int(rng.integers(3, 30)), rng.uniform(0.0, 0.9), interior=True)
        q = pmap.remaining_indices
        assert q[-1] - q[0] + 1 > q.size


def test_random_instance_shapes(rng):
    ss, inp = random_instance(rng, ScanMode.SELECTIVE, max_len=10, batch=2)
    assert inp.x_remaining.shape == (2, inp.position_map.kept_count, ss.channel_dim)
    assert len(inp.params_remaining) == inp.position_map.kept_count
    assert inp.position_map.original_len <= 10
