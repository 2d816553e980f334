"""Vectorised importance metrics against a scalar loop, plus scale invariance of the keep set."""
import math

import numpy as np

from ssm_prune.checks.instances import CheckResult
from ssm_prune.pruning import ImportanceMetric, importance_scores, keep_count_for, select_tokens

INSTANCES = 100
SCALES = (0.25, 2.0, 8.0)


def loop_score(row, metric):
    total = 0.0
    for v in row:
        v = float(v)
        if metric is ImportanceMetric.CLIPPED_MEAN:
            total += max(v, 0.0)
        elif metric is ImportanceMetric.L1_NORM:
            total += abs(v)
        elif metric is ImportanceMetric.L2_NORM:
            total += v * v
        else:
            total += v
    mean = total / len(row)
    return math.sqrt(mean) if metric is ImportanceMetric.L2_NORM else mean


def run(rng, threads=1):
    mismatches = 0
    example = importance_scores(np.array([[[1.0, -1.0, 2.0, 0.0]]])).scores[0, 0]
    for _ in range(INSTANCES):
        y = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, 33)), int(rng.integers(1, 17))))
        for metric in ImportanceMetric:
            scores = importance_scores(y, metric).scores
            expected = np.array([[loop_score(y[b, t], metric) for t in range(y.shape[1])]
                                 for b in range(y.shape[0])])
            if not np.array_equal(scores, expected):
                mismatches += 1
        keep = keep_count_for(0.5, y.shape[1])
        base = select_tokens(importance_scores(y), keep)
        for scale in SCALES:
            if select_tokens(importance_scores(scale * y), keep) != base:
                mismatches += 1
    passed = mismatches == 0 and example == 0.75
    return CheckResult("importance metrics", passed, INSTANCES,
                       f"{mismatches} mismatches, clipped mean of [1,-1,2,0] = {example}")
