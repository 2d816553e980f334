import math

import numpy as np
import pytest

from ssm_prune.model_config import ModelConfig
from ssm_prune.pruning import PruneConfig
from ssm_prune.ssm_core import ScanMode, StateSpace, StepParams
from ssm_prune.traversal import TokenGrid


@pytest.fixture
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.delenv("ALIGNED_SCAN_SEED", raising=False)
    monkeypatch.delenv("ALIGNED_SCAN_THREADS", raising=False)
    monkeypatch.delenv("ALIGNED_SCAN_LOG_LEVEL", raising=False)
    monkeypatch.setenv("ALIGNED_SCAN_LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def half_decay():
    """LTI system with Ā = 0.5, B̄ = 0.5, C = 1 (a = -1, Δ = ln 2, B = 1)."""
    ss = StateSpace(np.array([[-1.0]]), ScanMode.LTI)
    params = StepParams.lti(math.log(2.0), 1.0, 1.0)
    return ss, params


@pytest.fixture
def toy_config():
    return ModelConfig(depth=2, embed_dim=8, inner_dim=16, state_dim=4, grid=TokenGrid(4, 4),
                       prune=PruneConfig(keep_rate=0.5, prune_after_layers=(1,)))
