"""Position-aligned token pruning for state space model scans."""
from ssm_prune.aligned_scan import AlignedScanInput, oracle_zeroed_scan, scan_aligned, scan_condensed_naive
from ssm_prune.pruning import ImportanceMetric, PositionMap, importance_scores, select_tokens
from ssm_prune.ssm_core import ScanMode, StateSpace, StepParams, scan_convolution, scan_recurrent

__all__ = [
    "AlignedScanInput",
    "ImportanceMetric",
    "PositionMap",
    "ScanMode",
    "StateSpace",
    "StepParams",
    "importance_scores",
    "oracle_zeroed_scan",
    "scan_aligned",
    "scan_condensed_naive",
    "scan_convolution",
    "scan_recurrent",
    "select_tokens",
]
