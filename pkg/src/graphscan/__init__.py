"""Sequential detection of an emerging community in a stream of Erdős–Rényi graphs."""

from graphscan.detectors import (
    Alarm,
    CusumDetector,
    GlrScanDetector,
    GlrWindowConfig,
    cusum_step,
    glr_step,
    glr_unknown_p1_step,
    localize,
    mle_p1,
    run_cusum,
)
from graphscan.graph_model import (
    ChangeScenario,
    ErParams,
    GraphSnapshot,
    edge_count_within,
    make_rng,
    read_snapshots,
    sample_er,
    sample_sequence,
    write_snapshots,
)
from graphscan.likelihood import (
    DegenerateContrastError,
    EdgeCountMatrix,
    LlrWeights,
    bernoulli_kl,
    change_information,
    make_weights,
    null_drift,
    snapshot_llr,
    window_llr,
)
from graphscan.subgraph_scan import (
    CandidateSet,
    WeightedPairGraph,
    best_subgraph,
    brute_force_densest,
    enumerate_candidates,
    greedy_densest,
)

__version__ = "0.1.0"

__all__ = [
    "Alarm",
    "CandidateSet",
    "ChangeScenario",
    "CusumDetector",
    "DegenerateContrastError",
    "EdgeCountMatrix",
    "ErParams",
    "GlrScanDetector",
    "GlrWindowConfig",
    "GraphSnapshot",
    "LlrWeights",
    "WeightedPairGraph",
    "bernoulli_kl",
    "best_subgraph",
    "brute_force_densest",
    "change_information",
    "cusum_step",
    "edge_count_within",
    "enumerate_candidates",
    "glr_step",
    "glr_unknown_p1_step",
    "greedy_densest",
    "localize",
    "make_rng",
    "make_weights",
    "mle_p1",
    "null_drift",
    "read_snapshots",
    "run_cusum",
    "sample_er",
    "sample_sequence",
    "snapshot_llr",
    "window_llr",
    "write_snapshots",
]
