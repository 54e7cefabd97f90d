"""Change-point detection in physiological driving signals with greedy Gaussian segmentation."""

from .clustering import ClusterConfig, cluster_partition, extract_features, kmeans, prune_breakpoints
from .evaluation import CoverScore, Partition, baseline_covering, covering, jaccard
from .experiments import (
    Drive,
    DriveSuiteSpec,
    PipelineConfig,
    RunResult,
    SynthSpec,
    cluster_sweep,
    lambda_sweep,
    missing_data_sweep,
    run_dataset,
    run_drive,
    synth_dataset,
    synth_piecewise_gaussian,
)
from .ggs import (
    BreakpointSet,
    GgsConfig,
    SegmentStats,
    best_split,
    ggs,
    max_breakpoints_for,
    segment_loglik_term,
    segment_stats,
    total_objective,
)
from .timeseries import (
    Channel,
    FilterSpec,
    MaskSpec,
    UniformSeries,
    butterworth_lowpass,
    decimate,
    fuse_ground_truth,
    mask_and_impute,
    zscore,
)

__version__ = "0.1.0"
