"""Tool-augmented, coarse-to-fine anomaly detection for univariate time series."""

from .backends import BackendConfig, CallableBackend, HeuristicBackend, ReplayBackend
from .baselines import fft_ad_score, spectral_residual_score, threshold_mu_3sigma
from .knowledge import KnowledgeStore
from .metrics import MetricsReport, best_f1, dataset_report, point_metrics, verdicts_to_labels
from .protocol import AnomalyVerdict
from .reward import RewardBreakdown, RewardConfig, score_episode
from .series import TimeSeries, Window, detrend, load_series, normalize, preprocess, segment_windows
from .synth import AnomalyKind, Injection, SynthSpec, generate_synthetic
from .workflow import EpisodeTrace, WorkflowConfig, merge_verdicts, replay_episode, run_dataset, run_episode

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "CallableBackend",
    "HeuristicBackend",
    "ReplayBackend",
    "fft_ad_score",
    "spectral_residual_score",
    "threshold_mu_3sigma",
    "KnowledgeStore",
    "MetricsReport",
    "best_f1",
    "dataset_report",
    "point_metrics",
    "verdicts_to_labels",
    "AnomalyVerdict",
    "RewardBreakdown",
    "RewardConfig",
    "score_episode",
    "TimeSeries",
    "Window",
    "detrend",
    "load_series",
    "normalize",
    "preprocess",
    "segment_windows",
    "AnomalyKind",
    "Injection",
    "SynthSpec",
    "generate_synthetic",
    "EpisodeTrace",
    "WorkflowConfig",
    "merge_verdicts",
    "replay_episode",
    "run_dataset",
    "run_episode",
]
