"""Orderless ensemble ranking for video-based person re-identification."""

from .aggregate import (
    AggregatedRanking,
    CapacityError,
    CEMCConfig,
    PairwisePreference,
    aggregate,
    aggregate_cemc,
    aggregate_count,
    aggregate_kemeny_exact,
    consensus_cost,
    kendall_distance,
    majority,
    pairwise_counts,
)
from .bound import SyntheticRankerConfig, hoeffding_bound, simulate_consistency, simulate_pairwise_error
from .core import INFINITE, Dataset, FrameEmbedding, VideoSequence, shuffle, subsample
from .io import SyntheticSpec, generate_synthetic, read_dataset, write_dataset
from .metrics import cmc, evaluate, mean_average_precision
from .ranking import BaseRanking, DistanceMode, all_base_rankings, base_ranking, euclidean, frame_to_video_distance

__version__ = "0.1.0"
