from .clustering import (
    ClusterAssignment,
    StratumProfile,
    gower_distance,
    gower_matrix,
    pam_cluster,
    select_cluster_count,
    silhouette_widths,
    stratum_profiles,
)
from .pipeline import bootstrap_share, default_assignment
from .replicates import ReplicateSet, make_replicates, replicate_top_shares, strata_as_clusters
from .variance import (
    Z95,
    coefficient_of_variation,
    combined_error,
    confidence_interval,
    imputation_error,
    percentile_interval,
    sampling_error,
    sampling_ratio,
)
