"""Residential load-profile clustering with a validation-index lab.

The package turns 15-minute smart-meter readings into unit-norm median
daily profiles, reduces them with PCA (elbow-chosen dimension), clusters
them with fuzzy c-means (partition-coefficient-chosen k), scores the
result with five validation indices, and probes how those indices react
to controlled perturbations: outlier toggling, density injection, and
diameter shrinkage. Everything is seeded and bit-reproducible.
"""

from .cvi import (
    CoincidentCentroidsError,
    CviReport,
    HIGHER_IS_BETTER,
    INDEX_NAMES,
    PartitionGeometry,
    calinski_harabasz,
    davies_bouldin,
    dunn,
    evaluate_all,
    evaluate_labels,
    partition_geometry,
    silhouette,
    xie_beni,
)
from .fcm import (
    ClusterModel,
    FcmConfig,
    estimate_fuzzifier,
    fit_fcm,
    fuzzy_partition_coefficient,
    harden,
    select_cluster_count,
)
from .pca import (
    DegenerateDataError,
    NoElbowError,
    PcaModel,
    cumulative_explained_variance,
    fit_pca,
    project,
    select_dimensions_elbow,
)
from .perturb import (
    ExperimentReport,
    ExperimentRow,
    PerturbConfig,
    RejectionBudgetError,
    density_experiment,
    diameter_experiment,
    experiment_from_json,
    experiment_to_csv,
    experiment_to_json,
    find_singleton_clusters,
    inject_density,
    judge_hypothesis,
    outlier_experiment,
    shrink_clusters,
)
from .pipeline import (
    RunConfig,
    RunManifest,
    SynthPlan,
    emit_report,
    load_run_config,
    run_experiment,
    run_full,
    run_pipeline,
)
from .profiles import (
    CsvFormatError,
    DailyProfile,
    MissingSlotError,
    ProfileMatrix,
    ReadingSeries,
    SynthSpec,
    ZeroProfileError,
    generate_synthetic,
    l2_normalize,
    median_daily_profile,
    parse_readings,
    profiles_from_readings,
    read_profiles_csv,
    synthetic_templates,
    write_profiles_csv,
)
from .rng import derive_stream, master_stream
from .version import __version__

__all__ = [
    "CoincidentCentroidsError",
    "CviReport",
    "HIGHER_IS_BETTER",
    "INDEX_NAMES",
    "PartitionGeometry",
    "calinski_harabasz",
    "davies_bouldin",
    "dunn",
    "evaluate_all",
    "evaluate_labels",
    "partition_geometry",
    "silhouette",
    "xie_beni",
    "ClusterModel",
    "FcmConfig",
    "estimate_fuzzifier",
    "fit_fcm",
    "fuzzy_partition_coefficient",
    "harden",
    "select_cluster_count",
    "DegenerateDataError",
    "NoElbowError",
    "PcaModel",
    "cumulative_explained_variance",
    "fit_pca",
    "project",
    "select_dimensions_elbow",
    "ExperimentReport",
    "ExperimentRow",
    "PerturbConfig",
    "RejectionBudgetError",
    "density_experiment",
    "diameter_experiment",
    "experiment_from_json",
    "experiment_to_csv",
    "experiment_to_json",
    "find_singleton_clusters",
    "inject_density",
    "judge_hypothesis",
    "outlier_experiment",
    "shrink_clusters",
    "RunConfig",
    "RunManifest",
    "SynthPlan",
    "emit_report",
    "load_run_config",
    "run_experiment",
    "run_full",
    "run_pipeline",
    "CsvFormatError",
    "DailyProfile",
    "MissingSlotError",
    "ProfileMatrix",
    "ReadingSeries",
    "SynthSpec",
    "ZeroProfileError",
    "generate_synthetic",
    "l2_normalize",
    "median_daily_profile",
    "parse_readings",
    "profiles_from_readings",
    "read_profiles_csv",
    "synthetic_templates",
    "write_profiles_csv",
    "derive_stream",
    "master_stream",
    "__version__",
]
