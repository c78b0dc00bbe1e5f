"""Kernel learning from relative-distance (triplet) comparisons.

A labeler looks at three items and either names the outlier or declares the
three roughly equidistant.  Starting from an adaptive-bandwidth Gaussian
kernel, iterative Bregman projections under the log-det divergence produce
the closest PSD kernel satisfying those constraints (exactly, or with
quadratic slack penalties), which then drives kernel k-means and extends to
unseen points.
"""

from .clustering import ClusteringResult, KernelKMeans, adjusted_rand_index, kernel_kmeans
from .constraints import (
    Rank2Constraint,
    TripletConstraint,
    corrupt_triplets,
    expand_eq,
    expand_neq,
    expand_triplets,
    read_triplets,
    satisfy_epsilon,
    synthesize_from_labels,
    transform_rank2,
    violation,
    write_triplets,
)
from .datasets import (
    DataFormatError,
    Dataset,
    load_dataset,
    save_dataset,
    split_train_holdout,
    subsample_per_class,
)
from .extension import KernelExtension, build_extension, extended_kernel
from .kernels import (
    FactoredKernel,
    adaptive_bandwidths,
    gaussian_kernel,
    lift_kernel,
    low_rank_factorize,
)
from .learner import (
    LearnerConfig,
    LearnReport,
    RelativeKernelLearner,
    learn,
    satisfied_count,
)
from .projections import (
    EigenPair,
    alpha_hard,
    alpha_soft,
    alpha_soft_step,
    chol_identity_rank2,
    logdet_divergence,
    project,
    rank2_eigenvalues,
)

__version__ = "0.1.0"

__all__ = [
    "ClusteringResult",
    "KernelKMeans",
    "adjusted_rand_index",
    "kernel_kmeans",
    "Rank2Constraint",
    "TripletConstraint",
    "corrupt_triplets",
    "expand_eq",
    "expand_neq",
    "expand_triplets",
    "read_triplets",
    "satisfy_epsilon",
    "synthesize_from_labels",
    "transform_rank2",
    "violation",
    "write_triplets",
    "DataFormatError",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "split_train_holdout",
    "subsample_per_class",
    "KernelExtension",
    "build_extension",
    "extended_kernel",
    "FactoredKernel",
    "adaptive_bandwidths",
    "gaussian_kernel",
    "lift_kernel",
    "low_rank_factorize",
    "LearnerConfig",
    "LearnReport",
    "RelativeKernelLearner",
    "learn",
    "satisfied_count",
    "EigenPair",
    "alpha_hard",
    "alpha_soft",
    "alpha_soft_step",
    "chol_identity_rank2",
    "logdet_divergence",
    "project",
    "rank2_eigenvalues",
    "__version__",
]
