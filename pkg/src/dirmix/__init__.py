"""Finite mixtures with pluggable mixing-probability update rules,
specialized to multilayer unsupervised image segmentation."""

from .densities import (
    GaussianDensity,
    GaussianParams,
    StudentDensity,
    StudentParams,
    gaussian_logpdf,
    gaussian_m_step,
    student_logpdf,
    student_m_step,
)
from .em import EMConfig, FitResult, apply_update_rule, e_step, log_posterior, run_em
from .errors import DirmixError
from .estimators import DirichletMixture, MultilayerSegmenter, StackPreprocessor
from .fmap import (
    FeatureStack,
    LabelMap,
    LayerGrid,
    read_fmap,
    read_labelmap_pgm,
    write_fmap,
    write_labelmap_pgm,
    write_probmap_pgm,
)
from .metrics import adjusted_rand_index, boundary_f_score
from .multilayer import (
    KernelSpec,
    ModelVariant,
    MultilayerConfig,
    MultilayerState,
    extract_labels,
    fit_multilayer,
    update_model_a,
    update_model_b,
    update_model_c,
)
from .preprocess import (
    PcaModel,
    augment_with_layer1,
    pca_fit,
    pca_reconstruct,
    pca_transform,
    preprocess_stack,
)
from .rules import (
    ColumnSumRule,
    ConvolutionRule,
    IdentityRule,
    PrecisionWeightedRule,
    SpatialSmoothingRule,
    UpdateRule,
    make_rule,
)
from .spatial import (
    GaussianKernel,
    local_mean,
    local_variance,
    resample_avg_down,
    resample_nn_up,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnSumRule",
    "ConvolutionRule",
    "DirichletMixture",
    "DirmixError",
    "EMConfig",
    "FeatureStack",
    "FitResult",
    "GaussianDensity",
    "GaussianKernel",
    "GaussianParams",
    "IdentityRule",
    "KernelSpec",
    "LabelMap",
    "LayerGrid",
    "ModelVariant",
    "MultilayerConfig",
    "MultilayerSegmenter",
    "MultilayerState",
    "PcaModel",
    "PrecisionWeightedRule",
    "SpatialSmoothingRule",
    "StackPreprocessor",
    "StudentDensity",
    "StudentParams",
    "UpdateRule",
    "adjusted_rand_index",
    "apply_update_rule",
    "augment_with_layer1",
    "boundary_f_score",
    "e_step",
    "extract_labels",
    "fit_multilayer",
    "gaussian_logpdf",
    "gaussian_m_step",
    "local_mean",
    "local_variance",
    "log_posterior",
    "make_rule",
    "pca_fit",
    "pca_reconstruct",
    "pca_transform",
    "preprocess_stack",
    "read_fmap",
    "read_labelmap_pgm",
    "resample_avg_down",
    "resample_nn_up",
    "run_em",
    "student_logpdf",
    "student_m_step",
    "update_model_a",
    "update_model_b",
    "update_model_c",
    "write_fmap",
    "write_labelmap_pgm",
    "write_probmap_pgm",
]
