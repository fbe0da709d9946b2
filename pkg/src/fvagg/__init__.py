"""Fisher-vector aggregation for image-level classification.

Fit a diagonal-GMM codebook over local descriptors, encode each image's
descriptor set as a normalized Fisher vector, classify with a linear
one-vs-rest SVM, and evaluate with balanced accuracy.
"""

from .classifier import (
    EvalReport,
    LinearModel,
    SvmConfig,
    balanced_accuracy,
    load_model,
    predict,
    save_model,
    train_svm,
    train_svm_with_history,
)
from .errors import (
    DataIOError,
    DegenerateDataError,
    DegenerateLabelsError,
    DegenerateSplitError,
    DoubleNormalizationError,
    EmptyInputError,
    FvaggError,
    InsufficientDataError,
    InvalidDescriptorError,
    InvalidInputError,
    LabelError,
    ShapeError,
)
from .fisher import (
    DecompositionReport,
    FisherVector,
    MixtureSpec,
    decomposition_experiment,
    encode_fv,
    load_fv,
    normalize_fv,
    save_fv,
)
from .gmm import (
    DescriptorSet,
    EmConfig,
    GaussianMixture,
    fit_gmm,
    fit_gmm_with_history,
    load_gmm,
    log_likelihood,
    posteriors,
    posteriors_matrix,
    sample_gmm,
    save_gmm,
)
from .pipeline import (
    DatasetManifest,
    ManifestRecord,
    PipelineConfig,
    SynthDecompositionConfig,
    load_descriptors,
    load_manifest,
    run_encode,
    run_evaluate,
    run_predict,
    run_synth_decomposition,
    run_train,
    sample_codebook_descriptors,
    save_descriptors,
    save_manifest,
)
from .pyramid import ScaleSchedule, default_schedule, parse_exponents, pool_scales

__version__ = "0.1.0"

__all__ = [
    "DataIOError",
    "DatasetManifest",
    "DecompositionReport",
    "DegenerateDataError",
    "DegenerateLabelsError",
    "DegenerateSplitError",
    "DescriptorSet",
    "DoubleNormalizationError",
    "EmConfig",
    "EmptyInputError",
    "EvalReport",
    "FisherVector",
    "FvaggError",
    "GaussianMixture",
    "InsufficientDataError",
    "InvalidDescriptorError",
    "InvalidInputError",
    "LabelError",
    "LinearModel",
    "ManifestRecord",
    "MixtureSpec",
    "PipelineConfig",
    "ScaleSchedule",
    "ShapeError",
    "SvmConfig",
    "SynthDecompositionConfig",
    "balanced_accuracy",
    "decomposition_experiment",
    "default_schedule",
    "encode_fv",
    "fit_gmm",
    "fit_gmm_with_history",
    "load_descriptors",
    "load_fv",
    "load_gmm",
    "load_manifest",
    "load_model",
    "log_likelihood",
    "normalize_fv",
    "parse_exponents",
    "pool_scales",
    "posteriors",
    "posteriors_matrix",
    "predict",
    "run_encode",
    "run_evaluate",
    "run_predict",
    "run_synth_decomposition",
    "run_train",
    "sample_codebook_descriptors",
    "sample_gmm",
    "save_descriptors",
    "save_fv",
    "save_gmm",
    "save_manifest",
    "save_model",
    "train_svm",
    "train_svm_with_history",
]
