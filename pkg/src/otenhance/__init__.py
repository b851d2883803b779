"""Unpaired image enhancement as optimal transport.

A generator is trained to move low-quality images onto a high-quality
distribution (Wasserstein-1 critic with gradient penalty) while a
multi-scale structural-similarity transport cost tethers each output to
its source. Includes synthetic fundus-like corpora, a degradation
simulator, grade-matched pair resampling, and no-/full-reference
evaluation so the whole pipeline is verifiable at desk scale.
"""

from .imaging import (
    AugmentSpec,
    CorruptImageError,
    UnsupportedFormatError,
    augment,
    center_crop_resize,
    load_image,
    save_image,
    validate_image,
)
from .metrics import (
    ConfusionMatrix,
    QualityLabel,
    ScoredLabels,
    auroc,
    cohens_kappa,
    converted_ratio,
    ms_ssim,
    psnr,
    ssim,
)
from .networks import (
    CriticSpec,
    EcaGate,
    GeneratorSpec,
    build_critic,
    build_generator,
    eca_kernel_size,
    load_parameters,
    parameter_count,
    save_parameters,
)
from .objective import (
    DiscreteCloud,
    LossBreakdown,
    ObjectiveConfig,
    critic_objective,
    exact_monge_1d,
    generator_objective,
    gradient_penalty,
    transport_cost,
    w1_dual_estimate,
)
from .pairing import (
    FundusRecord,
    GradeMatchError,
    ManifestError,
    PairBatch,
    load_manifest,
    sample_pair_batch,
    sample_pair_records,
    write_manifest,
)
from .similarity import MsSsimParams, SsimParams, adapted_ms_params
from .simulate import DegradationSpec, SynthSpec, build_corpus, degrade, synth_fundus
from .training import (
    TrainConfig,
    ToyTrainConfig,
    enhance,
    lr_schedule,
    train,
    train_toy,
)
from .evaluation import (
    ClassifierConfig,
    EvalReport,
    ImageClassifier,
    evaluate_full_reference,
    evaluate_no_reference,
    train_quality_classifier,
)

__version__ = "0.1.0"
