"""Heteroscedastic classification under input-dependent label noise.

Class labels are modelled as the argmax of latent utilities (deterministic
location plus input-dependent noise); training smooths the argmax with a
temperature softmax and estimates probabilities by reparameterized Monte
Carlo. The package bundles the minimal autodiff needed to train small MLPs
with that head, controlled label-corruption datasets, noisy-label training
baselines, calibration/bias diagnostics, and a config-driven experiment
harness.
"""

from .autodiff import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    apply_primitive,
    backward,
    finite_difference_gradient,
    tempered_softmax,
)
from .data import (
    CorruptionSpec,
    NoisyDataset,
    corrupt_labels,
    effective_noise_rate,
    load_and_split,
    preset_spec,
    read_dataset,
    synth_clusters,
    write_dataset,
)
from .experiment import (
    ConfigError,
    DEFAULT_TEMPERATURE_GRID,
    ExperimentConfig,
    RunResult,
    config_hash,
    diagnose,
    report,
    run_experiment,
    sweep_temperature,
)
from .head import (
    BinaryHead,
    HetHead,
    HetHeadConfig,
    UtilitySample,
    init_binary_head,
    init_het_head,
    latent_utilities,
    mc_class_probs,
    predict_binary_mc,
    predict_proba_hard,
    predict_proba_mc,
)
from .metrics import (
    BiasEstimate,
    GradVarTracker,
    MetricsReport,
    ZeroVarianceError,
    apply_platt,
    estimate_bias,
    evaluate,
    expected_calibration_error,
    fit_platt_temperature,
    paired_t_test,
)
from .rng import (
    NoiseFamily,
    SeededRng,
    derive_seed,
    normal_cdf,
    reparameterize,
    sample_standard,
)
from .training import (
    BootstrapConfig,
    CoTeachingConfig,
    MLPSpec,
    MentorNetConfig,
    OptimizerConfig,
    TrainConfig,
    TrainedModel,
    TrainingDiverged,
    bootstrap_targets,
    coteaching_select,
    fit,
    hetero_regression_nll,
    mc_nll_loss,
    mentornet_het_equivalence_check,
    selfpaced_weights,
)

__version__ = "0.1.0"
