"""Attacks on randomized ensembles of classifiers.

A randomized ensemble answers each query with one member classifier sampled
with fixed probabilities.  This package implements the exact expected
accuracy of such ensembles, the adaptive projected-gradient attack family
against them, a consistent greedy boundary-crossing attack (exact for
binary linear members, linearization-driven for differentiable multiclass
members), and independent oracles that make the attacks' correctness
properties executable.  A desk-scale training lab and a CLI for experiment
sweeps round out the toolkit.
"""

from .geometry import (
    INF,
    DegenerateHyperplaneError,
    GeometryError,
    Hyperplane,
    InvalidNormError,
    LpNorm,
    MisclassifiedInputError,
    ProjectionResult,
    UnsupportedProjectionError,
    ZeroGradientError,
    dual_exponent,
    fooling_check,
    hyperplane_projection,
    project_ball,
    steepest_direction,
)
from .models import (
    BinaryAsMulticlass,
    BinaryLinearClassifier,
    DimensionMismatchError,
    InvalidLabelError,
    LabeledExample,
    LinearModel,
    MlpModel,
    MulticlassClassifier,
    bce_loss_grad,
    blc_decide,
    ce_loss_grad,
    load_model,
    mlp_jacobian,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
)
from .ensemble import (
    AttackResult,
    EnsembleError,
    RandomizedEnsemble,
    cross_robustness_matrix,
    expected_accuracy,
    is_adversarial,
    load_dataset,
    robust_accuracy,
    sample_member,
    save_dataset,
    singleton,
)
from .attacks import (
    AttackConfig,
    AttackError,
    apgd,
    apgd_logits,
    expected_loss,
    pgd,
    pgd_first,
    random_in_ball,
    randomized_pgd_eval,
    with_restarts,
)
from .arc import (
    ArcState,
    EmptyCandidateSetError,
    arc,
    arc_blc,
    closest_hyperplane,
    linearize,
)
from .oracles import (
    AuxiliaryStep,
    adversarial_exists_blc,
    auxiliary_sequence,
    blc_boundary_distances,
    brute_force_adversarial,
    existence_witness,
    inconsistency_instance,
    pgd_on_auxiliary,
)
from .lab import (
    ModelSpec,
    SyntheticDataset,
    TrainConfig,
    TrainingDivergedError,
    craft_adversarial_dataset,
    make_dataset,
    train,
    train_bat_pair,
)
from .seeding import derive_seed, rng_for, splitmix64

__version__ = "0.1.0"
