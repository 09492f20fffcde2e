"""Attacks and exact oracles for randomized mixtures of classifiers.

Core pieces: lp threat models and projections (geometry), binary linear
mixtures and their losses (linear), the adversarial-lattice oracle
(lattice), the binary-linear attacks (attacks), multiclass score models
and attacks (multiclass), the experiment harness (experiments), and the
command-line interface (cli).
"""

__version__ = "0.1.0"

from .attacks import (
    AttackResult,
    PgdConfig,
    arc_linear,
    eol_pgd_linear,
    lca_linear,
    lemma_pgd_config,
    pgd_minimize,
)
from .geometry import ThreatModel, descent_step, lp_norm, project_ball
from .lattice import (
    AdversarialLattice,
    FeasibilityResult,
    ResourceLimitError,
    at_least_feasible,
    build_lattice,
    maximal_elements,
    optimal_attack_bruteforce,
)
from .linear import (
    LabeledPoint,
    LinearClassifier,
    Mixture,
    decide,
    margin_and_direction,
    sample_random_mixture,
    srh,
    trial_rng,
    zero_one_mixture,
)
from .multiclass import (
    MlpModel,
    MulticlassMixture,
    arc_greedy_multiclass,
    eol_pgd_multiclass,
    lca_multiclass,
    loe_pgd_multiclass,
    rev_hinge_multiclass,
    srh_multiclass,
    target_label,
)

__all__ = [
    "AdversarialLattice",
    "AttackResult",
    "FeasibilityResult",
    "LabeledPoint",
    "LinearClassifier",
    "MlpModel",
    "Mixture",
    "MulticlassMixture",
    "PgdConfig",
    "ResourceLimitError",
    "ThreatModel",
    "arc_greedy_multiclass",
    "arc_linear",
    "at_least_feasible",
    "build_lattice",
    "decide",
    "descent_step",
    "eol_pgd_linear",
    "eol_pgd_multiclass",
    "lca_linear",
    "lca_multiclass",
    "lemma_pgd_config",
    "loe_pgd_multiclass",
    "lp_norm",
    "margin_and_direction",
    "maximal_elements",
    "optimal_attack_bruteforce",
    "pgd_minimize",
    "project_ball",
    "rev_hinge_multiclass",
    "sample_random_mixture",
    "srh",
    "srh_multiclass",
    "target_label",
    "trial_rng",
    "zero_one_mixture",
]
