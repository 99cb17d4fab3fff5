"""Topological airway localization with a tree-regularized HMM."""

from ._kernels import BACKEND
from .calibration import CalibrationReport, expected_calibration_error, fit_temperature, scaled_softmax
from .inference import (
    CostModel,
    DecodeResult,
    apply_boundary,
    data_term,
    exact_posteriors,
    marginals,
    path_energy,
    viterbi_decode,
)
from .metrics import EvalReport, evaluate, micro_auc, micro_prf, top_k_accuracy, tree_distance_stats
from .simulator import SimulatedSequence, WalkConfig, enumerate_map_oracle, simulate_walk
from .tree import AirwayTree, distance_matrix, load_tree, regularization_matrix
from .tuning import TuningProblem, TuningResult, brute_force_lambda, gradient_descent_lambda, tuning_objective

__version__ = "0.1.0"
