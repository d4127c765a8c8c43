"""Robust prediction-based treatment prescription.

Regularized LAD regression per treatment group, LAD-weighted K-NN outcome
prediction, a softmax prescription policy with a closed-form freeze
threshold, and an evaluation harness with synthetic counterfactual data.
"""
__version__ = "0.1.0"

from .data import Dataset, PatientRecord, TreatmentGroup, group_by_treatment, load_csv, normalize, split
from .errors import (
    ConstantTarget, DataError, EmptyGroup, MissingColumn, NonNumericCell, NotConverged,
    RobustRxError, UnknownTreatmentLabel,
)
from .knn import KnnPredictor, apply_k_rule, fit_k_rule, predict_knn
from .policy import DETERMINISTIC, RANDOMIZED, PolicyConfig, policy_probs
from .rlad import RobustLinearModel, SolverOptions, fit_rlad, rlad_objective
from .threshold import prescribe, threshold_deterministic, threshold_randomized
