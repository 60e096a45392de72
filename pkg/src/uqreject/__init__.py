"""Uncertainty-aware dropout MLP classifiers with classification with rejection."""

from .data import Dataset, ShiftSpec, TwoRegionSpec, gen_shifted, gen_two_region, load_csv, save_csv
from .estimators import DeepEnsembleClassifier, DropoutMLPClassifier, MCDropoutClassifier, Standardizer
from .nn_core import Mlp, MlpConfig, load_model, save_model, train
from .rejection import EvaluatedSet, RejectionCurve, partition, sweep_curve
from .uncertainty import PredictiveMatrix, UncertaintyTriple, batch_uncertainty, decompose, entropy_bits

__version__ = "0.1.0"
