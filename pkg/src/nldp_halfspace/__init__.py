"""Non-interactive locally private halfspace learning aided by public unlabeled data.

Two pipelines are provided: a Massart-noise pipeline (private committee,
public pseudo-labels, robust SGD) and a Gaussian-mixture self-training
pipeline (private logistic pseudo-labeler, then self-training on public
data).  :mod:`nldp_halfspace.harness` wires both to data generation,
evaluation and reporting.
"""

__version__ = "0.1.0"

from .core import AccuracyParams, Dataset, Example, Hypothesis, PrivacyParams, predict
from .errors import (ConfigError, ContractViolationError, DegenerateVectorError, InvalidInputError,
                     MalformedReportError, NLDPError, OptimizationError)
from .harness import ExperimentConfig, audit_unbiasedness, monte_carlo_error, run, sweep
from .ldp_client import HINGE, LOGISTIC, ReportBatch, encode_dataset
from .ldp_server import OptimizerConfig, hinge_nldp_train, logistic_nldp_train
from .massart import run_massart_pipeline
from .reporting import ErrorEstimate, RunReport
from .selftrain import run_selftrain_pipeline

__all__ = [
    "AccuracyParams", "ConfigError", "ContractViolationError", "Dataset", "DegenerateVectorError",
    "ErrorEstimate", "Example", "ExperimentConfig", "HINGE", "Hypothesis", "InvalidInputError", "LOGISTIC",
    "MalformedReportError", "NLDPError", "OptimizationError", "OptimizerConfig", "PrivacyParams",
    "ReportBatch", "RunReport", "audit_unbiasedness", "encode_dataset", "hinge_nldp_train",
    "logistic_nldp_train", "monte_carlo_error", "predict", "run", "run_massart_pipeline",
    "run_selftrain_pipeline", "sweep", "__version__",
]
