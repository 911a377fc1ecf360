"""Probit exchangeable (PX) regression for undirected binary networks."""

__version__ = "0.1.0"

from .bcem import BcemConfig, PxFit, fit
from .evalcv import CvReport, cv_run, prauc, roc_auc
from .netdata import NetworkData, load_network
from .predict import predict_marginal
from .probit0 import fit_independent

__all__ = [
    "__version__",
    "BcemConfig",
    "PxFit",
    "fit",
    "CvReport",
    "cv_run",
    "prauc",
    "roc_auc",
    "NetworkData",
    "load_network",
    "predict_marginal",
    "fit_independent",
]
