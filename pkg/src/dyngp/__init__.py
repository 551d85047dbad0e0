"""Gaussian process emulators for scalar and time-series valued computer simulators.

Modules
-------
kernel
    Power-exponential correlation and jittered Cholesky factorization.
gp
    Constant-mean scalar GP fitted by profile likelihood.
svdgp
    SVD basis of the response matrix with independent coefficient GPs.
local
    Local svdGP on k-NN or greedily grown neighbourhoods.
design
    Latin hypercube designs and test simulators.
io
    CSV data files and prediction reports.
"""

__version__ = "0.1.0"

from .design import Domain, TimeGrid, latin_hypercube, random_lhs
from .gp import GPConfig, ScalarGPModel, fit_scalar_gp, predict_scalar
from .io import Dataset, load_dataset, save_dataset, write_report
from .kernel import JitterPolicy, KernelParams, SingularCorrelationError, correlation
from .local import NeighborhoodConfig, greedy_neighborhood, knn_neighborhood, predict_local
from .optimize import FitError, OptimConfig
from .svdgp import SvdGPConfig, SvdGPModel, SvdPriors, fit_svdgp, predict_svdgp

__all__ = [
    "__version__",
    "Domain", "TimeGrid", "latin_hypercube", "random_lhs",
    "GPConfig", "ScalarGPModel", "fit_scalar_gp", "predict_scalar",
    "Dataset", "load_dataset", "save_dataset", "write_report",
    "JitterPolicy", "KernelParams", "SingularCorrelationError", "correlation",
    "NeighborhoodConfig", "greedy_neighborhood", "knn_neighborhood", "predict_local",
    "FitError", "OptimConfig",
    "SvdGPConfig", "SvdGPModel", "SvdPriors", "fit_svdgp", "predict_svdgp",
]
