"""Doubly robust minimum kernel Stein discrepancy estimation of counterfactual distributions."""

from .dgp import Dataset, DGPKind, DGPSpec, read_csv, write_csv
from .errors import (ConvergenceError, DRMKSDError, EstimationImpossibleError,
                     InferenceUnavailableError, InvalidArgumentError, NotFittedError, NumericalError)
from .estimator import (CrossFitPlan, FitResult, Objective, OptimizerSettings, Variant, assemble,
                        cross_fit, g_n, grad_g_n, minimize, minimize_grid)
from .inference import SandwichEstimate, confidence_interval, sandwich, sandwich_at
from .kernels import KernelConfig, KernelFamily
from .nuisance import (CMEWeights, ConstantPropensity, CorruptedPropensity, KNNWeights,
                       LogisticPropensity, OraclePropensity, ZeroWeights)
from .score_models import GaussianLocation, NaturalParamFamily, RBMMarginal, intractable5d
from .stein import SteinGram, stein_gram, stein_kernel, u_statistic, v_statistic

__version__ = "0.1.0"
