"""Partially linear minimum mean-squared-error estimation.

Estimators that are linear in one set of measurements and arbitrary in
another, together with the experiments that exercise them.
"""

from ._errors import (
    DegenerateDataError,
    InfeasibleConstraintsError,
    InsufficientDataError,
    InvalidConfigurationError,
    InvalidInputError,
    InvalidStateError,
    PLMMSEError,
    SizeLimitError,
)
from .core import (
    AdditiveNoiseModel,
    CellMeanRegressor,
    ConditionalPLMMSE,
    JointMomentModel,
    PartiallyLinearEstimator,
    additive_noise_gain,
    additive_noise_plmmse,
    conditional_plmmse_discrete,
    lmmse_gain,
    separable_plmmse,
)
from .estimators import (
    ConditionalPartiallyLinearRegressor,
    LinearMMSERegressor,
    PartiallyLinearRegressor,
    SparsePLMMSE,
)
from .linalg import (
    empirical_moments,
    hadamard_dictionary,
    haar_transform,
    pseudo_inverse,
    wavelet_transform,
)
from .results import ResultTable, read_csv, write_csv
from .sparse import (
    ShrinkageStatistics,
    SpikeSlabPrior,
    brute_force_mmse,
    compute_beta,
    mmse_denoise,
    shrink,
    sparse_plmmse_gain,
)

__version__ = "0.1.0"

__all__ = [
    "PLMMSEError",
    "InvalidInputError",
    "InsufficientDataError",
    "SizeLimitError",
    "InfeasibleConstraintsError",
    "InvalidConfigurationError",
    "InvalidStateError",
    "DegenerateDataError",
    "JointMomentModel",
    "AdditiveNoiseModel",
    "PartiallyLinearEstimator",
    "ConditionalPLMMSE",
    "CellMeanRegressor",
    "lmmse_gain",
    "conditional_plmmse_discrete",
    "separable_plmmse",
    "additive_noise_gain",
    "additive_noise_plmmse",
    "LinearMMSERegressor",
    "PartiallyLinearRegressor",
    "ConditionalPartiallyLinearRegressor",
    "SparsePLMMSE",
    "pseudo_inverse",
    "empirical_moments",
    "hadamard_dictionary",
    "haar_transform",
    "wavelet_transform",
    "ResultTable",
    "read_csv",
    "write_csv",
    "SpikeSlabPrior",
    "ShrinkageStatistics",
    "shrink",
    "compute_beta",
    "mmse_denoise",
    "sparse_plmmse_gain",
    "brute_force_mmse",
]
