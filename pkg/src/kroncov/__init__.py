"""Covariance estimation for sums of Kronecker products.

The main entry points are the scikit-learn style estimators
(:class:`KroneckerPLS`, :class:`KroneckerPLSCV`, :class:`KroneckerPCA`,
:class:`KroneckerRankOne`, :class:`SampleCovariance`) and the function
:func:`pls_estimate`.
"""

__version__ = "0.1.0"

from .estimators import (
    EstimateReport,
    KroneckerPCA,
    KroneckerPLS,
    KroneckerPLSCV,
    KroneckerRankOne,
    SampleCovariance,
    SampleSet,
    extract_factors,
    hard_threshold_estimate,
    pls_estimate,
    rank_one_estimate,
    sample_covariance,
    select_lambda,
)
from .exceptions import (
    ContractError,
    DegenerateInputError,
    NumericalError,
    ShapeError,
    SizeError,
)
from .model import (
    BoundInputs,
    KronSumCovariance,
    MatrixModel,
    assemble_sigma,
    effective_rank,
    factorize_for_sampling,
    random_kron_sum,
    random_psd_factor,
    sample_matrix_model,
)
from .rearrangement import BlockShape, rearrange, rearrange_inverse

__all__ = [
    "BlockShape",
    "BoundInputs",
    "ContractError",
    "DegenerateInputError",
    "EstimateReport",
    "KronSumCovariance",
    "KroneckerPCA",
    "KroneckerPLS",
    "KroneckerPLSCV",
    "KroneckerRankOne",
    "MatrixModel",
    "NumericalError",
    "SampleCovariance",
    "SampleSet",
    "ShapeError",
    "SizeError",
    "assemble_sigma",
    "effective_rank",
    "extract_factors",
    "factorize_for_sampling",
    "hard_threshold_estimate",
    "pls_estimate",
    "random_kron_sum",
    "random_psd_factor",
    "rank_one_estimate",
    "rearrange",
    "rearrange_inverse",
    "sample_covariance",
    "sample_matrix_model",
    "select_lambda",
]
