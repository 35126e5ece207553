"""Entrywise eigenvector perturbation bounds and robust factor-model covariance estimation."""

from .errors import (
    DataError,
    DegenerateInputError,
    DomainError,
    NonConvergenceError,
    NumericalError,
    ParseError,
    PreconditionError,
    SingularityError,
    SpecterError,
)
from .fixpoint import FixpointProblem, solve_qbar, solve_sylvester
from .matcore import coherence, hermitian_dilation, max_norm, norm_inf, norm_one, norm_report, spectral_norm
from .perturb import (
    bound_l2_wedin,
    bound_rect,
    bound_sym_bulk,
    bound_sym_indiv,
    empirical_err,
    perturbation_report,
)
from .poet import PilotTrio, PoetConfig, poet
from .robust import HuberConfig, huber_cov, kendall_marginal_cov, kendall_spatial, sample_cov
from .spectra import eig_sym, eig_top, svd

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DegenerateInputError",
    "DomainError",
    "NonConvergenceError",
    "NumericalError",
    "ParseError",
    "PreconditionError",
    "SingularityError",
    "SpecterError",
    "FixpointProblem",
    "solve_qbar",
    "solve_sylvester",
    "coherence",
    "hermitian_dilation",
    "max_norm",
    "norm_inf",
    "norm_one",
    "norm_report",
    "spectral_norm",
    "bound_l2_wedin",
    "bound_rect",
    "bound_sym_bulk",
    "bound_sym_indiv",
    "empirical_err",
    "perturbation_report",
    "PilotTrio",
    "PoetConfig",
    "poet",
    "HuberConfig",
    "huber_cov",
    "kendall_marginal_cov",
    "kendall_spatial",
    "sample_cov",
    "eig_sym",
    "eig_top",
    "svd",
]
