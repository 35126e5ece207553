"""Dense matrix helpers: the operator-norm family, coherence, dilation.

Matrices are plain 2-D ``numpy.ndarray`` of float64. Every public function
accepts anything ``numpy.asarray`` understands and validates it through
:func:`as_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, PreconditionError

ORTHONORMAL_TOL = 1e-8


def as_matrix(M, name="matrix") -> np.ndarray:
    """Return ``M`` as a finite, non-empty 2-D float64 array."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DomainError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _abs_row_sums(M: np.ndarray) -> np.ndarray:
    # correctly rounded sums: independent of layout, order and zero padding
    return np.array([math.fsum(row) for row in np.abs(M)])


def norm_one(M) -> float:
    """Maximum absolute column sum."""
    M = as_matrix(M)
    return float(_abs_row_sums(M.T).max())


def norm_inf(M) -> float:
    """Maximum absolute row sum."""
    M = as_matrix(M)
    return float(_abs_row_sums(M).max())


def max_norm(M) -> float:
    M = as_matrix(M)
    return float(np.abs(M).max())


def frobenius(M) -> float:
    M = as_matrix(M)
    return float(np.sqrt(np.sum(M * M)))


def spectral_norm(M) -> float:
    """Largest singular value (LAPACK SVD)."""
    M = as_matrix(M)
    return float(np.linalg.norm(M, 2))


def tau0(E) -> float:
    """Dimension-balanced perturbation size.

    ``max(sqrt(d2/d1) * ||E||_1, sqrt(d1/d2) * ||E||_inf)``; for a square
    matrix this is ``max(||E||_1, ||E||_inf)``.
    """
    E = as_matrix(E, "E")
    d1, d2 = E.shape
    return float(max(np.sqrt(d2 / d1) * norm_one(E), np.sqrt(d1 / d2) * norm_inf(E)))


def check_orthonormal(V, tol=ORTHONORMAL_TOL, name="V") -> np.ndarray:
    V = as_matrix(V, name)
    gram = V.T @ V
    dev = np.abs(gram - np.eye(V.shape[1])).max()
    if dev > tol:
        raise PreconditionError(
            f"{name} columns are not orthonormal: max|V^T V - I| = {dev:.3e} > {tol:g}"
        )
    return V


def coherence(V) -> float:
    """``(d/r) * max_i ||V[i, :]||^2`` for a d x r orthonormal frame."""
    V = check_orthonormal(V)
    d, r = V.shape
    return float(d / r * np.max(np.sum(V * V, axis=1)))


@dataclass(frozen=True)
class CoherenceReport:
    mu_u: float
    mu_v: float
    mu0: float


def coherence_report(U, V) -> CoherenceReport:
    mu_u, mu_v = coherence(U), coherence(V)
    return CoherenceReport(mu_u, mu_v, max(mu_u, mu_v))


def hermitian_dilation(M) -> np.ndarray:
    """Symmetric embedding ``[[0, M], [M^T, 0]]`` of a d1 x d2 matrix."""
    M = as_matrix(M)
    d1, d2 = M.shape
    out = np.zeros((d1 + d2, d1 + d2))
    out[:d1, d1:] = M
    out[d1:, :d1] = M.T
    return out


def weighted_max_norm(M, d1: int, d2: int) -> float:
    """Max-norm with the top ``d1`` rows scaled by sqrt(d1), the rest by sqrt(d2)."""
    M = as_matrix(M)
    if M.shape[0] != d1 + d2:
        raise DomainError(f"expected {d1 + d2} rows, got {M.shape[0]}")
    top = np.abs(M[:d1]).max() if d1 else 0.0
    bottom = np.abs(M[d1:]).max() if d2 else 0.0
    return float(max(np.sqrt(d1) * top, np.sqrt(d2) * bottom))


def epsilon0(A, r: int) -> float:
    """Balanced size of the rank-``r`` truncation residual ``A - A_r``."""
    from .spectra import low_rank_approx

    A = as_matrix(A, "A")
    d1, d2 = A.shape
    if r > min(d1, d2):
        raise DomainError(f"rank {r} exceeds min dimension {min(d1, d2)}")
    R = A - low_rank_approx(A, r)
    return float(max(np.sqrt(d1 / d2) * norm_inf(R), np.sqrt(d2 / d1) * norm_one(R)))


@dataclass(frozen=True)
class NormReport:
    one_norm: float
    inf_norm: float
    max_norm: float
    spectral_norm: float
    frobenius: float
    tau0: float
    epsilon0: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def norm_report(M, r: Optional[int] = None) -> NormReport:
    M = as_matrix(M)
    return NormReport(
        one_norm=norm_one(M),
        inf_norm=norm_inf(M),
        max_norm=max_norm(M),
        spectral_norm=spectral_norm(M),
        frobenius=frobenius(M),
        tau0=tau0(M),
        epsilon0=None if r is None else epsilon0(M, r),
    )
