"""Generic POET: principal orthogonal complement thresholding.

Given pilot estimates ``(Sigma_hat, Lambda_hat, V_hat)`` of a factor-model
covariance, subtract the low-rank part, threshold the residual entrywise
relative to its diagonal, and add the low-rank part back.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, DomainError, PreconditionError
from .matcore import as_matrix, check_orthonormal, coherence
from .spectra import check_symmetric, eig_top, matrix_inverse_and_sqrt

SHRINKS = ("hard", "soft")


@dataclass(frozen=True)
class PilotTrio:
    sigma_hat: np.ndarray
    lambda_hat: np.ndarray
    v_hat: np.ndarray

    def __post_init__(self):
        S = check_symmetric(self.sigma_hat, "sigma_hat")
        lam = np.asarray(self.lambda_hat, dtype=float).reshape(-1)
        V = check_orthonormal(self.v_hat, name="v_hat")
        if V.shape != (S.shape[0], lam.size):
            raise DomainError(f"v_hat has shape {V.shape}, expected {(S.shape[0], lam.size)}")
        if np.any(lam <= 0):
            raise PreconditionError(f"pilot eigenvalues must be positive, got {lam}")
        if np.any(np.diff(lam) > 0):
            raise PreconditionError("pilot eigenvalues must be sorted in decreasing order")
        object.__setattr__(self, "sigma_hat", S)
        object.__setattr__(self, "lambda_hat", lam)
        object.__setattr__(self, "v_hat", V)

    @property
    def r(self) -> int:
        return self.lambda_hat.size

    def low_rank(self) -> np.ndarray:
        return (self.v_hat * self.lambda_hat) @ self.v_hat.T

    @classmethod
    def from_covariance(cls, sigma_hat, r: int, v_hat=None) -> "PilotTrio":
        """Top-``r`` eigenpairs of ``sigma_hat``; ``v_hat`` may replace the eigenvectors."""
        lam, V = eig_top(sigma_hat, r, by="value")
        if v_hat is not None:
            V = np.asarray(v_hat, dtype=float)
        return cls(np.asarray(sigma_hat, dtype=float), lam, V)


@dataclass(frozen=True)
class PoetConfig:
    r: int
    tau_scale: float = 2.0
    shrink: str = "soft"
    q: float = 0.0
    use_wn: bool = False
    psd_repair: bool = False

    def __post_init__(self):
        if self.r < 0:
            raise DomainError(f"rank must be nonnegative, got {self.r}")
        if not self.tau_scale >= 0:
            raise DomainError(f"tau_scale must be nonnegative, got {self.tau_scale}")
        if self.shrink not in SHRINKS:
            raise DomainError(f"shrink must be one of {SHRINKS}, got {self.shrink!r}")
        if not 0 <= self.q < 1:
            raise DomainError(f"q must be in [0, 1), got {self.q}")

    def threshold(self, n: int, d: int) -> float:
        """``tau_scale * sqrt(log d / n)``, plus ``1/sqrt(d)`` inside when ``use_wn``."""
        rate = math.sqrt(math.log(d) / n) if d > 1 else 0.0
        if self.use_wn:
            rate += 1.0 / math.sqrt(d)
        return self.tau_scale * rate


def principal_complement(pilot: PilotTrio) -> np.ndarray:
    """``Sigma_hat - V_hat Lambda_hat V_hat^T``, symmetrised."""
    M = pilot.sigma_hat - pilot.low_rank()
    return 0.5 * (M + M.T)


def shrink_offdiag(sigma_u, tau: float, shrink: str = "soft") -> np.ndarray:
    """Threshold off-diagonal entries at ``tau * sqrt(s_ii s_jj)``; diagonal kept."""
    S = as_matrix(sigma_u, "sigma_u")
    diag = np.diag(S).copy()
    if np.any(diag <= 0):
        bad = np.flatnonzero(diag <= 0)
        raise DegenerateInputError(f"residual covariance has nonpositive diagonal at indices {bad[:10].tolist()}")
    if shrink not in SHRINKS:
        raise DomainError(f"shrink must be one of {SHRINKS}, got {shrink!r}")
    level = tau * np.sqrt(np.outer(diag, diag))
    keep = np.abs(S) >= level
    if shrink == "hard":
        out = np.where(keep, S, 0.0)
    else:
        out = np.where(keep, np.sign(S) * np.maximum(np.abs(S) - level, 0.0), 0.0)
    np.fill_diagonal(out, diag)
    return out


def correlation_threshold(sigma_u, n: int, cfg: PoetConfig, tau: Optional[float] = None) -> np.ndarray:
    """Entry-adaptive thresholding with ``tau`` from ``cfg`` unless given."""
    S = as_matrix(sigma_u, "sigma_u")
    level = cfg.threshold(n, S.shape[0]) if tau is None else float(tau)
    return shrink_offdiag(S, level, cfg.shrink)


@dataclass(frozen=True)
class ErrorMetrics:
    err_u_spectral: float
    err_precision_u: float
    err_max: float
    err_relative_frob: float
    err_precision: float
    m_d: float
    precision_u_singular: bool = False
    precision_singular: bool = False
    psd_repaired: bool = False

    def to_dict(self):
        return asdict(self)


def sparsity_level(sigma_u, q: float = 0.0) -> float:
    """``max_i sum_j |s_ij|^q``; for ``q = 0`` the count of nonzeros per row."""
    S = np.abs(as_matrix(sigma_u, "sigma_u"))
    if q == 0:
        return float((S != 0).sum(axis=1).max())
    return float((S**q).sum(axis=1).max())


def _inverse(M: np.ndarray, repair: bool):
    """Inverse of a symmetric matrix, optionally after a lambda-floor shift.

    Returns ``(inverse or None, repaired)``.
    """
    w, W = np.linalg.eigh(0.5 * (M + M.T))
    repaired = False
    if repair and w[0] <= 0:
        w = w + (abs(w[0]) + 1e-8)
        repaired = True
    if np.abs(w).min() <= 1e-12 * np.abs(w).max():
        return None, repaired
    return (W / w) @ W.T, repaired


def relative_frobenius(est, sigma) -> float:
    """``d^(-1/2) ||Sigma^(-1/2) (est - Sigma) Sigma^(-1/2)||_F``."""
    _, _, isq = matrix_inverse_and_sqrt(sigma)
    D = isq @ (np.asarray(est, dtype=float) - sigma) @ isq
    return float(np.sqrt(np.sum(D * D) / sigma.shape[0]))


def error_metrics(sigma_u_thresh, sigma_final, sigma, sigma_u, q: float = 0.0, psd_repair=False) -> ErrorMetrics:
    nan = float("nan")
    su_t = np.asarray(sigma_u_thresh, dtype=float)
    sf = np.asarray(sigma_final, dtype=float)
    inv_u, rep_u = _inverse(su_t, psd_repair)
    inv_f, rep_f = _inverse(sf, psd_repair)
    err_u = err_pu = m_d = nan
    sing_u = inv_u is None
    if sigma_u is not None:
        Su = check_symmetric(sigma_u, "sigma_u")
        err_u = float(np.linalg.norm(su_t - Su, 2))
        m_d = sparsity_level(Su, q)
        if sing_u:
            err_pu = math.inf
        else:
            Su_inv, _, _ = matrix_inverse_and_sqrt(Su)
            err_pu = float(np.linalg.norm(inv_u - Su_inv, 2))
    err_max = err_rf = err_p = nan
    sing_f = inv_f is None
    if sigma is not None:
        S = check_symmetric(sigma, "sigma")
        err_max = float(np.abs(sf - S).max())
        err_rf = relative_frobenius(sf, S)
        if sing_f:
            err_p = math.inf
        else:
            S_inv, _, _ = matrix_inverse_and_sqrt(S)
            err_p = float(np.linalg.norm(inv_f - S_inv, 2))
    return ErrorMetrics(
        err_u_spectral=err_u,
        err_precision_u=err_pu,
        err_max=err_max,
        err_relative_frob=err_rf,
        err_precision=err_p,
        m_d=m_d,
        precision_u_singular=bool(sing_u),
        precision_singular=bool(sing_f),
        psd_repaired=bool(rep_u or rep_f),
    )


@dataclass(frozen=True)
class PoetResult:
    pilot: PilotTrio
    sigma_u_hat: np.ndarray
    sigma_u_thresh: np.ndarray
    sigma_final: np.ndarray
    tau: float
    metrics: Optional[ErrorMetrics] = None

    def to_dict(self):
        return {
            "r": self.pilot.r,
            "tau": self.tau,
            "lambda_hat": self.pilot.lambda_hat.tolist(),
            "sigma_final": self.sigma_final.tolist(),
            "sigma_u_thresh": self.sigma_u_thresh.tolist(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }


def poet(X, pilot: PilotTrio, cfg: PoetConfig, truth=None) -> PoetResult:
    """Run the three POET steps.

    ``X`` is the data panel (only its number of rows is used) or the sample
    size itself. ``truth`` is ``(Sigma, Sigma_u)``; either entry may be None.
    """
    n = int(X) if np.isscalar(X) else np.asarray(X).shape[0]
    d = pilot.sigma_hat.shape[0]
    if pilot.r != cfg.r:
        raise DomainError(f"pilot has rank {pilot.r} but config asks for {cfg.r}")
    su = principal_complement(pilot)
    tau = cfg.threshold(n, d)
    su_t = shrink_offdiag(su, tau, cfg.shrink)
    final = pilot.low_rank() + su_t
    metrics = None
    if truth is not None:
        sigma, sigma_u = truth
        metrics = error_metrics(su_t, final, sigma, sigma_u, cfg.q, cfg.psd_repair)
    return PoetResult(pilot, su, su_t, final, tau, metrics)


@dataclass(frozen=True)
class PervasivenessReport:
    b_max: float
    gram_eigenvalues: list
    gram_gaps: list
    mu_v: float
    lambda_over_d: list

    def to_dict(self):
        return asdict(self)


def pervasiveness_check(B, sigma_u) -> PervasivenessReport:
    """Diagnostics for pervasive factors: loading size, ``B^T B / d`` spectrum,
    coherence of the top eigenvectors of ``B B^T + Sigma_u`` and ``lambda_i / d``."""
    B = as_matrix(B, "B")
    d, r = B.shape
    Su = check_symmetric(sigma_u, "sigma_u")
    g = np.sort(np.linalg.eigvalsh(B.T @ B / d))[::-1]
    lam, V = eig_top(B @ B.T + Su, r, by="value")
    return PervasivenessReport(
        b_max=float(np.abs(B).max()),
        gram_eigenvalues=g.tolist(),
        gram_gaps=(g[:-1] - g[1:]).tolist(),
        mu_v=coherence(V),
        lambda_over_d=(lam / d).tolist(),
    )
