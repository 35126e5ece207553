"""Covariance estimators for heavy-tailed panels.

* ``sample_cov``: ``X^T X / n`` (optionally column-centred).
* ``huber_cov``: entrywise Huber M-estimate of ``E[X_i X_j]``.
* ``kendall_tau_matrix`` / ``kendall_marginal_cov``: pairwise Kendall's tau,
  mapped to correlations by ``sin(pi/2 * tau)`` and rescaled.
* ``kendall_spatial``: trace-one multivariate (spatial) Kendall's tau.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, DomainError
from .matcore import as_matrix

@dataclass(frozen=True)
class DataPanel:
    """``n`` observations (rows) of ``d`` variables (columns)."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def of(cls, X) -> "DataPanel":
        if isinstance(X, DataPanel):
            return X
        return cls(as_matrix(X, "data"))


def _values(X) -> np.ndarray:
    return DataPanel.of(X).values


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_hat: np.ndarray
    method: str
    config: dict = field(default_factory=dict)


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def sample_cov(X, center: bool = False) -> CovarianceEstimate:
    """``X^T X / n``; with ``center`` the column means are removed first."""
    Y = _values(X)
    if center:
        Y = Y - Y.mean(axis=0)
    n = Y.shape[0]
    return CovarianceEstimate(_symmetrize(Y.T @ Y / n), "sample", {"center": bool(center)})


# -------------------------------------------------------------------- Huber


@dataclass(frozen=True)
class HuberConfig:
    """Truncation level ``alpha`` for the entrywise Huber estimator.

    :meth:`default` sets ``alpha = sqrt(n v^2 / log(1/eps))`` with
    ``eps = d^-3``, i.e. ``alpha = sqrt(n v^2 / (3 log d))``, the level at
    which the estimator concentrates to ``4 v sqrt(3 log d / n)`` in max-norm
    with probability ``1 - d^-1(1 + d^-1)``. ``rule="product"`` instead gives
    ``alpha = sqrt(3 n v^2 log d)``, a much larger level under which the
    estimator is close to the sample second moment.
    """

    v: float
    alpha: float
    epsilon_conf: float
    n: Optional[int] = None
    heuristic_v: bool = False

    @property
    def valid(self) -> bool:
        """``log(1/eps) <= n/8``, the condition behind the concentration bound."""
        return self.n is None or -math.log(self.epsilon_conf) <= self.n / 8

    @classmethod
    def default(
        cls,
        n: int,
        d: int,
        v: float,
        epsilon_conf: Optional[float] = None,
        heuristic_v=False,
        rule: str = "ratio",
    ):
        if not v > 0 or not math.isfinite(v):
            raise DomainError(f"variance proxy v must be positive and finite, got {v}")
        eps = float(d) ** -3 if epsilon_conf is None else float(epsilon_conf)
        if not 0 < eps <= 1:
            raise DomainError(f"confidence parameter must be in (0, 1], got {eps}")
        log_inv = -math.log(eps)
        if rule == "ratio":
            alpha = math.inf if log_inv == 0 else math.sqrt(n * v * v / log_inv)
        elif rule == "product":
            alpha = math.sqrt(n * v * v * log_inv)
        else:
            raise DomainError(f"unknown alpha rule {rule!r}; expected 'ratio' or 'product'")
        cfg = cls(v=float(v), alpha=alpha, epsilon_conf=eps, n=int(n), heuristic_v=heuristic_v)
        if not cfg.valid:
            warnings.warn(
                f"log(1/eps) = {log_inv:.3g} exceeds n/8 = {n / 8:.3g}; the concentration guarantee does not apply",
                RuntimeWarning,
                stacklevel=2,
            )
        return cfg

    def to_dict(self):
        return {
            "v": self.v,
            "alpha": self.alpha,
            "epsilon_conf": self.epsilon_conf,
            "heuristic_v": self.heuristic_v,
        }


def plugin_v(X) -> float:
    """Heuristic variance proxy: ``max_ij`` sample sd of ``X_ti X_tj``.

    Only a plug-in guess; the concentration guarantee assumes ``v`` bounds
    the population quantity.
    """
    Y = _values(X)
    n = Y.shape[0]
    if n < 2:
        raise DomainError("plug-in v needs at least two observations")
    m1 = (Y.T @ Y) / n
    m2 = ((Y * Y).T @ (Y * Y)) / n
    var = np.maximum(m2 - m1 * m1, 0.0) * n / (n - 1)
    v = float(np.sqrt(var.max()))
    if v <= 0:
        raise DegenerateInputError("all products are constant; plug-in v is zero")
    return v


def _huber_columns(Z: np.ndarray, alpha: float, rtol: float = 1e-12) -> np.ndarray:
    """Huber location of every column of ``Z`` (n x m) at truncation ``alpha``.

    Bisects the decreasing map ``psi(m) = sum_t clamp(z_t - m, -alpha, alpha)``
    twice, once for the smallest and once for the largest root, and returns
    their midpoint (unique root unless ``psi`` has a flat zero segment).
    """
    Z = np.asarray(Z, dtype=float)
    n, m = Z.shape
    mean = Z.mean(axis=0)
    if not np.isfinite(alpha):
        return mean
    lo0 = Z.min(axis=0)
    hi0 = Z.max(axis=0)
    out = mean.copy()
    # quadratic regime: every residual inside [-alpha, alpha] at the mean
    todo = np.flatnonzero(np.abs(Z - mean).max(axis=0) > alpha)
    if todo.size == 0:
        return out
    Zt = Z[:, todo]
    scale = np.maximum(np.abs(lo0[todo]), np.abs(hi0[todo]))
    tol = rtol * (1.0 + scale)

    def psi(mu):
        return np.clip(Zt - mu, -alpha, alpha).sum(axis=0)

    roots = []
    for upper in (False, True):
        lo, hi = lo0[todo].copy(), hi0[todo].copy()
        for _ in range(200):
            if np.all(hi - lo <= tol):
                break
            mid = 0.5 * (lo + hi)
            p = psi(mid)
            go_right = p >= 0 if upper else p > 0
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        roots.append(0.5 * (lo + hi))
    out[todo] = 0.5 * (roots[0] + roots[1])
    return out


def huber_entry(products, alpha: float) -> float:
    """Minimiser of ``sum_t l_alpha(z_t - m)`` over ``m``."""
    z = np.asarray(products, dtype=float).reshape(-1)
    if z.size == 0:
        raise DomainError("huber_entry needs at least one value")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return float(_huber_columns(z[:, None], alpha)[0])


def huber_loss(x, alpha: float):
    """``x^2`` inside ``[-alpha, alpha]``, ``2 alpha |x| - alpha^2`` outside."""
    ax = np.abs(x)
    return np.where(ax <= alpha, ax * ax, 2 * alpha * ax - alpha * alpha)


def huber_cov(X, cfg: HuberConfig, block: int = 4096) -> CovarianceEstimate:
    """Entrywise Huber estimate of ``E[X X^T]``; upper triangle solved and mirrored."""
    if not cfg.alpha > 0:
        raise DomainError(f"alpha must be positive, got {cfg.alpha}")
    Y = _values(X)
    d = Y.shape[1]
    iu, ju = np.triu_indices(d)
    vals = np.empty(iu.size)
    for s in range(0, iu.size, block):
        i, j = iu[s : s + block], ju[s : s + block]
        vals[s : s + block] = _huber_columns(Y[:, i] * Y[:, j], cfg.alpha)
    S = np.zeros((d, d))
    S[iu, ju] = vals
    S[ju, iu] = vals
    return CovarianceEstimate(S, "huber", cfg.to_dict())


# ------------------------------------------------------------------ Kendall


def kendall_tau_matrix(X) -> np.ndarray:
    """Pairwise Kendall's tau-a, ``2/(n(n-1)) sum_{t<t'} sgn(dx_j) sgn(dx_k)``.

    Ties contribute zero. The diagonal is set to one.
    """
    Y = _values(X)
    n, d = Y.shape
    if n < 2:
        raise DomainError("Kendall's tau needs at least two observations")
    acc = np.zeros((d, d))
    for t in range(n - 1):
        S = np.sign(Y[t + 1 :] - Y[t])
        acc += S.T @ S
    tau = acc / (n * (n - 1) / 2)
    np.fill_diagonal(tau, 1.0)
    return _symmetrize(tau)


def kendall_correlation(X) -> np.ndarray:
    """``sin(pi/2 * tau)``, a correlation estimate valid for elliptical laws."""
    R = np.sin(0.5 * np.pi * kendall_tau_matrix(X))
    np.fill_diagonal(R, 1.0)
    return R


def kendall_marginal_cov(X, stddevs) -> CovarianceEstimate:
    """``D R D`` with ``R = sin(pi/2 * tau)`` and ``D = diag(stddevs)``."""
    Y = _values(X)
    s = np.asarray(stddevs, dtype=float).reshape(-1)
    if s.size != Y.shape[1]:
        raise DomainError(f"expected {Y.shape[1]} standard deviations, got {s.size}")
    if not np.all(s > 0) or not np.all(np.isfinite(s)):
        raise DomainError("standard deviations must be positive and finite")
    R = kendall_correlation(Y)
    return CovarianceEstimate(_symmetrize(s[:, None] * R * s[None, :]), "kendall_marginal", {})


def kendall_spatial(X) -> np.ndarray:
    """Average of ``w w^T`` over pairs, ``w`` the normalised row difference.

    Pairs of identical rows are skipped and the average is over the
    remaining pairs, so the result has unit trace.
    """
    Y = _values(X)
    n, d = Y.shape
    if n < 2:
        raise DomainError("spatial Kendall's tau needs at least two observations")
    acc = np.zeros((d, d))
    count = 0
    for t in range(n - 1):
        D = Y[t + 1 :] - Y[t]
        nrm = np.sqrt(np.sum(D * D, axis=1))
        keep = nrm > 0
        if not np.any(keep):
            continue
        W = D[keep] / nrm[keep, None]
        acc += W.T @ W
        count += int(keep.sum())
    if count == 0:
        raise DegenerateInputError("all observations are identical")
    return _symmetrize(acc / count)
