"""Entrywise eigenvector / singular-vector perturbation bounds.

All bounds use explicit constants so that every bound is a number and
every precondition a boolean. A non-positive denominator yields an
infinite bound with the precondition flagged false; nothing here raises on
a merely unfavourable instance.

Rectangular bounds are stated for the dilated eigenvectors
``(u; v)/sqrt(2)`` in the weighted max-norm, so the per-side bounds carry
a factor ``sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .matcore import as_matrix, coherence, norm_inf, spectral_norm, tau0
from .spectra import check_symmetric, eig_sym, svd

INF = float("inf")


def _div(num: float, den: float) -> float:
    if den <= 0:
        return INF
    return num / den


def isolation_radius(values, r: int) -> float:
    """``min_{i<=r} min_{j != i} |values[i] - values[j]|``.

    ``values`` holds the whole spectrum with the ``r`` leading entries first.
    """
    values = np.asarray(values, dtype=float)
    if len(values) <= 1:
        return INF
    best = INF
    for i in range(r):
        others = np.delete(values, i)
        best = min(best, float(np.abs(others - values[i]).min()))
    return best


def eigengap0(sigma, r: int) -> float:
    """``min_{i<=r} (sigma_i - sigma_{i+1})`` with ``sigma_{r+1} := 0``."""
    s = np.append(np.asarray(sigma, dtype=float)[:r], 0.0)
    return float(np.min(s[:-1] - s[1:]))


# ---------------------------------------------------------------- symmetric


@dataclass(frozen=True)
class SymQuantities:
    d: int
    r: int
    lambdas: np.ndarray
    V: np.ndarray
    mu: float
    tau: float
    kappa: float
    epsilon: float
    E_spectral: float
    delta: float

    @property
    def lambda_r(self) -> float:
        return float(abs(self.lambdas[self.r - 1]))

    @property
    def omega(self) -> float:
        return _div(8 * (1 + self.r * self.mu) * self.kappa, self.lambda_r - self.epsilon)


def sym_quantities(A, E, r: int, delta: Optional[float] = None) -> SymQuantities:
    A = check_symmetric(A, "A")
    E = check_symmetric(E, "E")
    if E.shape != A.shape:
        raise DomainError(f"A is {A.shape} but E is {E.shape}")
    d = A.shape[0]
    if not 1 <= r <= d:
        raise DomainError(f"rank {r} must be in [1, {d}]")
    dec = eig_sym(A)
    V = dec.vectors[:, :r]
    A_r = dec.reconstruct(r)
    return SymQuantities(
        d=d,
        r=r,
        lambdas=dec.values,
        V=V,
        mu=coherence(V),
        tau=norm_inf(E),
        kappa=float(math.sqrt(d) * np.abs(E @ V).max()),
        epsilon=norm_inf(A - A_r),
        E_spectral=spectral_norm(E),
        delta=isolation_radius(dec.values, r) if delta is None else float(delta),
    )


def _bulk_precond(q: SymQuantities) -> bool:
    r, mu = q.r, q.mu
    return bool(q.lambda_r - q.epsilon > 4 * r * mu * (q.tau + 2 * r * q.kappa) and r * q.omega < 0.5)


def _match_precond(q: SymQuantities) -> bool:
    r, mu = q.r, q.mu
    rhs = max(3 * q.tau, 64 * (1 + r * mu) * r**1.5 * math.sqrt(mu) * q.kappa)
    return bool(q.lambda_r - q.epsilon > rhs)


def _bulk_value(q: SymQuantities) -> float:
    if q.kappa == 0:
        return 0.0
    return 2 * math.sqrt(q.mu) * q.omega * q.r / math.sqrt(q.d)


def _indiv_value(q: SymQuantities) -> float:
    r, mu, d = q.r, q.mu, q.d
    first = 0.0
    if q.kappa > 0:
        first = _div(48 * (1 + r * mu) * r**2.5 * math.sqrt(mu) * q.kappa, (q.lambda_r - q.epsilon) * math.sqrt(d))
    second = 0.0
    if q.E_spectral > 0:
        second = _div(4 * r**1.5 * math.sqrt(mu) * q.E_spectral, q.delta * math.sqrt(d))
    return first + second


def bound_sym_bulk(A, E, r: int):
    """Rotation-level bound ``2 sqrt(mu) omega r / sqrt(d)`` and its precondition."""
    q = sym_quantities(A, E, r)
    return _bulk_value(q), _bulk_precond(q)


def bound_sym_indiv(A, E, r: int, delta: Optional[float] = None):
    """Bound on ``max_i ||v~_i - v_i||_inf`` up to sign, and its precondition."""
    q = sym_quantities(A, E, r, delta)
    pre = _bulk_precond(q) and q.delta > q.E_spectral and _match_precond(q)
    return _indiv_value(q), bool(pre)


# -------------------------------------------------------------- rectangular


@dataclass(frozen=True)
class RectQuantities:
    d1: int
    d2: int
    r: int
    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray
    mu_u: float
    mu_v: float
    tau0: float
    kappa0: float
    epsilon0: float
    E_spectral: float
    delta0: float
    gamma0: float

    @property
    def mu0(self) -> float:
        return max(self.mu_u, self.mu_v)

    @property
    def sigma_r(self) -> float:
        return float(self.sigma[self.r - 1])

    @property
    def omega0(self) -> float:
        return _div(8 * (1 + self.r * self.mu0) * self.kappa0, 3 * (self.sigma_r - self.epsilon0))


def dilation_isolation_radius(sigma_all, r: int, d1: int, d2: int) -> float:
    """Isolation radius of ``sigma_1..sigma_r`` within the dilation spectrum
    ``{+-sigma_j} U {0}^{|d1 - d2|}``."""
    s = np.asarray(sigma_all, dtype=float)
    spec = np.concatenate([s, -s, np.zeros(abs(d1 - d2))])
    return isolation_radius(spec, r)


def rect_quantities(A, E, r: int, delta0: Optional[float] = None) -> RectQuantities:
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    if A.shape != E.shape:
        raise DomainError(f"A is {A.shape} but E is {E.shape}")
    d1, d2 = A.shape
    if not 1 <= r <= min(d1, d2):
        raise DomainError(f"rank {r} must be in [1, {min(d1, d2)}]")
    U, s, V = svd(A, r)
    sigma_all = np.linalg.svd(A, compute_uv=False)
    R = A - (U * s) @ V.T
    return RectQuantities(
        d1=d1,
        d2=d2,
        r=r,
        sigma=s,
        U=U,
        V=V,
        mu_u=coherence(U),
        mu_v=coherence(V),
        tau0=tau0(E),
        kappa0=float(max(math.sqrt(d1) * np.abs(E @ V).max(), math.sqrt(d2) * np.abs(E.T @ U).max())),
        epsilon0=float(max(math.sqrt(d1 / d2) * norm_inf(R), math.sqrt(d2 / d1) * norm_inf(R.T))),
        E_spectral=spectral_norm(E),
        delta0=dilation_isolation_radius(sigma_all, r, d1, d2) if delta0 is None else float(delta0),
        gamma0=eigengap0(s, r),
    )


def _rect_weighted_bound(q: RectQuantities) -> float:
    r, mu0 = q.r, q.mu0
    first = 0.0
    if q.kappa0 > 0:
        first = _div(107 * r**2.5 * math.sqrt(mu0) * (1 + r * mu0) * q.kappa0, q.sigma_r - q.epsilon0)
    second = 0.0
    if q.E_spectral > 0:
        second = _div(12 * r**1.5 * math.sqrt(mu0) * q.E_spectral, q.delta0)
    return first + second


def _rect_precond(q: RectQuantities) -> bool:
    r, mu0 = q.r, q.mu0
    rhs = max(
        16 * r * mu0 * (q.tau0 + r * q.kappa0),
        64 * r**1.5 * math.sqrt(mu0) * (1 + r * mu0) * q.kappa0,
    )
    return bool(q.sigma_r - q.epsilon0 > rhs and q.delta0 > 2 * q.E_spectral)


def _rect_bulk_precond(q: RectQuantities) -> bool:
    r, mu0 = q.r, q.mu0
    return bool(q.sigma_r - q.epsilon0 > 16 * r * mu0 * (q.tau0 + r * q.kappa0) and r * q.omega0 < 0.5)


def bound_rect(A, E, r: int, delta0: Optional[float] = None):
    """Per-side bounds ``(bound_u, bound_v, precond)`` for singular vectors."""
    q = rect_quantities(A, E, r, delta0)
    bw = _rect_weighted_bound(q)
    return math.sqrt(2) * bw / math.sqrt(q.d1), math.sqrt(2) * bw / math.sqrt(q.d2), _rect_precond(q)


def bound_l2_wedin(A, E, r: int):
    """``(2 sqrt(2) ||E||_2 / gamma0, valid)`` with ``valid = gamma0 >= 2 ||E||_2``."""
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    if A.shape != E.shape:
        raise DomainError(f"A is {A.shape} but E is {E.shape}")
    if not 1 <= r <= min(A.shape):
        raise DomainError(f"rank {r} must be in [1, {min(A.shape)}]")
    gamma = eigengap0(np.linalg.svd(A, compute_uv=False), r)
    e2 = spectral_norm(E)
    value = 0.0 if e2 == 0 else _div(2 * math.sqrt(2) * e2, gamma)
    return value, bool(gamma >= 2 * e2)


# ---------------------------------------------------------------- empirical


def empirical_err(Vtrue, Vhat) -> float:
    """``max_i min_{eta = +-1} ||eta vhat_i - v_i||_inf``."""
    Vtrue = as_matrix(Vtrue, "Vtrue")
    Vhat = as_matrix(Vhat, "Vhat")
    if Vtrue.shape != Vhat.shape:
        raise DomainError(f"shape mismatch {Vtrue.shape} vs {Vhat.shape}")
    plus = np.abs(Vhat - Vtrue).max(axis=0)
    minus = np.abs(Vhat + Vtrue).max(axis=0)
    return float(np.minimum(plus, minus).max())


def max_l2_err(Vtrue, Vhat) -> float:
    """Sign-aligned ``max_i ||vhat_i - v_i||_2``."""
    Vtrue = as_matrix(Vtrue, "Vtrue")
    Vhat = as_matrix(Vhat, "Vhat")
    plus = np.linalg.norm(Vhat - Vtrue, axis=0)
    minus = np.linalg.norm(Vhat + Vtrue, axis=0)
    return float(np.minimum(plus, minus).max())


# ------------------------------------------------------------------- report


@dataclass(frozen=True)
class PerturbationReport:
    mode: str
    d1: int
    d2: int
    r: int
    mu: float
    mu0: float
    tau: float
    tau0: float
    kappa: float
    kappa0: float
    epsilon: float
    epsilon0: float
    gamma0: float
    delta: float
    delta0: float
    omega: float
    omega0: float
    E_spectral: float
    bound_bulk: float
    bound_indiv: float
    bound_l2_wedin: float
    precond_bulk: bool
    precond_indiv: bool
    precond_match: bool
    err_empirical_u: float
    err_empirical_v: float
    bound_indiv_u: float
    bound_indiv_v: float
    wedin_valid: bool
    err_l2: float

    def to_dict(self):
        return asdict(self)


def perturbation_report(A, E, r: int, mode: str = "sym", delta: Optional[float] = None) -> PerturbationReport:
    """Every quantity, bound, precondition and empirical error for ``(A, E, r)``.

    ``mode='sym'`` uses the symmetric eigenvector theory; ``mode='rect'``
    the singular-vector theory. ``delta`` overrides the isolation radius
    (``delta`` in symmetric mode, ``delta0`` in rectangular mode).
    """
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    wedin, wedin_ok = bound_l2_wedin(A, E, r)
    if mode == "sym":
        q = sym_quantities(A, E, r, delta)
        rq = rect_quantities(A, E, r)
        Vt = eig_sym(A + E).vectors[:, :r]
        err = empirical_err(q.V, Vt)
        indiv = _indiv_value(q)
        match = _match_precond(q)
        bulk_ok = _bulk_precond(q)
        return PerturbationReport(
            mode="sym",
            d1=q.d,
            d2=q.d,
            r=r,
            mu=q.mu,
            mu0=rq.mu0,
            tau=q.tau,
            tau0=rq.tau0,
            kappa=q.kappa,
            kappa0=rq.kappa0,
            epsilon=q.epsilon,
            epsilon0=rq.epsilon0,
            gamma0=rq.gamma0,
            delta=q.delta,
            delta0=rq.delta0,
            omega=q.omega,
            omega0=rq.omega0,
            E_spectral=q.E_spectral,
            bound_bulk=_bulk_value(q),
            bound_indiv=indiv,
            bound_l2_wedin=wedin,
            precond_bulk=bulk_ok,
            precond_indiv=bool(bulk_ok and q.delta > q.E_spectral and match),
            precond_match=match,
            err_empirical_u=err,
            err_empirical_v=err,
            bound_indiv_u=indiv,
            bound_indiv_v=indiv,
            wedin_valid=wedin_ok,
            err_l2=max_l2_err(q.V, Vt),
        )
    if mode != "rect":
        raise DomainError(f"unknown mode {mode!r}; expected 'sym' or 'rect'")
    q = rect_quantities(A, E, r, delta)
    Ut, _, Vt = svd(A + E, r)
    bw = _rect_weighted_bound(q)
    b_u = math.sqrt(2) * bw / math.sqrt(q.d1)
    b_v = math.sqrt(2) * bw / math.sqrt(q.d2)
    bulk_w = 0.0 if q.kappa0 == 0 else 6 * math.sqrt(q.mu0) * q.r * q.omega0
    match = bool(
        q.sigma_r - q.epsilon0
        > max(16 * q.r * q.mu0 * (q.tau0 + q.r * q.kappa0), 64 * q.r**1.5 * math.sqrt(q.mu0) * (1 + q.r * q.mu0) * q.kappa0)
    )
    return PerturbationReport(
        mode="rect",
        d1=q.d1,
        d2=q.d2,
        r=r,
        mu=q.mu_v,
        mu0=q.mu0,
        tau=norm_inf(E),
        tau0=q.tau0,
        kappa=float(math.sqrt(q.d1) * np.abs(E @ q.V).max()),
        kappa0=q.kappa0,
        epsilon=norm_inf(A - (q.U * q.sigma) @ q.V.T),
        epsilon0=q.epsilon0,
        gamma0=q.gamma0,
        delta=q.delta0,
        delta0=q.delta0,
        omega=_div(8 * (1 + r * q.mu0) * q.kappa0, q.sigma_r - q.epsilon0),
        omega0=q.omega0,
        E_spectral=q.E_spectral,
        bound_bulk=math.sqrt(2) * bulk_w / math.sqrt(min(q.d1, q.d2)),
        bound_indiv=max(b_u, b_v),
        bound_l2_wedin=wedin,
        precond_bulk=_rect_bulk_precond(q),
        precond_indiv=_rect_precond(q),
        precond_match=match,
        err_empirical_u=empirical_err(q.U, Ut),
        err_empirical_v=empirical_err(q.V, Vt),
        bound_indiv_u=b_u,
        bound_indiv_v=b_v,
        wedin_valid=wedin_ok,
        err_l2=max(max_l2_err(q.U, Ut), max_l2_err(q.V, Vt)),
    )
