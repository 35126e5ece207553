"""Fixed-point construction of the rotated leading eigenbasis.

For symmetric ``A`` with top-``r`` eigenvectors ``V`` and a symmetric
perturbation ``E`` we look for ``Qbar = V_perp Q`` solving

    Qbar L1 - L2 Qbar = H - Qbar H^T Qbar,

with ``H = (I - V V^T) E V``, ``L1 = Lambda_1 + V^T E V`` and
``L2 = (A - A_r) + (I - V V^T) E (I - V V^T)``. The solution gives
``Vbar = (V + Qbar)(I + Qbar^T Qbar)^(-1/2)``, an orthonormal basis that
block-diagonalises ``A + E``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DomainError, NonConvergenceError, PreconditionError, SingularityError
from .matcore import as_matrix, coherence, hermitian_dilation, max_norm, norm_inf
from .spectra import check_symmetric, eig_sym

log = logging.getLogger(__name__)

SEPARATION_RTOL = 1e-10


class SylvesterSolver:
    """Solver for ``Q L1 - L2 Q = C`` with symmetric ``L1`` (r x r).

    ``L1 = W diag(theta) W^T`` turns the equation into ``r`` independent
    systems ``(theta_i I - L2) y_i = (C W)_i``; each matrix is LU-factored
    once so repeated right-hand sides are cheap.
    """

    def __init__(self, L1, L2):
        L1 = check_symmetric(L1, "L1")
        L2 = as_matrix(L2, "L2")
        d = L2.shape[0]
        if L2.shape != (d, d):
            raise DomainError(f"L2 must be square, got {L2.shape}")
        self.theta, self.W = np.linalg.eigh(L1)
        sym = np.abs(L2 - L2.T).max() <= 1e-12 * max(np.abs(L2).max(), 1e-300)
        spec2 = np.linalg.eigvalsh(0.5 * (L2 + L2.T)) if sym else np.linalg.eigvals(L2)
        gaps = np.abs(self.theta[:, None] - spec2[None, :])
        scale = max(np.abs(self.theta).max(), np.abs(spec2).max())
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        self.separation = float(gaps[i, j])
        if not self.separation > SEPARATION_RTOL * scale:
            raise SingularityError(
                f"Sylvester operator is singular: eigenvalue {self.theta[i]:.6g} of L1 "
                f"collides with eigenvalue {complex(spec2[j]).real:.6g} of L2 "
                f"(separation {self.separation:.3e})"
            )
        eye = np.eye(d)
        self._lu = [lu_factor(t * eye - L2) for t in self.theta]
        self.L1, self.L2 = L1, L2

    def solve(self, C) -> np.ndarray:
        C = np.asarray(C, dtype=float)
        if C.shape != (self.L2.shape[0], self.W.shape[0]):
            raise DomainError(f"right-hand side has shape {C.shape}")
        CW = C @ self.W
        Y = np.column_stack([lu_solve(f, CW[:, i]) for i, f in enumerate(self._lu)])
        Q = Y @ self.W.T
        # one step of iterative refinement
        R = C - (Q @ self.L1 - self.L2 @ Q)
        if np.abs(R).max() > 1e-14 * max(np.abs(C).max(), 1e-300):
            RW = R @ self.W
            Q = Q + np.column_stack([lu_solve(f, RW[:, i]) for i, f in enumerate(self._lu)]) @ self.W.T
        return Q


def solve_sylvester(L1, L2, C) -> np.ndarray:
    """Solve ``Q L1 - L2 Q = C`` for ``Q`` (d x r)."""
    return SylvesterSolver(L1, L2).solve(C)


@dataclass(frozen=True)
class FixpointProblem:
    """A symmetric instance ``(A, E, r)`` with the blocks of the quadratic equation."""

    A: np.ndarray
    E: np.ndarray
    r: int
    V: np.ndarray
    lambdas: np.ndarray
    H: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    mu: float
    tau: float
    kappa: float
    epsilon: float

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def lambda_r(self) -> float:
        return float(abs(self.lambdas[self.r - 1]))

    @property
    def omega(self) -> float:
        den = self.lambda_r - self.epsilon
        if den <= 0:
            return float("inf")
        return 8.0 * (1.0 + self.r * self.mu) * self.kappa / den

    @property
    def precondition(self) -> bool:
        r, mu = self.r, self.mu
        return self.lambda_r - self.epsilon > 4 * r * mu * (self.tau + 2 * r * self.kappa)

    @classmethod
    def build(cls, A, E, r: int) -> "FixpointProblem":
        A = check_symmetric(A, "A")
        E = check_symmetric(E, "E")
        d = A.shape[0]
        if E.shape != A.shape:
            raise DomainError(f"A is {A.shape} but E is {E.shape}")
        if not 1 <= r <= d:
            raise DomainError(f"rank {r} must be in [1, {d}]")
        dec = eig_sym(A)
        lam, V = dec.values[:r].copy(), dec.vectors[:, :r].copy()
        A_r = (V * lam) @ V.T
        EV = E @ V
        H = EV - V @ (V.T @ EV)
        L1 = np.diag(lam) + V.T @ EV
        P = np.eye(d) - V @ V.T
        L2 = (A - A_r) + P @ E @ P
        return cls(
            A=A,
            E=E,
            r=r,
            V=V,
            lambdas=lam,
            H=H,
            L1=0.5 * (L1 + L1.T),
            L2=0.5 * (L2 + L2.T),
            mu=coherence(V),
            tau=norm_inf(E),
            kappa=float(np.sqrt(d) * np.abs(EV).max()),
            epsilon=norm_inf(A - A_r),
        )

    @classmethod
    def from_rectangular(cls, A, E, r: int) -> "FixpointProblem":
        """Dilated problem of rank ``2r`` for a rectangular pair."""
        A = as_matrix(A, "A")
        E = as_matrix(E, "E")
        if A.shape != E.shape:
            raise DomainError(f"A is {A.shape} but E is {E.shape}")
        return cls.build(hermitian_dilation(A), hermitian_dilation(E), 2 * r)


@dataclass(frozen=True)
class FixpointSolution:
    Qbar: np.ndarray
    Vbar: np.ndarray
    iterations: int
    residual: float
    equation_residual: float
    block_offdiag: float
    omega: float
    trace: List[float] = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "equation_residual": self.equation_residual,
            "block_offdiag": self.block_offdiag,
            "omega": self.omega,
            "qbar_max": float(np.abs(self.Qbar).max()),
            "trace": list(self.trace),
        }


def build_vbar(Qbar, V) -> np.ndarray:
    """``(V + Qbar)(I + Qbar^T Qbar)^(-1/2)``."""
    Qbar = as_matrix(Qbar, "Qbar")
    V = as_matrix(V, "V")
    if Qbar.shape != V.shape:
        raise DomainError(f"Qbar is {Qbar.shape} but V is {V.shape}")
    leak = np.abs(V.T @ Qbar).max()
    if leak > 1e-8 * max(1.0, np.abs(Qbar).max()):
        raise PreconditionError(f"Qbar is not orthogonal to V: max|V^T Qbar| = {leak:.3e}")
    w, W = np.linalg.eigh(np.eye(V.shape[1]) + Qbar.T @ Qbar)
    return (V + Qbar) @ ((W / np.sqrt(w)) @ W.T)


def block_offdiag(Vbar, At) -> float:
    """``||(I - Vbar Vbar^T) At Vbar||_max``."""
    AV = At @ Vbar
    return max_norm(AV - Vbar @ (Vbar.T @ AV))


def equation_residual(p: FixpointProblem, Qbar) -> float:
    return max_norm(Qbar @ p.L1 - p.L2 @ Qbar - p.H + Qbar @ p.H.T @ Qbar)


def solve_qbar(p: FixpointProblem, tol: float = 1e-10, max_iter: int = 200) -> FixpointSolution:
    """Iterate ``Qbar <- T^-1(H - Qbar H^T Qbar)`` from ``Qbar = 0``.

    Stops once the quadratic-equation residual is at most
    ``tol * ||H||_max``. Each iterate is projected back onto the
    orthogonal complement of ``V``.
    """
    if not p.precondition:
        log.warning(
            "contraction precondition fails (|lambda_r| - eps = %.4g <= 4 r mu (tau + 2 r kappa) = %.4g); "
            "the iteration may diverge",
            p.lambda_r - p.epsilon,
            4 * p.r * p.mu * (p.tau + 2 * p.r * p.kappa),
        )
    solver = SylvesterSolver(p.L1, p.L2)
    V = p.V
    hmax = max_norm(p.H)
    Q = np.zeros_like(p.H)
    trace: List[float] = []
    for it in range(1, max_iter + 1):
        Qn = solver.solve(p.H - Q @ p.H.T @ Q)
        Qn = Qn - V @ (V.T @ Qn)
        change = max_norm(Qn - Q)
        trace.append(change)
        Q = Qn
        if not np.isfinite(change):
            break
        res = equation_residual(p, Q)
        if res <= tol * hmax:
            Vbar = build_vbar(Q, V)
            return FixpointSolution(
                Qbar=Q,
                Vbar=Vbar,
                iterations=it,
                residual=change,
                equation_residual=res,
                block_offdiag=block_offdiag(Vbar, p.A + p.E),
                omega=p.omega,
                trace=trace,
            )
    raise NonConvergenceError(
        f"fixed-point iteration did not reach tol={tol:g} in {len(trace)} iterations "
        f"(last change {trace[-1]:.3e})",
        trace=trace,
    )
