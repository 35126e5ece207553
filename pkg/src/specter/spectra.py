"""Symmetric eigendecomposition, SVD through the Hermitian dilation, and
the small amount of subspace geometry the perturbation code needs.

Eigenvalues are ordered by decreasing magnitude; equal magnitudes put the
positive value first. Each eigenvector is signed so that its
largest-magnitude entry is positive (lowest index wins ties), which makes
every decomposition deterministic for a given input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonConvergenceError, PreconditionError
from .matcore import as_matrix, check_orthonormal, hermitian_dilation

SYMMETRY_TOL = 1e-10
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs (``mode='symmetric'``) or one side of an SVD.

    ``vectors[:, i]`` belongs to ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray
    mode: str = "symmetric"

    def top(self, r):
        if r > len(self.values):
            raise DomainError(f"rank {r} exceeds the {len(self.values)} available pairs")
        return self.values[:r], self.vectors[:, :r]

    def reconstruct(self, r=None) -> np.ndarray:
        k = len(self.values) if r is None else r
        V = self.vectors[:, :k]
        return (V * self.values[:k]) @ V.T


def check_symmetric(A, name="A") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise PreconditionError(f"{name} must be square, got shape {A.shape}")
    scale = np.abs(A).max()
    asym = np.abs(A - A.T).max()
    if asym > SYMMETRY_TOL * scale:
        raise PreconditionError(f"{name} is not symmetric: max|A - A^T| = {asym:.3e}")
    return 0.5 * (A + A.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    mags = np.abs(out)
    peak = mags.max(axis=0)
    for j in range(out.shape[1]):
        i = int(np.flatnonzero(mags[:, j] >= peak[j] * (1 - 1e-9))[0])
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _order_by_magnitude(values: np.ndarray) -> np.ndarray:
    order = list(np.argsort(-np.abs(values), kind="stable"))
    scale = np.abs(values).max() if len(values) else 0.0
    tol = _TIE_RTOL * max(scale, np.finfo(float).tiny)
    # within runs of (near-)equal magnitude, larger value first
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(abs(values[order[i]]) - abs(values[order[j]])) <= tol:
            j += 1
        order[i:j] = sorted(order[i:j], key=lambda k: -values[k])
        i = j
    return np.asarray(order, dtype=int)


def jacobi_eigh(A, tol=1e-13, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius
    norm is at most ``tol * ||A||_F``. Returns unsorted ``(values, vectors)``.
    """
    A = np.array(check_symmetric(A), dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    fro = np.sqrt(np.sum(A * A))
    for _ in range(max_sweeps + 1):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * fro:
            return np.diag(A).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise NonConvergenceError(
        f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal {off:.3e})"
    )


def eig_sym(A, method="lapack") -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    ``method='lapack'`` uses ``numpy.linalg.eigh``; ``method='jacobi'``
    uses :func:`jacobi_eigh`. Both return the same ordering and sign
    convention.
    """
    S = check_symmetric(A)
    if method == "lapack":
        values, vectors = np.linalg.eigh(S)
    elif method == "jacobi":
        values, vectors = jacobi_eigh(S)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = _order_by_magnitude(values)
    return SpectralDecomposition(values[order], _fix_signs(vectors[:, order]), "symmetric")


def eig_top(S, r, by="value"):
    """Top-``r`` eigenpairs of a symmetric matrix, ordered by value or magnitude."""
    dec = eig_sym(S)
    if r > len(dec.values):
        raise DomainError(f"rank {r} exceeds dimension {len(dec.values)}")
    if by == "abs":
        return dec.values[:r].copy(), dec.vectors[:, :r].copy()
    order = np.argsort(-dec.values, kind="stable")[:r]
    return dec.values[order], dec.vectors[:, order]


def _complete(basis: np.ndarray, total: int) -> np.ndarray:
    """Extend orthonormal columns to ``total`` orthonormal columns."""
    d, k = basis.shape
    if k >= total:
        return basis[:, :total]
    Q, _ = np.linalg.qr(np.hstack([basis, np.eye(d)]))
    return np.hstack([basis, Q[:, k:total]])


def svd(M, r):
    """Top-``r`` singular triplets via the Hermitian dilation.

    A positive dilation eigenvalue ``s`` with eigenvector ``(u; v)/sqrt(2)``
    gives the triplet ``(u, s, v)``. Zero singular values get any
    orthonormal completion, which is a valid choice for them.

    Returns ``(U, sigma, V)`` with ``U`` d1 x r, ``V`` d2 x r.
    """
    M = as_matrix(M)
    d1, d2 = M.shape
    if r < 0 or r > min(d1, d2):
        raise DomainError(f"rank {r} must be in [0, {min(d1, d2)}]")
    dec = eig_sym(hermitian_dilation(M))
    order = np.argsort(-dec.values, kind="stable")[:r]
    sigma = np.clip(dec.values[order], 0.0, None)
    X = dec.vectors[:, order]
    zero_tol = max(d1, d2) * np.finfo(float).eps * max(sigma[0] if r else 0.0, np.finfo(float).tiny)
    k = int(np.sum(sigma > zero_tol))
    U = X[:d1, :k]
    V = X[d1:, :k]
    U = U / np.linalg.norm(U, axis=0)
    V = V / np.linalg.norm(V, axis=0)
    if k < r:
        sigma[k:] = 0.0
        U = _complete(U, r)
        V = _complete(V, r)
    return U, sigma, V


def _is_symmetric(A: np.ndarray) -> bool:
    if A.shape[0] != A.shape[1]:
        return False
    return np.abs(A - A.T).max() <= SYMMETRY_TOL * np.abs(A).max()


def low_rank_approx(A, r) -> np.ndarray:
    """Best rank-``r`` approximation: top ``r`` eigenpairs by magnitude for
    symmetric input, top ``r`` singular triplets otherwise."""
    A = as_matrix(A, "A")
    if r < 0 or r > min(A.shape):
        raise DomainError(f"rank {r} must be in [0, {min(A.shape)}]")
    if r == 0:
        return np.zeros_like(A)
    if _is_symmetric(A):
        return eig_sym(A).reconstruct(r)
    U, s, V = svd(A, r)
    return (U * s) @ V.T


def align_up_to_sign(Vhat, Vref) -> np.ndarray:
    """Flip each column of ``Vhat`` to minimise its sup-distance to ``Vref``."""
    Vhat = as_matrix(Vhat, "Vhat")
    Vref = as_matrix(Vref, "Vref")
    if Vhat.shape != Vref.shape:
        raise DomainError(f"shape mismatch {Vhat.shape} vs {Vref.shape}")
    plus = np.abs(Vhat - Vref).max(axis=0)
    minus = np.abs(-Vhat - Vref).max(axis=0)
    eta = np.where(minus < plus, -1.0, 1.0)
    return Vhat * eta


def subspace_distance(M1, M2) -> float:
    """``||M1 M1^T - M2 M2^T||_2``, the sine of the largest canonical angle."""
    M1 = check_orthonormal(M1, name="M1")
    M2 = check_orthonormal(M2, name="M2")
    if M1.shape != M2.shape:
        raise DomainError(f"shape mismatch {M1.shape} vs {M2.shape}")
    return float(np.linalg.norm(M1 @ M1.T - M2 @ M2.T, 2))


def matrix_inverse_and_sqrt(S):
    """Return ``(S^-1, S^(1/2), S^(-1/2))`` for a symmetric positive definite ``S``."""
    S = check_symmetric(S, "S")
    w, W = np.linalg.eigh(S)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise PreconditionError(
            f"matrix is not positive definite: eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}]"
        )
    root = np.sqrt(w)
    inv = (W / w) @ W.T
    sqrt = (W * root) @ W.T
    inv_sqrt = (W / root) @ W.T
    return inv, sqrt, inv_sqrt
