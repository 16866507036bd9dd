"""Dense real linear algebra: a symmetric Jacobi eigensolver plus thin,
shape-checked wrappers around numpy products.

Everything is float64. Matrices are plain ``numpy.ndarray`` objects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, ShapeError

SYMMETRY_RTOL = 1e-12
MAX_SWEEPS = 60
SIGN_EPS = 1e-12


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray   # (k,), descending
    eigenvectors: np.ndarray  # (n, k), unit-norm columns
    sweeps: int = 0


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name} has non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def _check_symmetric(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix must be square, got {a.shape}")
    scale = max(frobenius_norm(a), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ShapeError("matrix is not symmetric")


@njit(cache=True)
def _cyclic_sweeps(A, Vt, tol, max_sweeps):
    # Row-cyclic ordering. A is kept exactly symmetric by mirroring rows p, q
    # into columns p, q; Vt holds eigenvectors as rows.
    n = A.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol:
                    continue
                rotated = True
                app = A[p, p]
                aqq = A[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    if k == p or k == q:
                        continue
                    akp = A[p, k]
                    akq = A[q, k]
                    npk = c * akp - s * akq
                    nqk = s * akp + c * akq
                    A[p, k] = npk
                    A[k, p] = npk
                    A[q, k] = nqk
                    A[k, q] = nqk
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vp = Vt[p, k]
                    vq = Vt[q, k]
                    Vt[p, k] = c * vp - s * vq
                    Vt[q, k] = s * vp + c * vq
        if not rotated:
            return sweep
    return -1


def jacobi_eigh(a, max_sweeps: int = MAX_SWEEPS):
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` in no particular order;
    eigenvectors are the columns of the second element.
    """
    a = as_matrix(a)
    _check_symmetric(a)
    n = a.shape[0]
    A = np.ascontiguousarray(0.5 * (a + a.T))
    Vt = np.eye(n)
    tol = 4.0 * np.finfo(float).eps * frobenius_norm(A)
    sweeps = _cyclic_sweeps(A, Vt, tol, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return A.diagonal().copy(), Vt.T.copy(), sweeps


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > SIGN_EPS)
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def sym_eig(a, k: int | None = None) -> SymEigResult:
    """Top-``k`` eigenpairs of a symmetric matrix, eigenvalues descending.

    Each eigenvector is sign-fixed so that its first entry with magnitude
    above 1e-12 is positive. Exact ties in eigenvalue are ordered by the
    lexicographic order of the sign-fixed eigenvectors (descending).
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix must be square, got {a.shape}")
    if k is None:
        k = n
    if not 1 <= k <= n:
        raise ShapeError(f"k must be in [1, {n}], got {k}")
    vals, vecs, sweeps = jacobi_eigh(a)
    vecs = _fix_signs(vecs)
    order = sorted(range(n), key=lambda j: (vals[j], tuple(vecs[:, j])), reverse=True)
    order = np.array(order[:k], dtype=int)
    return SymEigResult(vals[order].copy(), vecs[:, order].copy(), sweeps)
