"""Kernel functions, Gram matrices and feature-space centering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError

KERNEL_KINDS = ("gaussian", "laplace", "linear")

# rows per block when assembling Gram matrices; bounds the
# (block, N, d) temporary
_BLOCK_ELEMS = 4_000_000


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind != "linear" and not self.sigma > 0:
            raise ValueError(f"{self.kind} kernel needs sigma > 0, got {self.sigma}")


@dataclass(frozen=True)
class KernelMatrix:
    gram: np.ndarray
    centered: bool = False


def _pairwise(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # Entrywise evaluation, identical arithmetic for every (i, j) so that a
    # Gram entry equals the scalar kernel_eval bit for bit.
    if spec.kind == "linear":
        return np.sum(A[:, None, :] * B[None, :, :], axis=-1)
    diff = A[:, None, :] - B[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    if spec.kind == "gaussian":
        return np.exp(-sq / (2.0 * spec.sigma * spec.sigma))
    return np.exp(-np.sqrt(sq) / spec.sigma)


def _blocked(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, B.shape[0] * max(1, B.shape[1])))
    for start in range(0, A.shape[0], step):
        out[start:start + step] = _pairwise(spec, A[start:start + step], B)
    return out


def _as_points(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be an (N, d) array, got shape {X.shape}")
    return X


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(_pairwise(spec, a[None, :], b[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, X) -> KernelMatrix:
    X = _as_points(X)
    if X.shape[0] == 0:
        raise ShapeError("cannot build a kernel matrix from an empty dataset")
    return KernelMatrix(_blocked(spec, X, X), centered=False)


def cross_kernel_vector(spec: KernelSpec, X, x_star) -> np.ndarray:
    """Kernel evaluations ``k(x_i, x_star)`` against every training point."""
    X = _as_points(X)
    x_star = np.asarray(x_star, dtype=np.float64).ravel()
    if x_star.shape[0] != X.shape[1]:
        raise ShapeError(f"dimension mismatch: {x_star.shape[0]} vs {X.shape[1]}")
    return _blocked(spec, X, x_star[None, :])[:, 0]


def cross_kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """``out[i, j] = k(x_i, y_j)`` for training points X and query points Y."""
    X = _as_points(X)
    Y = _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"dimension mismatch: {Y.shape[1]} vs {X.shape[1]}")
    return _blocked(spec, X, Y)


def center_gram(K: np.ndarray) -> np.ndarray:
    """Two-sided centering ``K - 1K/N - K1/N + 1K1/N^2`` of a square matrix."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got {K.shape}")
    col_means = K.mean(axis=0)
    row_means = K.mean(axis=1)
    Kc = K - col_means[None, :] - row_means[:, None] + K.mean()
    return 0.5 * (Kc + Kc.T)


def center_kernel(K: KernelMatrix) -> KernelMatrix:
    if K.centered:
        raise UsageError("kernel matrix is already centered")
    return KernelMatrix(center_gram(K.gram), centered=True)


@dataclass(frozen=True)
class CenteringStats:
    """What is needed to center a test-point similarity vector consistently
    with a centered training Gram matrix."""
    row_means: np.ndarray  # K 1 / N of the uncentered training Gram
    grand_mean: float      # 1'K1 / N^2

    @classmethod
    def from_gram(cls, K: np.ndarray) -> "CenteringStats":
        K = np.asarray(K, dtype=np.float64)
        return cls(K.mean(axis=1), float(K.mean()))


def center_cross_vector(k: np.ndarray, stats: CenteringStats) -> np.ndarray:
    """One-sided centering of ``k(x_i, x*)``:
    ``k - K1/N - 1(1'k)/N + 1(1'K1)/N^2``."""
    k = np.asarray(k, dtype=np.float64)
    if k.shape != stats.row_means.shape:
        raise ShapeError(f"similarity vector has length {k.shape}, expected {stats.row_means.shape}")
    return k - stats.row_means - k.mean() + stats.grand_mean


def center_cross_matrix(k: np.ndarray, stats: CenteringStats) -> np.ndarray:
    """Column-wise :func:`center_cross_vector` for an (N, M) block."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != stats.row_means.shape[0]:
        raise ShapeError(f"similarity block has shape {k.shape}")
    return k - stats.row_means[:, None] - k.mean(axis=0)[None, :] + stats.grand_mean
