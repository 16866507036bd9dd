"""Shared latent subspace: dual (kernel) and primal (covariance) eigenproblems,
interconnection matrices and out-of-sample encoding.

Conventions: data and feature matrices hold one sample per row (N x d).
Latent codes are stored as ``H`` with shape (s, N), one code per column, and
rows of ``H`` orthonormal. Interconnection matrices have shape (d_f, s).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DegenerateSpectrumError, RankError, ShapeError, UsageError
from .kernels import (CenteringStats, KernelMatrix, KernelSpec, center_cross_matrix,
                      cross_kernel_matrix)
from .linalg import frobenius_norm, sym_eig

RANK_RTOL = 1e-10


@dataclass
class ViewConfig:
    name: str
    eta: float = 1.0
    kernel: KernelSpec | None = None
    feature_map: nn.FeatureMapParams | None = None
    preimage_map: nn.FeatureMapParams | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"view {self.name!r}: eta must be > 0, got {self.eta}")
        if (self.kernel is None) == (self.feature_map is None):
            raise ValueError(f"view {self.name!r}: give exactly one of kernel or feature_map")

    @property
    def explicit(self) -> bool:
        return self.feature_map is not None


@dataclass
class LatentModel:
    H: np.ndarray
    Lambda: np.ndarray
    views: list[ViewConfig]
    interconnections: list[np.ndarray | None] = field(default_factory=list)
    training_refs: list[np.ndarray] | None = None
    centered: bool = True
    grams: list[np.ndarray] | None = None            # centered training Gram per kernel view
    centering: list[CenteringStats] | None = None    # for centering test similarities
    feature_means: list[np.ndarray | None] = field(default_factory=list)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.float64)
        self.Lambda = np.asarray(self.Lambda, dtype=np.float64)
        s, n = self.H.shape
        if self.Lambda.shape != (s,):
            raise ShapeError(f"Lambda has shape {self.Lambda.shape}, expected ({s},)")
        if s > n:
            raise ShapeError(f"latent dimension {s} exceeds sample count {n}")
        if np.linalg.norm(self.H @ self.H.T - np.eye(s)) > 1e-8:
            raise ShapeError("rows of H are not orthonormal")
        scale = max(1.0, float(np.max(np.abs(self.Lambda), initial=0.0)))
        if np.any(self.Lambda < -1e-10 * scale):
            raise ShapeError("negative eigenvalue in Lambda")
        if not self.interconnections:
            self.interconnections = [None] * len(self.views)
        if not self.feature_means:
            self.feature_means = [None] * len(self.views)

    @property
    def s(self) -> int:
        return self.H.shape[0]

    @property
    def n_train(self) -> int:
        return self.H.shape[1]

    def view_index(self, name: str) -> int:
        for i, v in enumerate(self.views):
            if v.name == name:
                return i
        raise KeyError(name)


def _gram(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        if not K.centered:
            raise UsageError("solve_dual expects centered kernel matrices")
        return K.gram
    return np.asarray(K, dtype=np.float64)


def kernel_sum(kernels, etas) -> np.ndarray:
    grams = [_gram(K) for K in kernels]
    if len(grams) != len(etas):
        raise ShapeError(f"{len(grams)} kernels but {len(etas)} etas")
    if not grams:
        raise ShapeError("need at least one kernel")
    n = grams[0].shape[0]
    for G in grams:
        if G.shape != (n, n):
            raise ShapeError(f"kernel shapes differ: {G.shape} vs {(n, n)}")
    total = np.zeros((n, n))
    for G, eta in zip(grams, etas):
        if not eta > 0:
            raise ValueError(f"eta must be > 0, got {eta}")
        total += G / eta
    return total


def solve_dual(kernels, etas, s: int):
    """Top-``s`` eigenpairs of ``sum_l K_l / eta_l``; returns ``(H, Lambda)``."""
    S = kernel_sum(kernels, etas)
    if not 1 <= s <= S.shape[0]:
        raise ShapeError(f"s must be in [1, {S.shape[0]}], got {s}")
    res = sym_eig(S, s)
    return res.eigenvectors.T.copy(), res.eigenvalues


def compute_interconnections(Phi, H, eta: float) -> np.ndarray:
    """Stationary interconnection ``(1/eta) sum_i phi(x_i) h_i^T``."""
    Phi = np.asarray(Phi, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if Phi.ndim != 2 or H.ndim != 2 or Phi.shape[0] != H.shape[1]:
        raise ShapeError(f"features {Phi.shape} and codes {H.shape} do not conform")
    return (Phi.T @ H.T) / eta


def check_invertible(Lambda) -> None:
    Lambda = np.asarray(Lambda)
    top = float(np.max(Lambda, initial=0.0))
    if not top > 0:
        raise RankError("no positive eigenvalue; the latent model is degenerate")
    small = np.flatnonzero(Lambda <= RANK_RTOL * top)
    if small.size:
        raise RankError(f"components {small.tolist()} have eigenvalues below "
                        f"{RANK_RTOL:g} x lambda_max; reduce s")


def solve_primal(Phis, etas, s: int):
    """Covariance-form solve on stacked centered features.

    Returns ``(interconnections, Lambda, H)`` with one (d_l, s) matrix per
    view. Scaling is chosen so that the result coincides with the dual solve:
    ``U_l = (1/eta_l) Phi_l^T H^T`` and ``H H^T = I``.
    """
    Phis = [np.asarray(P, dtype=np.float64) for P in Phis]
    if len(Phis) != len(etas):
        raise ShapeError(f"{len(Phis)} feature matrices but {len(etas)} etas")
    n = Phis[0].shape[0]
    if any(P.ndim != 2 or P.shape[0] != n for P in Phis):
        raise ShapeError("feature matrices must all have N rows")
    # symmetric form of the block matrix: D^-1/2 Phi Phi^T D^-1/2
    Psi = np.hstack([P / np.sqrt(eta) for P, eta in zip(Phis, etas)])
    dim = Psi.shape[1]
    if not 1 <= s <= min(dim, n):
        raise ShapeError(f"s must be in [1, {min(dim, n)}], got {s}")
    res = sym_eig(Psi.T @ Psi, s)
    lam = res.eigenvalues
    if np.any(lam < 1e-12):
        raise RankError("covariance eigenvalue below 1e-12; cannot recover latent codes")
    W = res.eigenvectors
    H = (W.T @ Psi.T) / np.sqrt(lam)[:, None]
    # same sign convention as the dual solve: first sizeable entry positive
    for k in range(s):
        nz = np.flatnonzero(np.abs(H[k]) > 1e-12)
        if nz.size and H[k, nz[0]] < 0:
            H[k] = -H[k]
            W[:, k] = -W[:, k]
    Us, start = [], 0
    for P, eta in zip(Phis, etas):
        d = P.shape[1]
        Us.append(W[start:start + d] * np.sqrt(lam)[None, :] / np.sqrt(eta))
        start += d
    return Us, lam, H


def dual_residual(kernels, etas, H, Lambda) -> float:
    """``||S H^T - H^T Lambda||_F / ||S||_F``."""
    S = kernel_sum(kernels, etas)
    R = S @ H.T - H.T * Lambda[None, :]
    return frobenius_norm(R) / max(frobenius_norm(S), np.finfo(float).tiny)


def _view_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise ShapeError(f"view input has shape {x.shape}, expected dim {dim}")
    return X, single


def view_projection(model: LatentModel, index: int, x) -> np.ndarray:
    """Contribution of one view to ``Lambda h*``, shape (s, M)."""
    view = model.views[index]
    if view.kernel is not None:
        if model.training_refs is None or model.centering is None:
            raise UsageError("kernel view needs training references to encode")
        Xtr = model.training_refs[index]
        X, _ = _view_batch(x, Xtr.shape[1])
        k = cross_kernel_matrix(view.kernel, Xtr, X)
        if model.centered:
            k = center_cross_matrix(k, model.centering[index])
        return (model.H @ k) / view.eta
    U = model.interconnections[index]
    if U is None:
        raise UsageError(f"view {view.name!r} has no interconnection matrix")
    X, _ = _view_batch(x, view.feature_map.in_dim)
    Phi = nn.forward(view.feature_map, X)
    if model.feature_means[index] is not None:
        Phi = Phi - model.feature_means[index]
    return U.T @ Phi.T


def encode(model: LatentModel, sample) -> np.ndarray:
    """Latent code ``h* = Lambda^-1 sum_views (view projection)``.

    ``sample`` is a list with one entry per view: a vector, or an (M, d)
    batch. Returns shape (s,) or (s, M) accordingly.
    """
    if len(sample) != len(model.views):
        raise ShapeError(f"expected {len(model.views)} views, got {len(sample)}")
    check_invertible(model.Lambda)
    single = np.asarray(sample[0]).ndim == 1
    total = sum(view_projection(model, i, x) for i, x in enumerate(sample))
    h = total / model.Lambda[:, None]
    return h[:, 0] if single else h


def encode_features(model: LatentModel, features) -> np.ndarray:
    """Encode from already centered feature vectors via the interconnections."""
    check_invertible(model.Lambda)
    total = np.zeros(model.s)
    for U, phi in zip(model.interconnections, features):
        if U is None:
            raise UsageError("model lacks interconnection matrices")
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (U.shape[0],):
            raise ShapeError(f"feature vector shape {phi.shape}, expected ({U.shape[0]},)")
        total = total + U.T @ phi
    return total / model.Lambda


def require_spectrum(Lambda) -> None:
    top = float(np.max(Lambda, initial=0.0))
    if not top > 1e-12:
        raise DegenerateSpectrumError("kernel sum has no positive eigenvalue (all data identical?)")
