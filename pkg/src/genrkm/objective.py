"""Training energies and their gradients for explicit feature maps.

Within a gradient pass the eigen-solution ``(H, Lambda)`` is a constant; the
interconnection matrices are recomputed from the current features, so the
gradient flows through them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeError, UsageError
from .subspace import compute_interconnections


@dataclass(frozen=True)
class ObjectiveConfig:
    c_stab: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.c_stab < 0 or self.gamma < 0:
            raise ValueError("c_stab and gamma must be non-negative")


@dataclass(frozen=True)
class EnergyBreakdown:
    j_t: float
    j_stab: float
    recon_losses: tuple
    j_c: float


def compute_jt(features, interconnections, H, Lambda, etas) -> float:
    """Training energy for explicit features (one (N, d_f) matrix per view)."""
    H = np.asarray(H, dtype=np.float64)
    Lambda = np.asarray(Lambda, dtype=np.float64)
    if not (len(features) == len(interconnections) == len(etas)):
        raise ShapeError("features, interconnections and etas must have one entry per view")
    coupling = 0.0
    regular = 0.0
    for Phi, U, eta in zip(features, interconnections, etas):
        Phi = np.asarray(Phi, dtype=np.float64)
        U = np.asarray(U, dtype=np.float64)
        if Phi.shape[0] != H.shape[1] or Phi.shape[1] != U.shape[0] or U.shape[1] != H.shape[0]:
            raise ShapeError(f"shapes do not conform: Phi {Phi.shape}, U {U.shape}, H {H.shape}")
        coupling += np.sum((Phi @ U) * H.T)
        regular += 0.5 * eta * np.sum(U * U)
    latent = 0.5 * np.sum(Lambda[:, None] * H * H)
    return float(-coupling + latent + regular)


def compute_jt_kernel(kernels, H, Lambda, etas) -> float:
    """The same energy with the interconnections eliminated by their
    stationarity condition, written through Gram matrices only."""
    H = np.asarray(H, dtype=np.float64)
    coupling = 0.0
    regular = 0.0
    for K, eta in zip(kernels, etas):
        K = getattr(K, "gram", K)
        HKH = np.sum((H @ K) * H)
        coupling += HKH / eta
        regular += 0.5 * eta * HKH / (eta * eta)
    latent = 0.5 * np.sum(np.asarray(Lambda)[:, None] * H * H)
    return float(-coupling + latent + regular)


def compute_jstab(j_t: float, c_stab: float) -> float:
    return j_t + 0.5 * c_stab * j_t * j_t


def reconstruction_loss(originals, reconstructions) -> float:
    """Mean over samples of the squared Euclidean reconstruction error."""
    X = np.asarray(originals, dtype=np.float64)
    Y = np.asarray(reconstructions, dtype=np.float64)
    if X.shape != Y.shape:
        raise ShapeError(f"shape mismatch {X.shape} vs {Y.shape}")
    if X.ndim == 1:
        X, Y = X[None, :], Y[None, :]
    diff = X - Y
    return float(np.sum(diff * diff) / X.shape[0])


def centered_features(views, batch):
    """Feature matrices of a batch, centered per view with the batch mean."""
    out, means = [], []
    for view, X in zip(views, batch):
        if view.feature_map is None:
            raise UsageError(f"view {view.name!r} has no explicit feature map")
        Phi = nn.forward(view.feature_map, np.asarray(X, dtype=np.float64))
        mu = Phi.mean(axis=0)
        out.append(Phi - mu)
        means.append(mu)
    return out, means


@dataclass
class ViewGradients:
    feature_map: nn.Gradients
    preimage_map: nn.Gradients

    def arrays(self):
        return self.feature_map.arrays() + self.preimage_map.arrays()


def parameter_arrays(views) -> list[np.ndarray]:
    """All trainable arrays in the order used by :class:`ViewGradients`."""
    out = []
    for v in views:
        out.extend(v.feature_map.arrays())
        out.extend(v.preimage_map.arrays())
    return out


def compute_jc_and_grads(batch, views, config: ObjectiveConfig, H, Lambda):
    """Combined objective on a batch and its gradient w.r.t. every feature-map
    and pre-image-map parameter, with ``(H, Lambda)`` held fixed.

    ``batch`` holds one (n, d_l) array per view. Returns
    ``(EnergyBreakdown, [ViewGradients per view])``.
    """
    H = np.asarray(H, dtype=np.float64)
    Lambda = np.asarray(Lambda, dtype=np.float64)
    batch = [np.asarray(X, dtype=np.float64) for X in batch]
    n = H.shape[1]
    if any(X.shape[0] != n for X in batch):
        raise ShapeError(f"batch size does not match H with {n} columns")
    for v in views:
        if v.feature_map is None or v.preimage_map is None:
            raise UsageError(f"view {v.name!r} needs both a feature map and a pre-image map")

    Phis, _ = centered_features(views, batch)
    Us = [compute_interconnections(P, H, v.eta) for P, v in zip(Phis, views)]
    j_t = compute_jt(Phis, Us, H, Lambda, [v.eta for v in views])
    j_stab = compute_jstab(j_t, config.c_stab)
    a = 1.0 + config.c_stab * j_t

    recon = []
    grads = []
    for v, X, Phi, U in zip(views, batch, Phis, Us):
        Phi_hat = H.T @ U.T
        X_hat = nn.forward(v.preimage_map, Phi_hat)
        recon.append(reconstruction_loss(X, X_hat))
        dX_hat = config.gamma * (X_hat - X) / (n * n)
        pm_grads, G = nn.backward(v.preimage_map, Phi_hat, dX_hat)
        dU = a * (-(Phi.T @ H.T) + v.eta * U) + G.T @ H.T
        dPhi_c = -a * (H.T @ U.T) + (H.T @ dU.T) / v.eta
        dPhi = dPhi_c - dPhi_c.mean(axis=0)
        fm_grads, _ = nn.backward(v.feature_map, X, dPhi)
        grads.append(ViewGradients(fm_grads, pm_grads))

    j_c = j_stab + config.gamma / (2.0 * n) * sum(recon)
    return EnergyBreakdown(j_t, j_stab, tuple(recon), j_c), grads


def jc_value(batch, views, config: ObjectiveConfig, H, Lambda) -> float:
    return compute_jc_and_grads(batch, views, config, H, Lambda)[0].j_c
