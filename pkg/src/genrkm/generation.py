"""Sampling new latent points and mapping them back to every view."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.cluster import kmeans_plusplus

from . import nn
from .errors import ShapeError, UsageError
from .subspace import LatentModel, check_invertible

VARIANCE_FLOOR = 1e-6
EM_TOL = 1e-8
EM_MAX_ITER = 500


@dataclass
class GenerationConfig:
    n_r: int = 4
    seed: int = 0

    def validate(self, n: int) -> None:
        if not 1 <= self.n_r <= n:
            raise ValueError(f"n_r must be in [1, {n}], got {self.n_r}")


# -- latent distribution -----------------------------------------------------

@dataclass
class GmmModel:
    weights: np.ndarray    # (l,)
    means: np.ndarray      # (l, s)
    variances: np.ndarray  # (l, s), diagonal covariances
    log_likelihood: list[float] = field(default_factory=list)

    @property
    def l(self) -> int:
        return self.weights.shape[0]


def _log_densities(X, gmm_means, gmm_vars):
    # (n, l) log N(x_i | mu_k, diag var_k)
    diff = X[:, None, :] - gmm_means[None, :, :]
    return -0.5 * (np.sum(diff * diff / gmm_vars[None], axis=-1)
                   + np.sum(np.log(2.0 * np.pi * gmm_vars), axis=-1)[None, :])


def _responsibilities(X, weights, means, variances):
    with np.errstate(divide="ignore"):
        logp = _log_densities(X, means, variances) + np.log(weights)[None, :]
    top = logp.max(axis=1, keepdims=True)
    log_norm = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
    return np.exp(logp - log_norm[:, None]), float(log_norm.sum())


def fit_gmm(codes, l: int, seed: int = 0) -> GmmModel:
    """Diagonal-covariance EM on latent codes given as an (N, s) array
    (pass ``model.H.T``)."""
    X = np.asarray(codes, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"codes must be (N, s), got {X.shape}")
    n, s = X.shape
    if not 1 <= l <= n:
        raise ValueError(f"cannot fit {l} components to {n} points")

    if l == 1:
        means = X.mean(axis=0, keepdims=True)
    else:
        means, _ = kmeans_plusplus(X, n_clusters=l, random_state=seed)
        means = means.astype(np.float64)
    variances = np.tile(np.maximum(X.var(axis=0), VARIANCE_FLOOR), (l, 1))
    weights = np.full(l, 1.0 / l)

    trace = []
    for _ in range(EM_MAX_ITER):
        R, ll = _responsibilities(X, weights, means, variances)
        if trace and ll - trace[-1] < EM_TOL:
            trace.append(ll)
            break
        trace.append(ll)
        Nk = R.sum(axis=0)
        # a component that lost all its points keeps its previous parameters
        alive = Nk > 1e-12
        weights = Nk / n
        new_means = (R.T @ X) / np.where(alive, Nk, 1.0)[:, None]
        means = np.where(alive[:, None], new_means, means)
        second = (R.T @ (X * X)) / np.where(alive, Nk, 1.0)[:, None] - means * means
        variances = np.where(alive[:, None], np.maximum(second, VARIANCE_FLOOR), variances)
        weights = weights / weights.sum()
    return GmmModel(weights, means, variances, trace)


def gmm_responsibilities(gmm: GmmModel, codes) -> np.ndarray:
    X = np.asarray(codes, dtype=np.float64)
    return _responsibilities(X, gmm.weights, gmm.means, gmm.variances)[0]


def sample_gmm(gmm: GmmModel, seed: int, count: int) -> np.ndarray:
    """``count`` latent points, shape (count, s)."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    comp = rng.choice(gmm.l, size=count, p=gmm.weights)
    noise = rng.standard_normal((count, gmm.means.shape[1]))
    return gmm.means[comp] + noise * np.sqrt(gmm.variances[comp])


# -- latent manipulation -----------------------------------------------------

def bilinear_interpolate(h1, h2, h3, h4, alpha: float, gamma_coef: float) -> np.ndarray:
    if not (0.0 <= alpha <= 1.0 and 0.0 <= gamma_coef <= 1.0):
        raise ValueError(f"coefficients must lie in [0, 1], got alpha={alpha}, gamma={gamma_coef}")
    h1, h2, h3, h4 = (np.asarray(h, dtype=np.float64) for h in (h1, h2, h3, h4))
    if not h1.shape == h2.shape == h3.shape == h4.shape:
        raise ShapeError("anchor vectors differ in shape")
    a, g = alpha, gamma_coef
    return (1 - a) * (1 - g) * h1 + a * (1 - g) * h2 + g * (1 - a) * h3 + g * a * h4


def traverse_component(base, index: int, offsets) -> list[np.ndarray]:
    base = np.asarray(base, dtype=np.float64)
    if not 0 <= index < base.shape[0]:
        raise IndexError(f"component {index} out of range for s={base.shape[0]}")
    out = []
    for d in offsets:
        h = base.copy()
        h[index] = base[index] + d
        out.append(h)
    return out


# -- back to data space ------------------------------------------------------

def _codes(model: LatentModel, h_star):
    h = np.asarray(h_star, dtype=np.float64)
    single = h.ndim == 1
    Hs = h[:, None] if single else h
    if Hs.ndim != 2 or Hs.shape[0] != model.s:
        raise ShapeError(f"latent input has shape {h.shape}, expected leading dim {model.s}")
    return Hs, single


def synthesize_features(model: LatentModel, h_star) -> list[np.ndarray]:
    """Generated feature vector ``U_l h*`` of every view.

    ``h_star`` is (s,) or (s, M); outputs are (d_f,) or (d_f, M).
    """
    Hs, single = _codes(model, h_star)
    out = []
    for v, U in zip(model.views, model.interconnections):
        if U is None:
            raise UsageError(f"view {v.name!r} has no interconnection matrix "
                             f"(implicit feature map); use latent_similarities")
        F = U @ Hs
        out.append(F[:, 0] if single else F)
    return out


def latent_similarities(model: LatentModel, h_star, index: int | None = None):
    """``(1/eta_l) K_l H^T h*`` for kernel views.

    With ``index`` the single view's vector is returned, otherwise one entry
    per view. Shapes are (N,) or (N, M).
    """
    Hs, single = _codes(model, h_star)
    if model.grams is None:
        raise UsageError("model has no kernel matrices (explicit-only model)")
    indices = range(len(model.views)) if index is None else [index]
    out = []
    for i in indices:
        v = model.views[i]
        if v.kernel is None:
            raise UsageError(f"view {v.name!r} uses an explicit feature map")
        k = (model.grams[i] @ (model.H.T @ Hs)) / v.eta
        out.append(k[:, 0] if single else k)
    return out[0] if index is not None else out


class SmootherResult(NamedTuple):
    point: np.ndarray
    degenerate: bool


def kernel_smoother_preimage(similarities, training_points, n_r: int) -> SmootherResult:
    """Weighted average of the ``n_r`` most similar training points.

    Similarities are min-max scaled to [0, 1] over all N points first, the
    scaled values are the weights. Ties are broken by lower index. If every
    similarity is equal the scaling is undefined; the plain mean of the
    training points is returned and the result is flagged.
    """
    k = np.asarray(similarities, dtype=np.float64)
    X = np.asarray(training_points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k.ndim != 1 or k.shape[0] != X.shape[0]:
        raise ShapeError(f"{k.shape} similarities for {X.shape[0]} training points")
    if not 1 <= n_r <= k.shape[0]:
        raise ValueError(f"n_r must be in [1, {k.shape[0]}], got {n_r}")
    lo, hi = k.min(), k.max()
    if not hi > lo:
        return SmootherResult(X.mean(axis=0), True)
    scaled = (k - lo) / (hi - lo)
    top = np.argsort(-scaled, kind="stable")[:n_r]
    w = scaled[top]
    return SmootherResult(w @ X[top] / w.sum(), False)


def explicit_preimage(model: LatentModel, features) -> list[np.ndarray]:
    """Pre-image network of every view applied to its feature vectors
    ((d_f,) or (d_f, M); outputs (d,) or (M, d))."""
    if len(features) != len(model.views):
        raise ShapeError(f"expected {len(model.views)} feature inputs, got {len(features)}")
    out = []
    for v, F in zip(model.views, features):
        if v.preimage_map is None:
            raise UsageError(f"view {v.name!r} has no pre-image map")
        F = np.asarray(F, dtype=np.float64)
        out.append(nn.forward(v.preimage_map, F if F.ndim == 1 else F.T))
    return out


def generate_view(model: LatentModel, index: int, h_star, config: GenerationConfig) -> np.ndarray:
    """Data-space output of one view for latent points (s,) or (s, M).

    Kernel views use the smoother on their similarity vector, explicit views
    their pre-image network. Returns (d,) or (M, d).
    """
    check_invertible(model.Lambda)
    Hs, single = _codes(model, h_star)
    v = model.views[index]
    if v.kernel is not None:
        if model.training_refs is None:
            raise UsageError("kernel view needs stored training points")
        Xtr = model.training_refs[index]
        config.validate(Xtr.shape[0])
        K = latent_similarities(model, Hs, index)
        out = np.stack([kernel_smoother_preimage(K[:, j], Xtr, config.n_r).point
                        for j in range(Hs.shape[1])])
    else:
        if v.preimage_map is None or model.interconnections[index] is None:
            raise UsageError(f"view {v.name!r} lacks a pre-image map or interconnections")
        out = nn.forward(v.preimage_map, (model.interconnections[index] @ Hs).T)
    return out[0] if single else out


def generate(model: LatentModel, h_star, config: GenerationConfig) -> list[np.ndarray]:
    """All views from the same latent point(s)."""
    return [generate_view(model, i, h_star, config) for i in range(len(model.views))]


def decode_labels(one_hot_rows) -> np.ndarray:
    """Class index per generated label row (argmax)."""
    Y = np.asarray(one_hot_rows, dtype=np.float64)
    return np.argmax(Y, axis=-1)
