"""Fully-connected feature maps and pre-image maps.

A network is a list of affine layers, each followed by an activation
(PReLU with a fixed slope, sigmoid, or identity). Forward and backward
passes work on a single vector or on a batch with one sample per row;
batch parameter gradients are summed over rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("prelu", "sigmoid", "linear")
PRELU_ALPHA = 0.2


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "prelu"
    alpha: float = PRELU_ALPHA

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class FeatureMapParams:
    layers: list[LayerSpec]
    weights: list[np.ndarray]  # weights[i] has shape (out_dim, in_dim)
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        check_chain(self.layers)
        for spec, W, b in zip(self.layers, self.weights, self.biases):
            if W.shape != (spec.out_dim, spec.in_dim) or b.shape != (spec.out_dim,):
                raise ShapeError(f"parameter shapes {W.shape}, {b.shape} do not match {spec}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "FeatureMapParams":
        return FeatureMapParams(list(self.layers), [W.copy() for W in self.weights],
                                [b.copy() for b in self.biases])


def check_chain(layers) -> None:
    for prev, nxt in zip(layers, layers[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(f"layer chain broken: {prev.out_dim} -> {nxt.in_dim}")


def mlp(dims, hidden="prelu", output="linear") -> list[LayerSpec]:
    """Layer list for ``dims[0] -> dims[1] -> ... -> dims[-1]``."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    n = len(dims) - 1
    return [LayerSpec(dims[i], dims[i + 1], output if i == n - 1 else hidden) for i in range(n)]


def init_params(layers, seed: int) -> FeatureMapParams:
    """Glorot-uniform weights, zero biases."""
    layers = list(layers)
    check_chain(layers)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in layers:
        a = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-a, a, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))
    return FeatureMapParams(layers, weights, biases)


def _activate(kind, z, alpha):
    if kind == "prelu":
        return np.where(z > 0, z, alpha * z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activation_grad(kind, z, out, alpha):
    if kind == "prelu":
        return np.where(z > 0, 1.0, alpha)
    if kind == "sigmoid":
        return out * (1.0 - out)
    return np.ones_like(z)


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects dim {params.in_dim}")
    return X, single


def _forward_cache(params, X):
    zs, outs = [], [X]
    h = X
    with np.errstate(over="ignore"):
        for spec, W, b in zip(params.layers, params.weights, params.biases):
            z = h @ W.T + b
            h = _activate(spec.activation, z, spec.alpha)
            if not np.all(np.isfinite(h)):
                raise NumericError("non-finite activation in forward pass")
            zs.append(z)
            outs.append(h)
    return zs, outs


def forward(params: FeatureMapParams, x) -> np.ndarray:
    X, single = _as_batch(params, x)
    out = _forward_cache(params, X)[1][-1]
    return out[0] if single else out


def backward(params: FeatureMapParams, x, upstream_grad):
    """Reverse-mode pass.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is a
    ``FeatureMapParams``-shaped pair of lists ``(dW, db)``.
    """
    X, single = _as_batch(params, x)
    G = np.asarray(upstream_grad, dtype=np.float64)
    G = G[None, :] if G.ndim == 1 else G
    if G.shape != (X.shape[0], params.out_dim):
        raise ShapeError(f"upstream gradient has shape {np.shape(upstream_grad)}, "
                         f"expected {(X.shape[0], params.out_dim)}")
    zs, outs = _forward_cache(params, X)
    dWs = [None] * len(params.layers)
    dbs = [None] * len(params.layers)
    for i in reversed(range(len(params.layers))):
        spec = params.layers[i]
        G = G * _activation_grad(spec.activation, zs[i], outs[i + 1], spec.alpha)
        dWs[i] = G.T @ outs[i]
        dbs[i] = G.sum(axis=0)
        G = G @ params.weights[i]
    return Gradients(dWs, dbs), (G[0] if single else G)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
