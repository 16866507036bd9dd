"""Training: a single eigensolve for kernel (implicit) views, and mini-batch
alternating eigensolve + Adam for explicit feature maps."""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ShapeError, TrainingDivergedError
from .kernels import CenteringStats, center_kernel, kernel_matrix
from .linalg import frobenius_norm
from .objective import (EnergyBreakdown, ObjectiveConfig, centered_features,
                        compute_jc_and_grads, compute_jt, parameter_arrays)
from .subspace import (LatentModel, ViewConfig, compute_interconnections, kernel_sum,
                       require_spectrum, solve_dual, solve_primal)


@dataclass
class TrainConfig:
    s: int
    batches: int = 1          # number of mini-batches per epoch
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    use_primal: bool = False
    final_pass_cap: int = 5000

    def validate(self, n: int) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 1 <= self.batches <= n:
            raise ValueError(f"batches must be in [1, {n}], got {self.batches}")
        smallest = n // self.batches
        if not 1 <= self.s <= smallest:
            raise ValueError(f"s={self.s} must not exceed the smallest mini-batch size ({smallest}); "
                             f"lower s or use fewer batches")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainReport:
    trace: list[EnergyBreakdown]
    model: LatentModel
    epoch_seconds: list[float]
    eig_residuals: list[float] = field(default_factory=list)


def minibatch_split(n: int, m: int, seed: int, epoch: int = 0) -> list[np.ndarray]:
    """Shuffled partition of ``range(n)`` into ``m`` near-equal parts."""
    if not 1 <= m <= n:
        raise ValueError(f"cannot split {n} samples into {m} batches")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return np.array_split(perm, m)


def _as_views(dataset):
    if hasattr(dataset, "views"):
        return list(dataset.views.values())
    return [np.asarray(v, dtype=np.float64) for v in dataset]


def train_implicit(dataset, kernels, etas, s: int, names=None) -> LatentModel:
    """Kernel views: build and center the Gram matrices, then one eigensolve."""
    data = _as_views(dataset)
    if len(data) != len(kernels) or len(kernels) != len(etas):
        raise ShapeError("need one kernel and one eta per view")
    n = data[0].shape[0]
    if n == 0:
        raise ShapeError("empty dataset")
    if not 1 <= s <= n:
        raise ShapeError(f"s must be in [1, {n}], got {s}")
    if names is None:
        names = list(dataset.views) if hasattr(dataset, "views") else [f"view{i}" for i in range(len(data))]

    raw = [kernel_matrix(spec, X) for spec, X in zip(kernels, data)]
    centered = [center_kernel(K) for K in raw]
    H, Lambda = solve_dual(centered, etas, s)
    require_spectrum(Lambda)
    views = [ViewConfig(name, eta, kernel=spec) for name, eta, spec in zip(names, etas, kernels)]
    # linear kernels have a known feature map (the centered input), so their
    # interconnections can be formed explicitly
    inter = []
    for spec, X, eta in zip(kernels, data, etas):
        inter.append(compute_interconnections(X - X.mean(axis=0), H, eta) if spec.kind == "linear" else None)
    return LatentModel(
        H=H, Lambda=Lambda, views=views, interconnections=inter,
        training_refs=[X.copy() for X in data], centered=True,
        grams=[K.gram for K in centered],
        centering=[CenteringStats.from_gram(K.gram) for K in raw],
    )


def _eigensolve(Phis, etas, s, use_primal):
    if use_primal and sum(P.shape[1] for P in Phis) <= Phis[0].shape[0]:
        _, Lambda, H = solve_primal(Phis, etas, s)
    else:
        H, Lambda = solve_dual([P @ P.T for P in Phis], etas, s)
    return H, Lambda


def _progress(epoch, b, e: EnergyBreakdown, out):
    recon = ",".join(f"{r:.6e}" for r in e.recon_losses)
    print(f"epoch={epoch} batch={b} Jt={e.j_t:.6e} Jc={e.j_c:.6e} recon={recon}", file=out, flush=True)


def train_explicit(dataset, views, config: TrainConfig, verbose=False, out=None):
    """Jointly learn feature maps, pre-image maps and the latent subspace.

    Every view must carry a feature map and a pre-image map; they are
    updated in place. Per mini-batch: evaluate and center features, solve
    the eigenproblem, then take one Adam step on the combined objective with
    the eigen-solution held fixed. The returned model is rebuilt from one
    full pass (capped at ``config.final_pass_cap`` samples) with the final
    parameters.
    """
    data = _as_views(dataset)
    n = data[0].shape[0]
    if any(X.shape[0] != n for X in data) or len(data) != len(views):
        raise ShapeError("dataset views and view configs do not line up")
    for v, X in zip(views, data):
        if v.feature_map is None or v.preimage_map is None:
            raise ValueError(f"view {v.name!r} needs a feature map and a pre-image map")
        if v.feature_map.in_dim != X.shape[1] or v.preimage_map.out_dim != X.shape[1]:
            raise ShapeError(f"view {v.name!r}: network dims do not match data dim {X.shape[1]}")
        if v.preimage_map.in_dim != v.feature_map.out_dim:
            raise ShapeError(f"view {v.name!r}: pre-image map input must equal feature dim")
    config.validate(n)
    out = out if out is not None else sys.stdout
    etas = [v.eta for v in views]

    adam = nn.AdamState(learning_rate=config.learning_rate)
    params = parameter_arrays(views)
    trace, seconds, residuals = [], [], []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        for b, idx in enumerate(minibatch_split(n, config.batches, config.seed, epoch)):
            batch = [X[idx] for X in data]
            Phis, _ = centered_features(views, batch)
            H, Lambda = _eigensolve(Phis, etas, config.s, config.use_primal)
            S = kernel_sum([P @ P.T for P in Phis], etas)
            residuals.append(frobenius_norm(S @ H.T - H.T * Lambda)
                             / max(frobenius_norm(S), np.finfo(float).tiny))
            energy, grads = compute_jc_and_grads(batch, views, config.objective, H, Lambda)
            trace.append(energy)
            if verbose:
                _progress(epoch, b, energy, out)
            if not np.isfinite(energy.j_c):
                raise TrainingDivergedError(f"non-finite objective at epoch {epoch}, batch {b}", trace)
            nn.adam_step(adam, params, [g for vg in grads for g in vg.arrays()])
        seconds.append(time.perf_counter() - t0)

    model = build_explicit_model(data, views, config.s, config.final_pass_cap)
    return model, TrainReport(trace, model, seconds, residuals)


def build_explicit_model(data, views, s, cap=None) -> LatentModel:
    """Latent model from a single pass with frozen network parameters."""
    data = _as_views(data)
    if cap is not None and data[0].shape[0] > cap:
        data = [X[:cap] for X in data]
    Phis, means = centered_features(views, data)
    etas = [v.eta for v in views]
    H, Lambda = solve_dual([P @ P.T for P in Phis], etas, s)
    require_spectrum(Lambda)
    inter = [compute_interconnections(P, H, v.eta) for P, v in zip(Phis, views)]
    return LatentModel(H=H, Lambda=Lambda, views=list(views), interconnections=inter,
                       centered=True, feature_means=means)


def explicit_jt(model: LatentModel, data) -> float:
    """Training energy of an explicit model on (a prefix of) its data."""
    data = _as_views(data)[: len(model.views)]
    data = [X[: model.n_train] for X in data]
    Phis, _ = centered_features(model.views, data)
    return compute_jt(Phis, model.interconnections, model.H, model.Lambda, [v.eta for v in model.views])
