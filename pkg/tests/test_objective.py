import numpy as np
import pytest

from genrkm import nn
from genrkm.kernels import center_gram
from genrkm.objective import (ObjectiveConfig, centered_features, compute_jc_and_grads,
                              compute_jstab, compute_jt, compute_jt_kernel, jc_value,
                              parameter_arrays, reconstruction_loss)
from genrkm.subspace import ViewConfig, compute_interconnections, solve_dual


def test_jt_zero_interconnections():
    H = np.random.default_rng(0).standard_normal((2, 4))
    lam = np.array([3.0, 1.5])
    expect = sum(0.5 * H[:, i] @ (lam * H[:, i]) for i in range(4))
    assert compute_jt([np.ones((4, 3))], [np.zeros((3, 2))], H, lam, [1.0]) == pytest.approx(expect, rel=1e-14)


def test_jt_summation_oracle():
    rng = np.random.default_rng(1)
    P, U, H, lam = rng.standard_normal((4, 3)), rng.standard_normal((3, 2)), rng.standard_normal((2, 4)), np.array([2.0, 0.5])
    eta = 0.8
    ref = 0.0
    for i in range(4):
        ref -= P[i] @ U @ H[:, i]
        ref += 0.5 * H[:, i] @ (lam * H[:, i])
    ref += 0.5 * eta * np.sum(U ** 2)
    assert compute_jt([P], [U], H, lam, [eta]) == pytest.approx(ref, rel=1e-13)


def test_jt_vanishes_at_stationary_solution():
    rng = np.random.default_rng(2)
    Ps = [rng.standard_normal((12, 3)), rng.standard_normal((12, 5))]
    Ps = [P - P.mean(axis=0) for P in Ps]
    etas = [1.0, 0.3]
    H, lam = solve_dual([P @ P.T for P in Ps], etas, 4)
    Us = [compute_interconnections(P, H, e) for P, e in zip(Ps, etas)]
    assert abs(compute_jt(Ps, Us, H, lam, etas)) <= 1e-8 * 12
    assert abs(compute_jt_kernel([P @ P.T for P in Ps], H, lam, etas)) <= 1e-8 * 12


def test_jstab():
    assert compute_jstab(0.0, 5.0) == 0.0
    assert compute_jstab(1.7, 0.0) == 1.7
    assert compute_jstab(2.0, 1.0) == 4.0


def test_reconstruction_loss():
    X = np.random.default_rng(3).standard_normal((5, 3))
    assert reconstruction_loss(X, X) == 0.0
    assert reconstruction_loss(X, X + 0.25) == pytest.approx(3 * 0.0625, rel=1e-12)
    Y = X + np.random.default_rng(4).standard_normal((5, 3))
    ref = sum(sum((a - b) ** 2 for a, b in zip(X[i], Y[i])) for i in range(5)) / 5
    assert reconstruction_loss(X, Y) == pytest.approx(ref, rel=1e-13)


def _views(seed, dims, hidden, out="linear"):
    views = []
    for i, d in enumerate(dims):
        fm = nn.init_params(nn.mlp([d, *hidden, 4]), seed + 2 * i)
        pm = nn.init_params(nn.mlp([4, *reversed(hidden), d], output=out), seed + 2 * i + 1)
        for b in fm.biases + pm.biases:
            b[:] = np.random.default_rng(seed + 50 + i).uniform(-0.2, 0.2, b.shape)
        views.append(ViewConfig(f"v{i}", 1.0 + 0.5 * i, feature_map=fm, preimage_map=pm))
    return views


def _solve(views, batch, s):
    Phis, _ = centered_features(views, batch)
    return solve_dual([P @ P.T for P in Phis], [v.eta for v in views], s)


def fd_max_rel_error(views, batch, cfg, H, lam, step=1e-5):
    """Central differences on every parameter. The relative error of each
    entry uses max(|fd|, |analytic|, 1e-3 * largest gradient) as denominator:
    entries whose gradient is structurally zero would otherwise divide
    rounding noise by ~0."""
    _, grads = compute_jc_and_grads(batch, views, cfg, H, lam)
    flat = [g for vg in grads for g in vg.arrays()]
    floor = 1e-3 * max(np.max(np.abs(g)) for g in flat)
    worst = 0.0
    for arr, g in zip(parameter_arrays(views), flat):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + step
            up = jc_value(batch, views, cfg, H, lam)
            arr[idx] = old - step
            dn = jc_value(batch, views, cfg, H, lam)
            arr[idx] = old
            fd = (up - dn) / (2 * step)
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), floor))
    return worst


@pytest.mark.parametrize("seed,dims,hidden,out", [(0, [3], [5], "linear"), (10, [2, 3], [4], "sigmoid")])
def test_gradients_finite_differences(seed, dims, hidden, out):
    views = _views(seed, dims, hidden, out)
    rng = np.random.default_rng(seed)
    batch = [rng.standard_normal((9, d)) for d in dims]
    H, lam = _solve(views, batch, 3)
    assert fd_max_rel_error(views, batch, ObjectiveConfig(1.0, 5.0), H, lam) <= 1e-5


def test_gamma_zero_stationary():
    views = _views(3, [3], [5])
    batch = [np.random.default_rng(3).standard_normal((8, 3))]
    H, lam = _solve(views, batch, 2)
    e, grads = compute_jc_and_grads(batch, views, ObjectiveConfig(1.0, 0.0), H, lam)
    assert abs(e.j_t) <= 1e-10 and e.j_c == e.j_stab
    assert all(np.all(g == 0) for g in grads[0].preimage_map.arrays())


def test_large_gamma_direction_is_reconstruction():
    views = _views(4, [3], [5])
    batch = [np.random.default_rng(4).standard_normal((8, 3))]
    H, lam = _solve(views, batch, 2)
    _, g_big = compute_jc_and_grads(batch, views, ObjectiveConfig(0.0, 1e8), H, lam)
    _, g_j = compute_jc_and_grads(batch, views, ObjectiveConfig(0.0, 0.0), H, lam)
    a = np.concatenate([x.ravel() for x in g_big[0].arrays()])
    b = np.concatenate([x.ravel() for x in g_j[0].arrays()])
    recon = (a - b) / 1e8
    cos = a @ recon / (np.linalg.norm(a) * np.linalg.norm(recon))
    assert cos > 1 - 1e-8


def test_jc_decomposes_exactly():
    views = _views(5, [3, 2], [4])
    rng = np.random.default_rng(5)
    batch = [rng.standard_normal((7, 3)), rng.standard_normal((7, 2))]
    H, lam = _solve(views, batch, 2)
    e, _ = compute_jc_and_grads(batch, views, ObjectiveConfig(0.5, 3.0), H, lam)
    assert e.j_c - e.j_stab == 3.0 / (2 * 7) * sum(e.recon_losses)


def test_stabilization_scales_jt_gradient():
    # off the eigen-solution J_t != 0; the stabilized gradient is (1 + c J_t) times the plain one
    views = _views(6, [3], [4])
    batch = [np.random.default_rng(6).standard_normal((8, 3))]
    H, lam = _solve(views, batch, 2)
    lam = lam * 1.3
    e0, g0 = compute_jc_and_grads(batch, views, ObjectiveConfig(0.0, 0.0), H, lam)
    e2, g2 = compute_jc_and_grads(batch, views, ObjectiveConfig(2.0, 0.0), H, lam)
    assert abs(e0.j_t) > 1e-3
    for a, b in zip(g0[0].feature_map.arrays(), g2[0].feature_map.arrays()):
        assert np.allclose(b, (1 + 2.0 * e0.j_t) * a, rtol=1e-12, atol=1e-14)
