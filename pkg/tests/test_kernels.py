import math

import numpy as np
import pytest

from genrkm.errors import ShapeError, UsageError
from genrkm.kernels import (CenteringStats, KernelMatrix, KernelSpec, center_cross_vector,
                            center_gram, center_kernel, cross_kernel_matrix, cross_kernel_vector,
                            kernel_eval, kernel_matrix)


def scalar_kernel(kind, sigma, a, b):
    sq = sum((x - y) * (x - y) for x, y in zip(a, b))
    if kind == "gaussian":
        return math.exp(-sq / (2 * sigma * sigma))
    if kind == "laplace":
        return math.exp(-math.sqrt(sq) / sigma)
    return sum(x * y for x, y in zip(a, b))


@pytest.mark.parametrize("kind", ["gaussian", "laplace"])
def test_zero_distance_is_one(kind):
    assert kernel_eval(KernelSpec(kind, 0.7), [1.0, 2.0], [1.0, 2.0]) == 1.0


def test_gaussian_known_value():
    assert kernel_eval(KernelSpec("gaussian", 0.5), [0, 0], [1, 0]) == math.exp(-2.0)


@pytest.mark.parametrize("kind", ["gaussian", "laplace", "linear"])
def test_gram_matches_entrywise_oracle(kind):
    X = np.random.default_rng(3).standard_normal((4, 3))
    K = kernel_matrix(KernelSpec(kind, 1.3), X).gram
    for i in range(4):
        for j in range(4):
            assert K[i, j] == pytest.approx(scalar_kernel(kind, 1.3, X[i], X[j]), rel=1e-14, abs=1e-15)
            assert K[i, j] == kernel_eval(KernelSpec(kind, 1.3), X[i], X[j])


def test_small_grams():
    spec = KernelSpec("gaussian", 1.0)
    assert np.array_equal(kernel_matrix(spec, [[0.5, 1.0]]).gram, [[1.0]])
    assert np.array_equal(kernel_matrix(spec, [[2.0], [2.0]]).gram, np.ones((2, 2)))


def test_bad_specs():
    with pytest.raises(ValueError):
        KernelSpec("poly", 1.0)
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 0.0)
    with pytest.raises(ShapeError):
        kernel_eval(KernelSpec(), [1.0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        kernel_matrix(KernelSpec(), np.zeros((0, 2)))


def test_centering_trivial_cases():
    assert np.array_equal(center_gram(np.ones((3, 3))), np.zeros((3, 3)))
    assert np.array_equal(center_gram([[5.0]]), [[0.0]])


def test_centering_matches_mean_subtracted_features():
    X = np.random.default_rng(8).standard_normal((3, 4))
    spec = KernelSpec("linear")
    Kc = center_gram(kernel_matrix(spec, X).gram)
    Xc = X - X.mean(axis=0)
    assert np.max(np.abs(Kc - Xc @ Xc.T)) <= 1e-10


def test_centered_rows_sum_to_zero():
    X = np.random.default_rng(9).standard_normal((50, 2))
    Kc = center_gram(kernel_matrix(KernelSpec("gaussian", 0.8), X).gram)
    assert np.max(np.abs(Kc.sum(axis=0))) <= 1e-8
    assert np.max(np.abs(Kc.sum(axis=1))) <= 1e-8
    assert np.array_equal(Kc, Kc.T)


def test_recentering_refused():
    K = center_kernel(KernelMatrix(np.eye(3)))
    with pytest.raises(UsageError):
        center_kernel(K)


def test_cross_vector():
    X = np.random.default_rng(2).standard_normal((6, 2))
    spec = KernelSpec("gaussian", 0.5)
    k = cross_kernel_vector(spec, X, X[3])
    assert k[3] == 1.0 and k.argmax() == 3
    assert np.all(cross_kernel_vector(spec, X, [1e3, 1e3]) < 1e-6)
    for i in range(6):
        assert k[i] == pytest.approx(scalar_kernel("gaussian", 0.5, X[i], X[3]), rel=1e-14)
    assert np.array_equal(cross_kernel_matrix(spec, X, X[[3]])[:, 0], k)


def test_cross_centering_consistent_with_training_gram():
    # centering a training column as a test point reproduces the centered Gram
    X = np.random.default_rng(1).standard_normal((7, 3))
    spec = KernelSpec("laplace", 2.0)
    K = kernel_matrix(spec, X).gram
    stats = CenteringStats.from_gram(K)
    Kc = center_gram(K)
    for j in range(7):
        assert np.max(np.abs(center_cross_vector(K[:, j], stats) - Kc[:, j])) <= 1e-12


def test_cross_centering_linear_oracle():
    X = np.random.default_rng(6).standard_normal((5, 2))
    x = np.array([0.3, -1.1])
    stats = CenteringStats.from_gram(kernel_matrix(KernelSpec("linear"), X).gram)
    k = center_cross_vector(cross_kernel_vector(KernelSpec("linear"), X, x), stats)
    mu = X.mean(axis=0)
    assert np.allclose(k, (X - mu) @ (x - mu), atol=1e-12)
