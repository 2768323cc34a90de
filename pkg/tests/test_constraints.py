import math

import numpy as np
import pytest

from acdr.constraints import (
    KernelSpec,
    acdr_objective,
    jmmd,
    jmmd_grad,
    median_heuristic,
    mmd,
    mmd_grad,
    noise_loss,
    noise_loss_grad,
    semantic_constraint,
    semantic_constraint_grad,
    time_positions,
)
from acdr.errors import ConfigError, ShapeError
from _gradcheck import fd_grad, rel_error

# Closed form for N(0,1) vs N(2,1) under exp(-d^2/2): (2/sqrt3)(1 - e^{-2/3}) (mpmath, 30 digits)
GAUSS_MMD2 = 0.561857514619193248637


def _k(x, y, bws):
    d2 = sum((a - b) ** 2 for a, b in zip(x, y))
    return sum(math.exp(-d2 / (2 * s * s)) for s in bws) / len(bws)


def _loop_jmmd(As, Bs, bws_per_layer, unbiased=False):
    m, n = len(As[0]), len(Bs[0])

    def kprod(Xs, i, Ys, j):
        out = 1.0
        for X, Y, bws in zip(Xs, Ys, bws_per_layer):
            out *= _k(X[i], Y[j], bws)
        return out

    saa = sum(kprod(As, i, As, j) for i in range(m) for j in range(m) if not (unbiased and i == j))
    sbb = sum(kprod(Bs, i, Bs, j) for i in range(n) for j in range(n) if not (unbiased and i == j))
    sab = sum(kprod(As, i, Bs, j) for i in range(m) for j in range(n))
    if unbiased:
        return saa / (m * (m - 1)) + sbb / (n * (n - 1)) - 2 * sab / (m * n)
    return saa / m**2 + sbb / n**2 - 2 * sab / (m * n)


def test_noise_loss_values():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 7, 3))
    assert noise_loss(a, a) == 0.0
    assert noise_loss(np.zeros((2, 3)), np.ones((2, 3))) == 1.0
    expected = sum((x - y) ** 2 for x, y in zip(a.ravel().tolist(), b.ravel().tolist())) / a.size
    assert abs(noise_loss(a, b) - expected) < 1e-12
    assert rel_error(noise_loss_grad(a, b), fd_grad(lambda: noise_loss(a, b), a)) < 1e-8
    with pytest.raises(ShapeError):
        noise_loss(a, b[:3])


def test_mmd_self_distance_and_symmetry():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((2, 20, 3))
    k = KernelSpec((0.5, 1.0, 2.0))
    assert abs(mmd(A, A, k)) < 1e-12
    assert mmd(A, B, k) == pytest.approx(mmd(B, A, k), abs=1e-15)
    assert mmd(A, B, k) > 0


def test_mmd_permutation_invariance():
    rng = np.random.default_rng(2)
    A, B = rng.standard_normal((2, 15, 4))
    k = KernelSpec((1.0,))
    assert abs(mmd(A, A[rng.permutation(15)], k)) < 1e-12
    pa, pb = rng.permutation(15), rng.permutation(15)
    assert mmd(A[pa], B[pb], k) == pytest.approx(mmd(A, B, k), abs=1e-12)


@pytest.mark.parametrize("estimator", ["biased", "unbiased"])
def test_mmd_double_loop_oracle(estimator):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((12, 3))
    B = rng.standard_normal((9, 3)) + 0.5
    bws = (0.7, 1.3)
    got = mmd(A, B, KernelSpec(bws, estimator))
    ref = _loop_jmmd([A.tolist()], [B.tolist()], [bws], unbiased=estimator == "unbiased")
    assert abs(got - ref) < 1e-12


def test_jmmd_two_layer_double_loop_oracle():
    rng = np.random.default_rng(4)
    A1, A2 = rng.standard_normal((10, 3)), rng.standard_normal((10, 2))
    B1, B2 = rng.standard_normal((8, 3)) + 0.3, rng.standard_normal((8, 2))
    ks = [KernelSpec((0.5, 2.0)), KernelSpec((1.0,))]
    got = jmmd([A1, A2], [B1, B2], ks)
    ref = _loop_jmmd([A1.tolist(), A2.tolist()], [B1.tolist(), B2.tolist()], [(0.5, 2.0), (1.0,)])
    assert abs(got - ref) < 1e-12
    assert abs(jmmd([A1, A2], [A1, A2], ks)) < 1e-12


def test_single_layer_jmmd_equals_mmd_exactly():
    rng = np.random.default_rng(5)
    A, B = rng.standard_normal((2, 11, 3))
    k = KernelSpec((0.3, 1.0, 3.0))
    assert jmmd([A], [B], [k]) == mmd(A, B, k)


def test_two_gaussians_against_closed_form():
    k = KernelSpec((1.0,), "unbiased")
    n = 500
    draws = []
    for seed in range(30):
        rng = np.random.default_rng([7, seed])
        draws.append(mmd(rng.standard_normal((n, 1)), 2 + rng.standard_normal((n, 1)), k))
    sigma = float(np.std(draws, ddof=1))
    rng = np.random.default_rng(99)
    X, Y = rng.standard_normal((n, 1)), 2 + rng.standard_normal((n, 1))
    est = mmd(X, Y, k)
    assert est > 0
    assert abs(est - GAUSS_MMD2) < 3 * sigma
    # a subsample through the independent double loop agrees with the vectorised value
    sub = mmd(X[:40], Y[:40], k)
    assert abs(sub - _loop_jmmd([X[:40].tolist()], [Y[:40].tolist()], [(1.0,)], True)) < 1e-12


def test_unbiased_needs_two_rows():
    with pytest.raises(ValueError):
        mmd(np.zeros((1, 2)), np.zeros((3, 2)), KernelSpec((1.0,), "unbiased"))


def test_kernel_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec(())
    with pytest.raises(ConfigError):
        KernelSpec((1.0, -1.0))
    with pytest.raises(ConfigError):
        KernelSpec((1.0,), "weird")


def test_layer_mismatch_errors():
    A = np.zeros((4, 2))
    with pytest.raises(ShapeError):
        jmmd([A, A], [A], [KernelSpec(), KernelSpec()])
    with pytest.raises(ShapeError):
        jmmd([A, np.zeros((3, 2))], [A, A], [KernelSpec(), KernelSpec()])


def test_median_heuristic_is_geometric_around_median():
    X = np.array([[0.0], [1.0], [3.0]])  # pairwise distances 1, 2, 3
    k = median_heuristic(X)
    assert k.bandwidths == pytest.approx((0.5, 1.0, 2.0, 4.0, 8.0))


@pytest.mark.parametrize("estimator", ["biased", "unbiased"])
def test_mmd_gradient_finite_differences(estimator):
    rng = np.random.default_rng(6)
    A = rng.standard_normal((7, 3))
    B = rng.standard_normal((6, 3)) + 0.4
    k = KernelSpec((0.8, 1.6), estimator)
    _, g = mmd_grad(A, B, k)
    assert rel_error(g, fd_grad(lambda: mmd(A, B, k), A)) < 1e-6


def test_jmmd_gradient_finite_differences():
    rng = np.random.default_rng(7)
    A1, A2 = rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
    B1, B2 = rng.standard_normal((5, 3)), rng.standard_normal((5, 2))
    ks = [KernelSpec((0.7, 1.4)), KernelSpec((1.1,))]
    _, (g1, g2) = jmmd_grad([A1, A2], [B1, B2], ks)
    assert rel_error(g1, fd_grad(lambda: jmmd([A1, A2], [B1, B2], ks), A1)) < 1e-6
    assert rel_error(g2, fd_grad(lambda: jmmd([A1, A2], [B1, B2], ks), A2)) < 1e-6


@pytest.mark.parametrize("measure", ["jmmd", "mmd", "mse"])
def test_semantic_constraint_gradient_and_identity(measure):
    rng = np.random.default_rng(8)
    V = rng.standard_normal((9, 4))
    V0 = V + 0.3 * rng.standard_normal((9, 4))
    assert abs(semantic_constraint(V, V, measure)) < 1e-12
    _, g = semantic_constraint_grad(V0, V, measure)
    assert rel_error(g, fd_grad(lambda: semantic_constraint(V0, V, measure), V0)) < 1e-6


def test_semantic_constraint_dispatch():
    rng = np.random.default_rng(9)
    V0, V = rng.standard_normal((2, 8, 3))
    k = KernelSpec((0.5, 1.0))
    assert semantic_constraint(V0.copy(), V.copy(), "mmd", k) == mmd(V0, V, k)
    assert semantic_constraint(V0, V, "MSE") == noise_loss(V0, V)
    pos = time_positions(8)
    assert pos[0, 0] == 0.0 and pos[-1, 0] == 1.0
    with pytest.raises(ConfigError):
        semantic_constraint(V0, V, "kl")
    with pytest.raises(ShapeError):
        semantic_constraint(V0, V[:5])


def test_jmmd_measure_sees_temporal_order():
    # reversing time keeps the feature multiset, so only the joint measure notices
    rng = np.random.default_rng(10)
    V = np.cumsum(rng.standard_normal((12, 2)), axis=0)
    rev = V[::-1].copy()
    assert abs(semantic_constraint(rev, V, "mmd")) < 1e-12
    assert semantic_constraint(rev, V, "jmmd") > 1e-3


def test_acdr_objective():
    lb = acdr_objective(2.0, 3.0, 0.5, 0.1)
    assert lb.total == pytest.approx(1.3, abs=1e-15)
    assert (lb.l_eps, lb.l_sc, lb.gamma1, lb.gamma2) == (2.0, 3.0, 0.5, 0.1)
    assert acdr_objective(5.0, 7.0, 0.0, 0.0).total == 0.0
    d = acdr_objective(1.0, 1.0)
    assert (d.gamma1, d.gamma2) == (0.5, 0.1)
    a, b = acdr_objective(1.0, 4.0).total, acdr_objective(3.0, 4.0).total
    assert acdr_objective(2.0, 4.0).total == pytest.approx((a + b) / 2, abs=1e-15)
    with pytest.raises(ConfigError):
        acdr_objective(1.0, 1.0, -0.1, 0.1)
