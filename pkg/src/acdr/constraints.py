"""Distribution distances and the losses built on them.

Rows of a T x C matrix are the samples for MMD and JMMD. Kernels are
Gaussian RBF mixtures (the mean over bandwidths). Every measure comes with
its gradient with respect to the first argument; the second argument is a
fixed reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigError, ShapeError

DEFAULT_GAMMA1 = 0.5
DEFAULT_GAMMA2 = 0.1
MEASURES = ("jmmd", "mmd", "mse")
# RBF bandwidth of the normalized time-position layer used by the JMMD measure.
TIME_BANDWIDTH = 0.2


@dataclass(frozen=True)
class KernelSpec:
    bandwidths: tuple = (1.0,)
    estimator: str = "biased"

    def __post_init__(self):
        bw = tuple(float(b) for b in np.atleast_1d(self.bandwidths))
        if not bw or any(not (b > 0 and np.isfinite(b)) for b in bw):
            raise ConfigError(f"bandwidths must be non-empty and positive, got {self.bandwidths}")
        if self.estimator not in ("biased", "unbiased"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        object.__setattr__(self, "bandwidths", bw)


@dataclass
class LossBreakdown:
    l_eps: float = 0.0
    l_sc: float = 0.0
    l_ctc: float = 0.0
    total: float = 0.0
    gamma1: float = DEFAULT_GAMMA1
    gamma2: float = DEFAULT_GAMMA2
    extras: dict = field(default_factory=dict)


def median_heuristic(X: np.ndarray, n: int = 5, factor: float = 2.0, estimator: str = "biased") -> KernelSpec:
    """``n`` bandwidths geometrically spaced by ``factor`` around the median pairwise distance."""
    X = np.asarray(X, dtype=np.float64)
    med = float(np.median(pdist(X))) if len(X) > 1 else 0.0
    if not med > 0:
        med = 1.0
    powers = np.arange(n) - (n - 1) / 2.0
    return KernelSpec(tuple(med * factor**powers), estimator)


def noise_loss(eps_pred, eps) -> float:
    if np.shape(eps_pred) != np.shape(eps):
        raise ShapeError(f"shape mismatch: {np.shape(eps_pred)} vs {np.shape(eps)}")
    r = np.asarray(eps) - np.asarray(eps_pred)
    return float(np.mean(r * r))


def noise_loss_grad(eps_pred, eps) -> np.ndarray:
    """Gradient of :func:`noise_loss` with respect to ``eps_pred``."""
    r = np.asarray(eps_pred) - np.asarray(eps)
    return 2.0 * r / r.size


def _grams(X, Y, k: KernelSpec):
    d2 = cdist(X, Y, "sqeuclidean")
    per_bw = [np.exp(-d2 / (2.0 * s * s)) for s in k.bandwidths]
    return per_bw, sum(per_bw) / len(per_bw)


def _weights(m, n, estimator):
    if estimator == "biased":
        return (np.full((m, m), 1.0 / (m * m)), np.full((n, n), 1.0 / (n * n)),
                np.full((m, n), -2.0 / (m * n)))
    if m < 2 or n < 2:
        raise ValueError("unbiased MMD needs at least 2 rows per sample")
    waa = np.full((m, m), 1.0 / (m * (m - 1)))
    np.fill_diagonal(waa, 0.0)
    wbb = np.full((n, n), 1.0 / (n * (n - 1)))
    np.fill_diagonal(wbb, 0.0)
    return waa, wbb, np.full((m, n), -2.0 / (m * n))


def _check_layers(As, Bs, kernels):
    if not (len(As) == len(Bs) == len(kernels)) or not As:
        raise ShapeError("layer lists must be non-empty and of equal length")
    As = [np.asarray(a, dtype=np.float64) for a in As]
    Bs = [np.asarray(b, dtype=np.float64) for b in Bs]
    m, n = len(As[0]), len(Bs[0])
    for a, b in zip(As, Bs):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or len(a) != m or len(b) != n:
            raise ShapeError(f"layer shapes disagree: {a.shape} vs {b.shape}")
    return As, Bs


def _jmmd(As, Bs, kernels, want_grad):
    As, Bs = _check_layers(As, Bs, kernels)
    m, n = len(As[0]), len(Bs[0])
    waa, wbb, wab = _weights(m, n, kernels[0].estimator)
    aa = [_grams(a, a, k) for a, k in zip(As, kernels)]
    bb = [_grams(b, b, k) for b, k in zip(Bs, kernels)]
    ab = [_grams(a, b, k) for a, b, k in zip(As, Bs, kernels)]
    Kaa, Kbb, Kab = aa[0][1], bb[0][1], ab[0][1]
    for layer in range(1, len(As)):
        Kaa = Kaa * aa[layer][1]
        Kbb = Kbb * bb[layer][1]
        Kab = Kab * ab[layer][1]
    value = float(np.sum(waa * Kaa) + np.sum(wbb * Kbb) + np.sum(wab * Kab))
    if kernels[0].estimator == "biased":
        value = max(value, 0.0)
    if not want_grad:
        return value, None
    grads = []
    for layer, (A, B, k) in enumerate(zip(As, Bs, kernels)):
        other_aa = np.ones((m, m))
        other_ab = np.ones((m, n))
        for o in range(len(As)):
            if o != layer:
                other_aa = other_aa * aa[o][1]
                other_ab = other_ab * ab[o][1]
        g = np.zeros_like(A)
        nb = len(k.bandwidths)
        for s, Kaa_b, Kab_b in zip(k.bandwidths, aa[layer][0], ab[layer][0]):
            Maa = waa * other_aa * Kaa_b / nb
            Mab = wab * other_ab * Kab_b / nb
            g -= 2.0 / (s * s) * (Maa.sum(axis=1)[:, None] * A - Maa @ A)
            g -= 1.0 / (s * s) * (Mab.sum(axis=1)[:, None] * A - Mab @ B)
        grads.append(g)
    return value, grads


def jmmd(pairsA: Sequence, pairsB: Sequence, kernels: Sequence[KernelSpec]) -> float:
    """Squared MMD under the product of per-layer kernels."""
    return _jmmd(list(pairsA), list(pairsB), list(kernels), False)[0]


def jmmd_grad(pairsA, pairsB, kernels) -> tuple[float, list]:
    """Value and gradients with respect to each layer of ``pairsA``."""
    return _jmmd(list(pairsA), list(pairsB), list(kernels), True)


def mmd(A, B, k: KernelSpec) -> float:
    """Squared MMD between the rows of ``A`` and ``B``."""
    return _jmmd([A], [B], [k], False)[0]


def mmd_grad(A, B, k: KernelSpec) -> tuple[float, np.ndarray]:
    value, grads = _jmmd([A], [B], [k], True)
    return value, grads[0]


def time_positions(T: int) -> np.ndarray:
    return (np.arange(T, dtype=np.float64) / max(T - 1, 1))[:, None]


def semantic_constraint_grad(V0_hat, V, measure: str = "jmmd", kernel: KernelSpec | None = None):
    """Distance from the denoised ``V0_hat`` to the reference ``V`` and its gradient in ``V0_hat``.

    ``jmmd`` pairs each row with its normalized time position, so the joint
    kernel compares (position, feature) samples. Without an explicit
    ``kernel`` the feature bandwidths come from the median heuristic on ``V``.
    """
    measure = measure.lower()
    if measure not in MEASURES:
        raise ConfigError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    V0_hat = np.asarray(V0_hat, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if V0_hat.shape != V.shape:
        raise ShapeError(f"shape mismatch: {V0_hat.shape} vs {V.shape}")
    if measure == "mse":
        return noise_loss(V0_hat, V), noise_loss_grad(V0_hat, V)
    if kernel is None:
        kernel = median_heuristic(V)
    if measure == "mmd":
        return mmd_grad(V0_hat, V, kernel)
    pos = time_positions(len(V))
    tk = KernelSpec((TIME_BANDWIDTH,), kernel.estimator)
    value, grads = jmmd_grad([V0_hat, pos], [V, pos], [kernel, tk])
    return value, grads[0]


def semantic_constraint(V0_hat, V, measure: str = "jmmd", kernel: KernelSpec | None = None) -> float:
    return semantic_constraint_grad(V0_hat, V, measure, kernel)[0]


def acdr_objective(l_eps: float, l_sc: float, gamma1: float = DEFAULT_GAMMA1,
                   gamma2: float = DEFAULT_GAMMA2) -> LossBreakdown:
    if gamma1 < 0 or gamma2 < 0:
        raise ConfigError(f"gammas must be non-negative, got {gamma1}, {gamma2}")
    return LossBreakdown(l_eps=l_eps, l_sc=l_sc, total=gamma1 * l_eps + gamma2 * l_sc,
                         gamma1=gamma1, gamma2=gamma2)
