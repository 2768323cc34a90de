"""Semantic conditions: temporal softmax, codebook quantization, and their blend."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError, ShapeError

DEFAULT_TAU = 0.4


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray  # G x C

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 2 or e.shape[1] < 1:
            raise ConfigError(f"codebook needs shape (G>=2, C>=1), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ConfigError("codebook entries must be finite")
        if len(np.unique(e, axis=0)) != len(e):
            raise ConfigError("codebook rows must be distinct")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def G(self) -> int:
        return self.entries.shape[0]

    @property
    def C(self) -> int:
        return self.entries.shape[1]


def build_codebook(seed: int, G: int, C: int, min_dist: float = 0.5, max_tries: int = 100) -> Codebook:
    """Seeded standard-normal prototypes, redrawn until pairwise distances clear ``min_dist``."""
    if G < 2 or C < 1:
        raise ConfigError(f"need G >= 2 and C >= 1, got G={G}, C={C}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        entries = rng.standard_normal((G, C))
        if pdist(entries).min() >= min_dist:
            return Codebook(entries)
    raise ConfigError(
        f"could not place {G} entries in {C} dims at separation {min_dist} after {max_tries} draws"
    )


def temporal_condition(X_gwt: np.ndarray) -> np.ndarray:
    """Softmax over the time axis, independently per channel."""
    X = np.asarray(X_gwt, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError(f"expected a T x C matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("temporal_condition input must be finite")
    z = np.exp(X - X.max(axis=0, keepdims=True))
    return z / z.sum(axis=0, keepdims=True)


def temporal_condition_backward(p_tc: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the per-channel softmax."""
    return p_tc * (grad - np.sum(grad * p_tc, axis=0, keepdims=True))


def nearest_indices(V: np.ndarray, cb: Codebook) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != cb.C:
        raise ShapeError(f"feature channels {V.shape} do not match codebook channels {cb.C}")
    d2 = ((V[:, None, :] - cb.entries[None, :, :]) ** 2).sum(axis=-1)
    # argmin returns the first minimum, so ties go to the lowest index.
    return np.argmin(d2, axis=1)


def gloss_condition(V: np.ndarray, cb: Codebook) -> np.ndarray:
    """Replace each time row by its nearest codebook entry."""
    return cb.entries[nearest_indices(V, cb)].copy()


def combine_conditions(p_tc: np.ndarray, p_gc: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    if np.shape(p_tc) != np.shape(p_gc):
        raise ShapeError(f"condition shapes differ: {np.shape(p_tc)} vs {np.shape(p_gc)}")
    if not (0.0 <= tau <= 1.0):
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    return tau * np.asarray(p_tc) + (1.0 - tau) * np.asarray(p_gc)
