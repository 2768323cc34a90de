"""Conditional diffusion mathematics with a condition-dependent mean shift.

The forward process drifts a representation ``V0`` toward a condition ``f``
while injecting Gaussian noise::

    V_t = sqrt(abar_t) V0 + (1 - sqrt(abar_t)) f + sqrt(1 - abar_t) eps

All operations are pure functions of float64 arrays. Noise is always supplied
by the caller. Step indices are 1-based; ``abar_0`` is taken to be 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Precomputed per-step coefficients; element ``t - 1`` belongs to step ``t``."""

    T_max: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    lambda0: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def abar(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def check_step(self, t: int) -> None:
        if not (1 <= t <= self.T_max):
            raise ValueError(f"diffusion step {t} outside [1, {self.T_max}]")


def _jump_coefficients(log_abar_t, log_abar_s, b=None):
    """Posterior coefficients for q(V_s | V_t, V0, f) with s < t.

    Works from log cumulative products so 1 - abar stays accurate for tiny
    betas. ``lambda2`` uses the identity sqrt(abar_t) - 1 =
    -(1 - abar_t) / (1 + sqrt(abar_t)) to avoid cancellation.
    """
    log_a = log_abar_t - log_abar_s
    if b is None:
        b = -np.expm1(log_a)
    one_m_abar_t = -np.expm1(log_abar_t)
    one_m_abar_s = -np.expm1(log_abar_s)
    sa = np.exp(0.5 * log_a)
    sab_t = np.exp(0.5 * log_abar_t)
    sab_s = np.exp(0.5 * log_abar_s)
    lam0 = b * sab_s / one_m_abar_t
    lam1 = one_m_abar_s * sa / one_m_abar_t
    lam2 = (1.0 + sab_t - sa - sab_s) / (1.0 + sab_t)
    var = one_m_abar_s / one_m_abar_t * b
    return lam0, lam1, lam2, var


def make_linear_schedule(beta_start: float, beta_end: float, T_max: int) -> DiffusionSchedule:
    if not isinstance(T_max, (int, np.integer)) or T_max < 1:
        raise ConfigError(f"T_max must be a positive integer, got {T_max!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, int(T_max), dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    log_abar = np.cumsum(np.log1p(-beta))
    log_abar_prev = np.concatenate([[0.0], log_abar[:-1]])
    lam0, lam1, lam2, beta_tilde = _jump_coefficients(log_abar, log_abar_prev, beta)
    return DiffusionSchedule(
        T_max=int(T_max),
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_tilde=beta_tilde,
        lambda0=lam0,
        lambda1=lam1,
        lambda2=lam2,
    )


def step_coefficients(t: int, s: int, sched: DiffusionSchedule) -> tuple[float, float, float, float]:
    """(lambda0, lambda1, lambda2, variance) for a jump from step t down to s < t.

    For ``s == t - 1`` these are the stored per-step values.
    """
    sched.check_step(t)
    if not (0 <= s < t):
        raise ValueError(f"target step {s} must satisfy 0 <= s < {t}")
    if s == t - 1:
        i = t - 1
        return (
            float(sched.lambda0[i]),
            float(sched.lambda1[i]),
            float(sched.lambda2[i]),
            float(sched.beta_tilde[i]),
        )
    log_abar = np.cumsum(np.log1p(-sched.beta[:t]))
    log_s = 0.0 if s == 0 else log_abar[s - 1]
    return tuple(float(c) for c in _jump_coefficients(log_abar[t - 1], log_s))


def _same_shape(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeError(f"shape mismatch: {shape} vs {np.shape(a)}")


def forward_noise(V0, f_phi, t: int, sched: DiffusionSchedule, eps) -> np.ndarray:
    """Sample V_t from q(V_t | V0, f) using caller-supplied standard-normal ``eps``."""
    _same_shape(V0, f_phi, eps)
    sched.check_step(t)
    ab = sched.abar(t)
    sa = np.sqrt(ab)
    return sa * V0 + (1.0 - sa) * f_phi + np.sqrt(1.0 - ab) * eps


def forward_step(V_prev, f_phi, t: int, sched: DiffusionSchedule, eps) -> np.ndarray:
    """One Markov transition q(V_t | V_{t-1}, f)."""
    _same_shape(V_prev, f_phi, eps)
    sched.check_step(t)
    sa = np.sqrt(sched.alpha[t - 1])
    return sa * V_prev + (1.0 - sa) * f_phi + np.sqrt(sched.beta[t - 1]) * eps


def predict_v0(Vt, eps_pred, f_phi, t: int, sched: DiffusionSchedule) -> np.ndarray:
    _same_shape(Vt, eps_pred, f_phi)
    sched.check_step(t)
    ab = sched.abar(t)
    sa = np.sqrt(ab)
    return (Vt - (1.0 - sa) * f_phi - np.sqrt(1.0 - ab) * eps_pred) / sa


def posterior_mean(V0_hat, Vt, f_phi, t: int, sched: DiffusionSchedule) -> np.ndarray:
    _same_shape(V0_hat, Vt, f_phi)
    sched.check_step(t)
    if t < 2:
        raise ValueError("posterior_mean needs t >= 2; use ancestral_step at the boundary")
    i = t - 1
    return sched.lambda0[i] * V0_hat + sched.lambda1[i] * Vt + sched.lambda2[i] * f_phi


def ancestral_step(V0_hat, Vt, f_phi, t: int, sched: DiffusionSchedule, eps) -> np.ndarray:
    """Draw V_{t-1}; at t <= 1 the prediction itself is returned."""
    _same_shape(V0_hat, Vt, f_phi, eps)
    if t <= 1:
        return np.array(V0_hat, dtype=np.float64, copy=True)
    mu = posterior_mean(V0_hat, Vt, f_phi, t, sched)
    return mu + np.sqrt(sched.beta_tilde[t - 1]) * eps


def ddim_subsequence(T_max: int, K: int) -> list[int]:
    """K steps at stride floor(T_max / K) from T_max, closed by a final step at 1.

    The closing step is appended only when the strided grid does not already
    end at 1, so the result has K or K + 1 entries.
    """
    if not (1 <= K <= T_max):
        raise ValueError(f"K={K} must lie in [1, T_max={T_max}]")
    stride = T_max // K
    steps = [T_max - i * stride for i in range(K)]
    if steps[-1] != 1:
        steps.append(1)
    return steps


def _check_timesteps(timesteps: Sequence[int], sched: DiffusionSchedule) -> None:
    if len(timesteps) == 0:
        raise ValueError("empty timestep list")
    for a, b in zip(timesteps, timesteps[1:]):
        if b >= a:
            raise ValueError(f"timesteps must be strictly decreasing, got {list(timesteps)}")
    sched.check_step(timesteps[0])
    if timesteps[-1] < 1:
        raise ValueError("timesteps must be >= 1")


def denoise_loop(
    Vt,
    f_phi,
    denoiser: Callable[[np.ndarray, int], np.ndarray],
    sched: DiffusionSchedule,
    timesteps: Sequence[int],
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Iterate prediction and posterior updates over ``timesteps``; return the final V0 estimate.

    ``denoiser(x, t)`` returns the noise prediction at step ``t``. Without
    ``rng`` the updates are deterministic (zero noise in every step); with it,
    each jump draws fresh noise scaled by the jump's posterior variance.
    """
    _same_shape(Vt, f_phi)
    _check_timesteps(timesteps, sched)
    x = np.asarray(Vt, dtype=np.float64)
    v0_hat = x
    for i, t in enumerate(timesteps):
        eps_pred = denoiser(x, t)
        v0_hat = predict_v0(x, eps_pred, f_phi, t, sched)
        if i + 1 == len(timesteps):
            break
        s = timesteps[i + 1]
        lam0, lam1, lam2, var = step_coefficients(t, s, sched)
        x = lam0 * v0_hat + lam1 * x + lam2 * f_phi
        if rng is not None:
            x = x + np.sqrt(var) * rng.standard_normal(x.shape)
    return v0_hat
