"""CTC loss by log-space forward-backward, and greedy best-path decoding.

Logits are T x (G+1) with column 0 the blank.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import InfeasibleTargetError

BLANK = 0


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def min_frames(target) -> int:
    """Fewest frames that can emit ``target``: one per label plus a blank between repeats."""
    target = list(target)
    return len(target) + sum(a == b for a, b in zip(target, target[1:]))


def _extend(target):
    ext = [BLANK]
    for y in target:
        ext += [int(y), BLANK]
    ext = np.asarray(ext)
    skip = np.zeros(len(ext), dtype=bool)
    # a label may be reached from two positions back unless it repeats the previous label
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    return ext, skip


def ctc_loss(logits, target) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``target`` and its gradient with respect to ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    target = [int(y) for y in target]
    T, V = logits.shape
    if any(y < 1 or y >= V for y in target):
        raise ValueError(f"target ids must lie in [1, {V - 1}], got {target}")
    if T < min_frames(target):
        raise InfeasibleTargetError(
            f"{T} frames cannot emit a target needing {min_frames(target)}"
        )
    logp = log_softmax(logits)
    ext, skip = _extend(target)
    S = len(ext)
    emit = logp[:, ext]  # T x S

    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.full(S, -np.inf)
        step[1:] = prev[:-1]
        jump = np.full(S, -np.inf)
        jump[2:] = prev[:-2]
        jump[~skip] = -np.inf
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), jump) + emit[t]

    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_from = np.zeros(S, dtype=bool)  # position s can jump to s+2
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.full(S, -np.inf)
        step[:-1] = nxt[1:]
        jump = np.full(S, -np.inf)
        jump[:-2] = nxt[2:]
        jump[~skip_from] = -np.inf
        beta[t] = np.logaddexp(np.logaddexp(stay, step), jump) + emit[t]

    tail = alpha[T - 1, S - 1] if S == 1 else np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    log_prob = float(tail)
    # alpha*beta double counts the emission at t
    occ = alpha + beta - emit
    post = np.zeros((T, V))
    for c in np.unique(ext):
        cols = ext == c
        post[:, c] = np.exp(logsumexp(occ[:, cols], axis=1) - log_prob)
    grad = np.exp(logp) - post
    return -log_prob, grad


def ctc_greedy_decode(logits) -> list[int]:
    """Per-frame argmax, merge repeats, drop blanks."""
    best = np.argmax(np.asarray(logits), axis=1)
    out = []
    prev = None
    for k in best:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out
