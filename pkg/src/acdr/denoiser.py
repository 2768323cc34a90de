"""Noise-prediction network: a small 1D U-Net over time with per-stream input projections.

Three streams share the U-Net body and output head. Each has its own input
projection from ``[noisy, clean]`` (2C channels) to the model width:

* ``"v"``  sequence representation, additionally conditioned on ``f_phi``
* ``"tc"`` temporal condition, unconditioned
* ``"gc"`` gloss condition, unconditioned

``depth`` counts resolution levels; every level but the deepest has one 2x
average-pool down and one nearest-neighbour up stage with a skip connection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import ConfigError, ShapeError

STREAMS = ("v", "tc", "gc")
KERNEL = 3


@dataclass
class DenoiserParams:
    C: int
    width: int
    depth: int
    seed: int = 0
    t_max: int = 1000
    tensors: dict = field(default_factory=dict)

    def n_params(self) -> int:
        return int(sum(a.size for a in self.tensors.values()))

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            self.C, self.width, self.depth, self.seed, self.t_max,
            {k: v.copy() for k, v in self.tensors.items()},
        )


def param_shapes(C: int, width: int, depth: int) -> dict[str, tuple]:
    W = width
    shapes: dict[str, tuple] = {}
    for s in STREAMS:
        shapes[f"in_{s}.W"] = (2 * C, W)
        shapes[f"in_{s}.b"] = (W,)
    shapes["cond.W"] = (C, W)
    shapes["cond.b"] = (W,)
    shapes["temb.W"] = (W, W)
    shapes["temb.b"] = (W,)
    for lvl in range(1, depth + 1):
        shapes[f"enc{lvl}.W"] = (KERNEL, W, W)
        shapes[f"enc{lvl}.b"] = (W,)
        if lvl < depth:
            shapes[f"dec{lvl}.W"] = (KERNEL, W, W)
            shapes[f"dec{lvl}.b"] = (W,)
    shapes["out.W"] = (W, C)
    shapes["out.b"] = (C,)
    return shapes


def init_params(seed: int, C: int, width: int = 64, depth: int = 2, t_max: int = 1000) -> DenoiserParams:
    """Fan-in scaled normal weights, zero biases, and a zero output head (so eps_pred starts at 0)."""
    if C < 1 or width < 1 or depth < 1:
        raise ConfigError(f"need C, width, depth >= 1; got {C}, {width}, {depth}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(C, width, depth).items():
        if name.endswith(".b") or name.startswith("out."):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            tensors[name] = rng.standard_normal(shape) / np.sqrt(fan_in)
    return DenoiserParams(C, width, depth, seed, t_max, tensors)


def timestep_features(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    ang = t * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)])
    if dim % 2:
        emb = np.concatenate([emb, [0.0]])
    return emb


def _level_fwd(h, lvl, P, depth):
    c = {"T": h.shape[0]}
    a, c["enc_cols"] = L.conv1d_fwd(h, P[f"enc{lvl}.W"], P[f"enc{lvl}.b"])
    act, c["enc_s"] = L.silu_fwd(a)
    c["enc_pre"] = a
    h1 = h + act
    if lvl == depth:
        return h1, c
    d = L.pool2_fwd(h1)
    inner, c["inner"] = _level_fwd(d, lvl + 1, P, depth)
    c["Tc"] = d.shape[0]
    h2 = h1 + L.up2_fwd(inner, c["T"])
    b, c["dec_cols"] = L.conv1d_fwd(h2, P[f"dec{lvl}.W"], P[f"dec{lvl}.b"])
    act2, c["dec_s"] = L.silu_fwd(b)
    c["dec_pre"] = b
    return h2 + act2, c


def _level_bwd(dy, lvl, P, depth, c, G):
    if lvl < depth:
        dpre = L.silu_bwd(c["dec_pre"], c["dec_s"], dy)
        dtmp, dW, db = L.conv1d_bwd(c["dec_cols"], P[f"dec{lvl}.W"], dpre)
        G[f"dec{lvl}.W"] += dW
        G[f"dec{lvl}.b"] += db
        dh2 = dy + dtmp
        dinner = L.up2_bwd(c["Tc"], dh2)
        dd = _level_bwd(dinner, lvl + 1, P, depth, c["inner"], G)
        dh1 = dh2 + L.pool2_bwd(c["T"], dd)
    else:
        dh1 = dy
    dpre = L.silu_bwd(c["enc_pre"], c["enc_s"], dh1)
    dh, dW, db = L.conv1d_bwd(c["enc_cols"], P[f"enc{lvl}.W"], dpre)
    G[f"enc{lvl}.W"] += dW
    G[f"enc{lvl}.b"] += db
    return dh1 + dh


def denoiser_forward(noisy, clean, f_phi, t: int, params: DenoiserParams, stream: str = "v", cache: bool = False):
    """Predict the injected noise, shape T x C.

    With ``cache=True`` returns ``(eps_pred, state)`` for :func:`denoiser_backward`.
    """
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}")
    noisy = np.asarray(noisy, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if noisy.shape != clean.shape or noisy.ndim != 2 or noisy.shape[1] != params.C:
        raise ShapeError(f"noisy {noisy.shape} / clean {clean.shape} incompatible with C={params.C}")
    if f_phi is not None and np.shape(f_phi) != noisy.shape:
        raise ShapeError(f"condition shape {np.shape(f_phi)} != {noisy.shape}")
    if not (1 <= t <= params.t_max):
        raise ValueError(f"diffusion step {t} outside [1, {params.t_max}]")
    P = params.tensors
    x_in = np.concatenate([noisy, clean], axis=1)
    temb_in = timestep_features(t, params.width)
    h = L.linear_fwd(x_in, P[f"in_{stream}.W"], P[f"in_{stream}.b"])
    h = h + (temb_in @ P["temb.W"] + P["temb.b"])
    if f_phi is not None:
        f_phi = np.asarray(f_phi, dtype=np.float64)
        h = h + L.linear_fwd(f_phi, P["cond.W"], P["cond.b"])
    body, body_cache = _level_fwd(h, 1, P, params.depth)
    out = L.linear_fwd(body, P["out.W"], P["out.b"])
    if not cache:
        return out
    state = {
        "stream": stream, "x_in": x_in, "temb_in": temb_in, "f_phi": f_phi,
        "body": body, "body_cache": body_cache, "params": params, "C": params.C,
    }
    return out, state


def denoiser_backward(state, upstream_grad, detach: tuple[str, ...] = (), accumulate: dict | None = None):
    """Reverse-mode gradients of ``sum(upstream_grad * eps_pred)``.

    Returns ``(param_grads, input_grads)``; ``input_grads`` maps ``noisy``,
    ``clean`` and ``f_phi`` to arrays (``f_phi`` is None for unconditioned
    calls). Streams named in ``detach`` get exactly-zero gradients. Passing a
    gradient dict as ``accumulate`` adds into it and returns it.
    """
    if state is None:
        raise ValueError("denoiser_backward needs the state from a cached forward pass")
    params = state["params"]
    P = params.tensors
    G = {k: np.zeros_like(v) for k, v in P.items()} if accumulate is None else accumulate
    dy = np.asarray(upstream_grad, dtype=np.float64)
    dbody, dW, db = L.linear_bwd(state["body"], P["out.W"], dy)
    G["out.W"] += dW
    G["out.b"] += db
    dh = _level_bwd(dbody, 1, P, params.depth, state["body_cache"], G)
    s = state["stream"]
    dx_in, dW, db = L.linear_bwd(state["x_in"], P[f"in_{s}.W"], dh)
    G[f"in_{s}.W"] += dW
    G[f"in_{s}.b"] += db
    dsum = dh.sum(axis=0)
    G["temb.W"] += np.outer(state["temb_in"], dsum)
    G["temb.b"] += dsum
    df = None
    if state["f_phi"] is not None:
        df, dW, db = L.linear_bwd(state["f_phi"], P["cond.W"], dh)
        G["cond.W"] += dW
        G["cond.b"] += db
    C = state["C"]
    grads = {"noisy": dx_in[:, :C], "clean": dx_in[:, C:], "f_phi": df}
    for name in detach:
        if grads.get(name) is not None:
            grads[name] = np.zeros_like(grads[name])
    return G, grads
