"""Desk-scale recognition backbone: spatial -> visual -> sequence -> classifier.

* spatial:    per-frame linear map + tanh             (X_sp,  T x C_sp)
* visual:     kernel-3 temporal conv + tanh            (X_gwt, T x C)
* sequence:   residual pair of kernel-5 temporal convs (V,     T x C)
* classifier: per-frame linear map                     (Z_V,   T x (G+1))
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import ShapeError

SEQ_KERNEL = 5
VIS_KERNEL = 3


@dataclass
class BaselineModel:
    C_in: int
    C_sp: int
    C: int
    G: int
    tensors: dict = field(default_factory=dict)

    def copy(self) -> "BaselineModel":
        return BaselineModel(self.C_in, self.C_sp, self.C, self.G,
                             {k: v.copy() for k, v in self.tensors.items()})


def param_shapes(C_in, C_sp, C, G):
    return {
        "sp.W": (C_in, C_sp), "sp.b": (C_sp,),
        "vm.W": (VIS_KERNEL, C_sp, C), "vm.b": (C,),
        "sem1.W": (SEQ_KERNEL, C, C), "sem1.b": (C,),
        "sem2.W": (SEQ_KERNEL, C, C), "sem2.b": (C,),
        "cls.W": (C, G + 1), "cls.b": (G + 1,),
    }


def init_model(seed: int, C_in: int, C: int, G: int, C_sp: int = 32) -> BaselineModel:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(C_in, C_sp, C, G).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.standard_normal(shape) / np.sqrt(np.prod(shape[:-1]))
    return BaselineModel(C_in, C_sp, C, G, tensors)


def classify(V, model: BaselineModel) -> np.ndarray:
    return L.linear_fwd(V, model.tensors["cls.W"], model.tensors["cls.b"])


def classify_backward(V, model: BaselineModel, dZ):
    """Returns (dV, {"cls.W": ..., "cls.b": ...})."""
    dV, dW, db = L.linear_bwd(V, model.tensors["cls.W"], dZ)
    return dV, {"cls.W": dW, "cls.b": db}


def baseline_forward(frames, model: BaselineModel, cache: bool = False):
    """Return ``(X_sp, X_gwt, V, Z_V)``, plus a backward cache when ``cache`` is set."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.C_in:
        raise ShapeError(f"frames must be T x {model.C_in}, got {x.shape}")
    P = model.tensors
    X_sp = L.tanh_fwd(L.linear_fwd(x, P["sp.W"], P["sp.b"]))
    a, vm_cols = L.conv1d_fwd(X_sp, P["vm.W"], P["vm.b"])
    X_gwt = L.tanh_fwd(a)
    s1, s1_cols = L.conv1d_fwd(X_gwt, P["sem1.W"], P["sem1.b"])
    h = L.tanh_fwd(s1)
    s2, s2_cols = L.conv1d_fwd(h, P["sem2.W"], P["sem2.b"])
    V = X_gwt + s2
    Z = classify(V, model)
    out = (X_sp, X_gwt, V, Z)
    if not cache:
        return out
    state = dict(x=x, X_sp=X_sp, vm_cols=vm_cols, X_gwt=X_gwt, s1_cols=s1_cols, h=h,
                 s2_cols=s2_cols, V=V)
    return out, state


def baseline_backward(state, model: BaselineModel, dZ=None, dV=None, dX_gwt=None) -> dict:
    """Parameter gradients given upstream gradients at Z_V, V and X_gwt (any may be None)."""
    P = model.tensors
    G = {k: np.zeros_like(v) for k, v in P.items()}
    V = state["V"]
    dV_total = np.zeros_like(V) if dV is None else np.array(dV, dtype=np.float64)
    if dZ is not None:
        dV_cls, g = classify_backward(V, model, dZ)
        G.update(g)
        dV_total = dV_total + dV_cls
    dh, G["sem2.W"], G["sem2.b"] = L.conv1d_bwd(state["s2_cols"], P["sem2.W"], dV_total)
    ds1 = L.tanh_bwd(state["h"], dh)
    dX, G["sem1.W"], G["sem1.b"] = L.conv1d_bwd(state["s1_cols"], P["sem1.W"], ds1)
    dX_gwt_total = dV_total + dX
    if dX_gwt is not None:
        dX_gwt_total = dX_gwt_total + dX_gwt
    da = L.tanh_bwd(state["X_gwt"], dX_gwt_total)
    dX_sp, G["vm.W"], G["vm.b"] = L.conv1d_bwd(state["vm_cols"], P["vm.W"], da)
    dsp = L.tanh_bwd(state["X_sp"], dX_sp)
    _, G["sp.W"], G["sp.b"] = L.linear_bwd(state["x"], P["sp.W"], dsp)
    return G
