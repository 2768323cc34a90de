"""Central finite differences for gradient tests."""

import numpy as np


def fd_grad(fn, x, h=1e-5):
    """d fn / d x for scalar ``fn()`` reading ``x`` in place."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn()
        x[idx] = old - h
        down = fn()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    """Norm-relative error; 0 when both are exactly zero."""
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)
