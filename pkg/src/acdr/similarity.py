from __future__ import annotations

from pathlib import Path

import numpy as np

from .backbone import BaselineModel, baseline_forward

SIM_FILES = ("xgwt_self.csv", "v_self.csv", "v_xgwt_cross.csv")


def cosine_similarity(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; all-zero rows are treated as unit-free and give 0."""
    def unit(X):
        n = np.linalg.norm(X, axis=1, keepdims=True)
        return X / np.where(n > 0, n, 1.0)

    return unit(A) @ unit(B).T


def similarity_matrices(frames, model: BaselineModel) -> dict[str, np.ndarray]:
    _, X_gwt, V, _ = baseline_forward(frames, model)
    return {
        "xgwt_self.csv": cosine_similarity(X_gwt, X_gwt),
        "v_self.csv": cosine_similarity(V, V),
        "v_xgwt_cross.csv": cosine_similarity(V, X_gwt),
    }


def write_csv(path, M: np.ndarray) -> None:
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def export_similarity(frames, model: BaselineModel, out_dir) -> dict[str, np.ndarray]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mats = similarity_matrices(frames, model)
    for name, M in mats.items():
        write_csv(out / name, M)
    return mats
