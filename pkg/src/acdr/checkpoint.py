"""Checkpoint blocks: an 8-byte little-endian header length, a UTF-8 JSON header,
then each tensor as contiguous float32 little-endian values in header order."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = "acdr-ckpt-1"
F32 = np.dtype("<f4")


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    for name, arr in tensors.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += int(arr.size)
    header = {"format": MAGIC, "params": entries, "meta": meta or {}}
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(a, dtype=F32).tobytes() for a in tensors.values())
    Path(path).write_bytes(struct.pack("<Q", len(hbytes)) + hbytes + payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + n])
    if header.get("format") != MAGIC:
        raise ValueError(f"{path} is not an {MAGIC} checkpoint")
    payload = np.frombuffer(raw[8 + n :], dtype=F32)
    tensors = {}
    for e in header["params"]:
        size = int(np.prod(e["shape"]))
        tensors[e["name"]] = payload[e["offset"] : e["offset"] + size].astype(np.float64).reshape(e["shape"])
    return tensors, header["meta"]


def save_models(path, model, denoiser, cfg_text: str, extra: dict | None = None) -> None:
    """Backbone (``model.*``) and optional denoiser (``denoiser.*``) in one block."""
    tensors = {f"model.{k}": v for k, v in model.tensors.items()}
    meta = {"config": cfg_text,
            "model": {"C_in": model.C_in, "C_sp": model.C_sp, "C": model.C, "G": model.G}}
    if denoiser is not None:
        tensors.update({f"denoiser.{k}": v for k, v in denoiser.tensors.items()})
        meta["denoiser"] = {"C": denoiser.C, "width": denoiser.width, "depth": denoiser.depth,
                            "seed": denoiser.seed, "t_max": denoiser.t_max}
    meta.update(extra or {})
    save_checkpoint(path, tensors, meta)


def load_models(path):
    """Returns ``(model, denoiser or None, meta)``."""
    from .backbone import BaselineModel
    from .denoiser import DenoiserParams

    tensors, meta = load_checkpoint(path)
    m = meta["model"]
    model = BaselineModel(m["C_in"], m["C_sp"], m["C"], m["G"],
                          {k[6:]: v for k, v in tensors.items() if k.startswith("model.")})
    denoiser = None
    if "denoiser" in meta:
        d = meta["denoiser"]
        denoiser = DenoiserParams(d["C"], d["width"], d["depth"], d["seed"], d["t_max"],
                                  {k[9:]: v for k, v in tensors.items() if k.startswith("denoiser.")})
    return model, denoiser, meta
