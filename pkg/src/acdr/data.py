"""Synthetic gloss-sequence corpus and its on-disk layout.

Layout under the output directory::

    manifest.json          spec, codebook descriptor, sha256 of every file
    codebook.bin           G x C float32 little-endian, row-major
    <split>/frames.bin     all utterances' frames concatenated, float32 LE row-major
    <split>/index.json     per-utterance id, row offset, T and labels
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .conditions import Codebook, build_codebook
from .config import SyntheticDatasetSpec

SPLITS = ("train", "dev", "test")
F32 = np.dtype("<f4")


@dataclass
class Utterance:
    uid: str
    frames: np.ndarray
    labels: list


def _render(rng: np.random.Generator, spec: SyntheticDatasetSpec, cb: Codebook) -> tuple[np.ndarray, list]:
    L = int(rng.integers(spec.len_min, spec.len_max + 1))
    labels = [int(x) for x in rng.integers(1, spec.vocab_size + 1, size=L)]
    durs = rng.integers(spec.dur_min, spec.dur_max + 1, size=L)
    for i in range(L - 1):
        # a repeated label needs a frame in between for the blank
        if labels[i] == labels[i + 1] and durs[i] < 2:
            durs[i] = 2
    frames = np.repeat(cb.entries[np.asarray(labels) - 1], durs, axis=0)
    if spec.noise_sigma > 0:
        frames = frames + spec.noise_sigma * rng.standard_normal(frames.shape)
    if spec.smooth_width > 1:
        frames = uniform_filter1d(frames, size=spec.smooth_width, axis=0, mode="nearest")
    return frames, labels


def make_codebook(spec: SyntheticDatasetSpec) -> Codebook:
    """The float32-rounded codebook, exactly as it is stored on disk."""
    cb = build_codebook(spec.codebook_seed, spec.vocab_size, spec.channels, spec.codebook_min_dist)
    return Codebook(cb.entries.astype(F32).astype(np.float64))


def generate_dataset(spec: SyntheticDatasetSpec) -> tuple[Codebook, dict[str, list[Utterance]]]:
    cb = make_codebook(spec)
    counts = {"train": spec.n_train, "dev": spec.n_dev, "test": spec.n_test}
    splits = {}
    for k, split in enumerate(SPLITS):
        utts = []
        for i in range(counts[split]):
            rng = np.random.default_rng([spec.seed, k, i])
            frames, labels = _render(rng, spec, cb)
            utts.append(Utterance(f"{split}-{i:05d}", frames.astype(F32).astype(np.float64), labels))
        splits[split] = utts
    return cb, splits


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def save_dataset(out_dir, spec: SyntheticDatasetSpec, cb: Codebook, splits: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "codebook.bin").write_bytes(cb.entries.astype(F32).tobytes(order="C"))
    files = ["codebook.bin"]
    for split, utts in splits.items():
        d = out / split
        d.mkdir(exist_ok=True)
        index, offset, blocks = [], 0, []
        for u in utts:
            index.append({"id": u.uid, "offset": offset, "T": int(u.frames.shape[0]), "labels": u.labels})
            offset += u.frames.shape[0]
            blocks.append(u.frames.astype(F32))
        block = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, cb.C), F32)
        (d / "frames.bin").write_bytes(block.tobytes(order="C"))
        _dump_json({"channels": cb.C, "utterances": index}, d / "index.json")
        files += [f"{split}/frames.bin", f"{split}/index.json"]
    manifest = {
        "format": "acdr-synthetic-1",
        "spec": asdict(spec),
        "codebook": {"file": "codebook.bin", "dtype": "float32-le", "order": "row-major",
                     "shape": [cb.G, cb.C]},
        "splits": list(splits),
        "sha256": {f: _sha256(out / f) for f in files},
    }
    _dump_json(manifest, out / "manifest.json")
    return out


class ManifestError(ValueError):
    pass


def load_manifest(data_dir) -> dict:
    data = Path(data_dir)
    manifest = json.loads((data / "manifest.json").read_text())
    for f, digest in manifest["sha256"].items():
        if _sha256(data / f) != digest:
            raise ManifestError(f"checksum mismatch for {f}")
    return manifest


def load_codebook(data_dir, manifest: dict | None = None) -> Codebook:
    data = Path(data_dir)
    manifest = manifest or load_manifest(data)
    desc = manifest["codebook"]
    raw = np.frombuffer((data / desc["file"]).read_bytes(), dtype=F32)
    return Codebook(raw.reshape(desc["shape"]).astype(np.float64))


def load_split(data_dir, split: str) -> list[Utterance]:
    d = Path(data_dir) / split
    if not d.is_dir():
        raise FileNotFoundError(f"no split {split!r} under {data_dir}")
    index = json.loads((d / "index.json").read_text())
    C = index["channels"]
    block = np.frombuffer((d / "frames.bin").read_bytes(), dtype=F32).reshape(-1, C)
    return [
        Utterance(u["id"], block[u["offset"] : u["offset"] + u["T"]].astype(np.float64), list(u["labels"]))
        for u in index["utterances"]
    ]


def load_dataset(data_dir) -> tuple[dict, Codebook, dict[str, list[Utterance]]]:
    manifest = load_manifest(data_dir)
    cb = load_codebook(data_dir, manifest)
    return manifest, cb, {s: load_split(data_dir, s) for s in manifest["splits"]}


def spec_from_manifest(manifest: dict) -> SyntheticDatasetSpec:
    return SyntheticDatasetSpec(**manifest["spec"])
