"""Flat ``section.key = value`` configuration files.

Sections: ``diffusion``, ``model``, ``train``, ``data``. Lines starting with
``#`` are comments. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .constraints import DEFAULT_GAMMA1, DEFAULT_GAMMA2, MEASURES
from .conditions import DEFAULT_TAU
from .errors import ConfigError

MODES = ("baseline", "cdr", "acdr")


@dataclass(frozen=True)
class DiffusionConfig:
    beta_start: float = 1e-4
    beta_end: float = 0.02
    T_noise: int = 100
    ddim_steps: int = 20


@dataclass(frozen=True)
class ModelConfig:
    spatial_channels: int = 32
    width: int = 64
    depth: int = 2
    init_seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "baseline"
    tau: float = DEFAULT_TAU
    gamma1: float = DEFAULT_GAMMA1
    gamma2: float = DEFAULT_GAMMA2
    measure: str = "jmmd"
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 4
    epochs: int = 30
    # empty -> the reference 25/40-of-50 decay points scaled to ``epochs``
    decay_epochs: tuple = ()
    decay_factor: float = 0.2
    seed: int = 0
    diag_utterances: int = 50


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    vocab_size: int = 12
    codebook_seed: int = 0
    codebook_min_dist: float = 0.5
    n_train: int = 400
    n_dev: int = 50
    n_test: int = 50
    len_min: int = 3
    len_max: int = 6
    dur_min: int = 4
    dur_max: int = 8
    noise_sigma: float = 0.5
    smooth_width: int = 3
    channels: int = 8
    seed: int = 0


@dataclass(frozen=True)
class Config:
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SyntheticDatasetSpec = field(default_factory=SyntheticDatasetSpec)


SECTIONS = {"diffusion": DiffusionConfig, "model": ModelConfig, "train": TrainConfig,
            "data": SyntheticDatasetSpec}


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def validate(cfg: Config) -> Config:
    d, m, t, s = cfg.diffusion, cfg.model, cfg.train, cfg.data

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    need(0 < d.beta_start <= d.beta_end < 1, "diffusion.beta_start/beta_end",
         "need 0 < beta_start <= beta_end < 1")
    need(d.T_noise >= 1, "diffusion.T_noise", "must be >= 1")
    need(1 <= d.ddim_steps <= d.T_noise, "diffusion.ddim_steps", "must lie in [1, T_noise]")
    need(m.spatial_channels >= 1, "model.spatial_channels", "must be >= 1")
    need(m.width >= 1, "model.width", "must be >= 1")
    need(m.depth >= 1, "model.depth", "must be >= 1")
    need(t.mode in MODES, "train.mode", f"must be one of {MODES}")
    need(0.0 <= t.tau <= 1.0, "train.tau", f"must lie in [0, 1], got {t.tau}")
    need(t.gamma1 >= 0, "train.gamma1", "must be >= 0")
    need(t.gamma2 >= 0, "train.gamma2", "must be >= 0")
    need(t.measure in MEASURES, "train.measure", f"must be one of {MEASURES}")
    need(t.lr >= 0, "train.lr", "must be >= 0")
    need(t.weight_decay >= 0, "train.weight_decay", "must be >= 0")
    need(t.batch_size >= 1, "train.batch_size", "must be >= 1")
    need(t.epochs >= 1, "train.epochs", "must be >= 1")
    need(0 < t.decay_factor <= 1, "train.decay_factor", "must lie in (0, 1]")
    need(s.vocab_size >= 2, "data.vocab_size", "must be >= 2")
    need(1 <= s.len_min <= s.len_max, "data.len_min/len_max", "need 1 <= len_min <= len_max")
    need(1 <= s.dur_min <= s.dur_max, "data.dur_min/dur_max", "need 1 <= dur_min <= dur_max")
    need(s.n_train >= 1 and s.n_dev >= 1 and s.n_test >= 1, "data.n_*", "every split needs >= 1 utterance")
    need(s.noise_sigma >= 0, "data.noise_sigma", "must be >= 0")
    need(s.smooth_width >= 1 and s.smooth_width % 2 == 1, "data.smooth_width", "must be odd and >= 1")
    need(s.channels >= 1, "data.channels", "must be >= 1")
    return cfg


def parse_config(text: str) -> Config:
    values: dict[str, dict] = {name: {} for name in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section in key {key!r}")
        defaults = SECTIONS[section]()
        if name not in {f.name for f in fields(defaults)}:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[section][name] = _parse_value(raw, getattr(defaults, name), key)
    cfg = Config(**{name: cls(**values[name]) for name, cls in SECTIONS.items()})
    return validate(cfg)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return validate(Config())
    return parse_config(Path(path).read_text())


def dump_config(cfg: Config) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: Config, **sections) -> Config:
    """``with_overrides(cfg, train={"mode": "acdr"})`` returns a validated copy."""
    parts = {name: getattr(cfg, name) for name in SECTIONS}
    for name, changes in sections.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section {name!r}")
        try:
            parts[name] = replace(parts[name], **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    return validate(Config(**parts))
