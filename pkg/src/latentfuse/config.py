"""Dataclass configs for the model and both training stages, plus YAML IO.

Defaults follow the reference hyperparameters (channel widths 48/96/192/384
reduced to 16/32/64/128, composite repeat counts, 4 attention heads); every
field can be overridden from a run config file. CONFIG_SCHEMA versions the
on-disk format.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError

CONFIG_SCHEMA = 1


@dataclass
class EncoderConfig:
    levels: int = 4
    widths: tuple[int, ...] = (48, 96, 192, 384)
    reduced_widths: tuple[int, ...] = (16, 32, 64, 128)
    k_tb: tuple[int, ...] = (2, 2, 4, 8)   # (text-guided attention + base block) repeats
    k_bt: tuple[int, ...] = (1, 1, 2, 2)   # (text-guided attention + bottleneck) repeats
    heads: int = 4
    d_txt: int = 128

    def __post_init__(self):
        self.widths = tuple(self.widths)
        self.reduced_widths = tuple(self.reduced_widths)
        self.k_tb = tuple(self.k_tb)
        self.k_bt = tuple(self.k_bt)
        for name in ("widths", "reduced_widths", "k_tb", "k_bt"):
            seq = getattr(self, name)
            if len(seq) != self.levels:
                raise ConfigError(f"{name} needs {self.levels} entries, got {len(seq)}")
            if any(v < 1 for v in seq):
                raise ConfigError(f"{name} entries must be positive")
        for w in self.widths + self.reduced_widths:
            if w % self.heads:
                raise ConfigError(f"width {w} not divisible by {self.heads} heads")

    @property
    def pad_multiple(self) -> int:
        return 2 ** (self.levels - 1)


@dataclass
class DecoderConfig:
    blocks: tuple[int, ...] = (1, 1, 1, 1)

    def __post_init__(self):
        self.blocks = tuple(self.blocks)


@dataclass
class FusionConfig:
    blocks: tuple[int, ...] = (1, 1, 2, 2)
    heads: int = 4
    prior_rule: str = "add"   # parameter-free elementwise sum of the two stacks

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        if self.prior_rule != "add":
            raise ConfigError(f"unknown prior rule {self.prior_rule!r}")


@dataclass
class LossWeights:
    s1_unified: float = 1.0
    s1_recon: float = 1.0
    s1_text: float = 0.1
    s2_grad: float = 10.0
    s2_perceptual: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise ConfigError(f"loss weight {f.name} must be nonnegative and finite")
            setattr(self, f.name, v)


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def __post_init__(self):
        for name in ("decoder", "fusion"):
            blocks = getattr(self, name).blocks
            if len(blocks) != self.encoder.levels:
                raise ConfigError(f"{name}.blocks needs {self.encoder.levels} entries")
        if any(r % self.fusion.heads for r in self.encoder.reduced_widths):
            raise ConfigError("reduced widths must be divisible by fusion heads")


@dataclass
class RunConfig:
    stage: int = 1
    seed: int = 0
    steps: int = 2000
    batch_size: int = 2
    crop: int = 64
    lr: float = 2e-4
    lr_schedule: str = "cosine"           # "cosine" or "constant"
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    data_root: str = "data"
    out_dir: str = "runs/run"
    stage1_ckpt: str = ""                 # required for stage 2
    kinds: tuple[str, ...] = ("LL", "HZ", "OE", "LC", "SR4")
    catalog_file: str = ""                # optional prompt catalog override
    snapshot_fracs: tuple[float, ...] = (0.1,)   # extra checkpoints at these fractions
    hflip: float = 0.5
    train_decoder_stage2: bool = False
    log_every: int = 1

    def __post_init__(self):
        self.kinds = tuple(self.kinds)
        self.snapshot_fracs = tuple(float(f) for f in self.snapshot_fracs)
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.stage == 2 and not self.stage1_ckpt:
            raise ConfigError("stage 2 requires stage1_ckpt")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.steps < 0 or self.batch_size < 1 or self.crop < 8:
            raise ConfigError("steps/batch_size/crop out of range")


def _build(cls, data: dict):
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{cls.__name__}: unknown field {key!r}")
        sub = {"weights": LossWeights, "model": ModelConfig, "encoder": EncoderConfig,
               "decoder": DecoderConfig, "fusion": FusionConfig}.get(key)
        kwargs[key] = _build(sub, value) if sub and isinstance(value, dict) else value
    return cls(**kwargs)


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a YAML run config; `overrides` (flat RunConfig fields) win over the file."""
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    schema = raw.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"{path}: config schema {schema} unsupported (want {CONFIG_SCHEMA})")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return _build(RunConfig, raw)


def dump_run_config(cfg: RunConfig, path: str | Path) -> None:
    data = {"schema": CONFIG_SCHEMA, **asdict(cfg)}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def config_echo(cfg: RunConfig) -> str:
    return yaml.safe_dump({"schema": CONFIG_SCHEMA, **asdict(cfg)}, sort_keys=False)
