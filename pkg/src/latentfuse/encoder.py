"""Conditional multi-scale image encoder producing the unified latent stack.

Each level runs (text-guided attention + base block) composites, then branches
three ways: a strided downsample feeding the next level, a (text-guided
attention + bottleneck) chain giving degradation-specific features, and a 1x1
projection giving task-relevant base features. The level's latent is the
difference of the last two branches, so scene content reaches the decoder
without an input-to-output skip.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import BaseBlock, BottleNeck, Downsample
from .config import EncoderConfig
from .errors import InputError
from .tga import TGABlock


@dataclass
class EncoderLayerTrace:
    base: torch.Tensor        # task-relevant features (reduced width)
    degradation: torch.Tensor  # degradation-specific features (reduced width)
    latent: torch.Tensor      # base - degradation
    down: torch.Tensor | None  # features handed to the next level


class TGABase(nn.Module):
    def __init__(self, dim: int, d_txt: int, heads: int):
        super().__init__()
        self.tga = TGABlock(dim, d_txt, heads)
        self.base = BaseBlock(dim)

    def forward(self, x, c, m):
        return self.base(self.tga(x, c), m)


class TGABottleneck(nn.Module):
    def __init__(self, dim: int, out_dim: int, d_txt: int, heads: int):
        super().__init__()
        self.tga = TGABlock(dim, d_txt, heads)
        self.bottleneck = BottleNeck(dim, out_dim)

    def forward(self, x, c):
        return self.bottleneck(self.tga(x, c))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig, level: int):
        super().__init__()
        width = cfg.widths[level]
        reduced = cfg.reduced_widths[level]
        self.tb = nn.ModuleList(
            TGABase(width, cfg.d_txt, cfg.heads) for _ in range(cfg.k_tb[level])
        )
        # first bottleneck composite reduces the width, the rest stay reduced
        dims = [width] + [reduced] * (cfg.k_bt[level] - 1)
        self.bt = nn.ModuleList(
            TGABottleneck(d, reduced, cfg.d_txt, cfg.heads) for d in dims
        )
        self.to_base = nn.Conv2d(width, reduced, 1)
        self.down = (
            Downsample(width, cfg.widths[level + 1]) if level + 1 < cfg.levels else None
        )

    def forward(self, feat, c, m) -> EncoderLayerTrace:
        for block in self.tb:
            feat = block(feat, c, m)
        deg = feat
        for block in self.bt:
            deg = block(deg, c)
        base = self.to_base(feat)
        return EncoderLayerTrace(
            base=base,
            degradation=deg,
            latent=base - deg,
            down=self.down(feat) if self.down is not None else None,
        )


class ConditionalEncoder(nn.Module):
    """encode(x, c, m) -> list of per-level latents (the unified representation)."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.stem_vi = nn.Conv2d(3, cfg.widths[0], 3, padding=1)
        self.stem_ir = nn.Conv2d(1, cfg.widths[0], 3, padding=1)
        self.layers = nn.ModuleList(EncoderLayer(cfg, i) for i in range(cfg.levels))

    def forward(self, x: torch.Tensor, c: torch.Tensor, m: int,
                return_trace: bool = False):
        if x.dim() != 4:
            raise InputError(f"expected (B,C,H,W) input, got {tuple(x.shape)}")
        _, ch, h, w = x.shape
        mult = self.cfg.pad_multiple
        if h % mult or w % mult:
            raise InputError(f"spatial size {h}x{w} not divisible by {mult}")
        if not torch.isfinite(c).all():
            raise InputError("description vector contains non-finite values")
        if m == 0:
            if ch != 3:
                raise InputError(f"visible input needs 3 channels, got {ch}")
            feat = self.stem_vi(x)
        elif m == 1:
            if ch != 1:
                raise InputError(f"infrared input needs 1 channel, got {ch}")
            feat = self.stem_ir(x)
        else:
            raise InputError(f"invalid modality flag {m}")

        latents, traces = [], []
        for layer in self.layers:
            trace = layer(feat, c, m)
            latents.append(trace.latent)
            traces.append(trace)
            feat = trace.down
        return (latents, traces) if return_trace else latents


def validate_stack(latents: list[torch.Tensor], cfg: EncoderConfig) -> None:
    if len(latents) != cfg.levels:
        raise InputError(f"latent stack has {len(latents)} levels, want {cfg.levels}")
    for i, z in enumerate(latents):
        if z.shape[1] != cfg.reduced_widths[i]:
            raise InputError(
                f"level {i}: width {z.shape[1]} != {cfg.reduced_widths[i]}"
            )
        if not torch.isfinite(z).all():
            raise InputError(f"level {i}: non-finite latent values")
