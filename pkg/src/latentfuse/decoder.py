"""Decoder: reconstructs a 3-channel image from the multi-scale latent stack.

The deepest latent is refined, upsampled, and merged (concat + 1x1 conv) with
the next-shallower latent at each level. One decoder serves both modalities
and the fused path; infrared targets are compared against the output's luma.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import NAFBlock, Upsample
from .config import DecoderConfig, EncoderConfig
from .errors import InputError


class Decoder(nn.Module):
    def __init__(self, enc: EncoderConfig, cfg: DecoderConfig | None = None):
        super().__init__()
        cfg = cfg or DecoderConfig()
        if len(cfg.blocks) != enc.levels:
            raise InputError(f"decoder blocks needs {enc.levels} entries")
        r = enc.reduced_widths
        self.levels = enc.levels
        self.widths = r
        self.deep = nn.Sequential(*[NAFBlock(r[-1]) for _ in range(cfg.blocks[-1])])
        self.ups = nn.ModuleList()
        self.merges = nn.ModuleList()
        self.refines = nn.ModuleList()
        for i in range(enc.levels - 2, -1, -1):
            self.ups.append(Upsample(r[i + 1], r[i]))
            self.merges.append(nn.Conv2d(2 * r[i], r[i], 1))
            self.refines.append(nn.Sequential(*[NAFBlock(r[i]) for _ in range(cfg.blocks[i])]))
        self.head = nn.Conv2d(r[0], 3, 3, padding=1)

    def forward(self, latents: list[torch.Tensor]) -> torch.Tensor:
        if len(latents) != self.levels:
            raise InputError(f"expected {self.levels} latents, got {len(latents)}")
        for i, z in enumerate(latents):
            if z.shape[1] != self.widths[i]:
                raise InputError(f"level {i}: width {z.shape[1]} != {self.widths[i]}")
        feat = self.deep(latents[-1])
        for step, i in enumerate(range(self.levels - 2, -1, -1)):
            up = self.ups[step](feat)
            if up.shape[-2:] != latents[i].shape[-2:]:
                raise InputError(
                    f"level {i}: upsampled {tuple(up.shape[-2:])} vs latent {tuple(latents[i].shape[-2:])}"
                )
            feat = self.merges[step](torch.cat([up, latents[i]], dim=1))
            feat = self.refines[step](feat)
        return self.head(feat)
