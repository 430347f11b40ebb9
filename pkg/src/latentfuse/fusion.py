"""Latent fusion: a parameter-free additive prior plus a learnable refinement.

The prior rule sums the two latent stacks elementwise. The refinement runs
bidirectional cross-attention between the modalities at every level and feeds
the summed streams through a per-level 1x1 projection whose weights and bias
start at zero, so fusion collapses to the prior rule before any training.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import GDFN, LayerNorm2d
from .config import EncoderConfig, FusionConfig
from .errors import InputError


def _check_stacks(a: list[torch.Tensor], b: list[torch.Tensor]) -> None:
    if len(a) != len(b):
        raise InputError(f"stacks differ in level count: {len(a)} vs {len(b)}")
    for i, (za, zb) in enumerate(zip(a, b)):
        if za.shape != zb.shape:
            raise InputError(f"level {i}: shape {tuple(za.shape)} vs {tuple(zb.shape)}")


def prior_rule(z_vi: list[torch.Tensor], z_ir: list[torch.Tensor]) -> list[torch.Tensor]:
    """Elementwise additive fusion, deterministic and parameter-free."""
    _check_stacks(z_vi, z_ir)
    return [a + b for a, b in zip(z_vi, z_ir)]


class CrossAttention(nn.Module):
    """One direction: queries from `x`, keys/values from `other`, over spatial tokens."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm_q = LayerNorm2d(dim)
        self.norm_kv = LayerNorm2d(dim)
        self.q = nn.Conv2d(dim, dim, 1, bias=False)
        self.k = nn.Conv2d(dim, dim, 1, bias=False)
        self.v = nn.Conv2d(dim, dim, 1, bias=False)
        self.out = nn.Conv2d(dim, dim, 1, bias=False)

    def forward(self, x, other):
        b, c, h, w = x.shape
        dk = c // self.heads

        def tokens(t):
            return t.view(b, self.heads, dk, h * w).transpose(-2, -1)

        q = tokens(self.q(self.norm_q(x)))
        kv = self.norm_kv(other)
        attn = F.scaled_dot_product_attention(q, tokens(self.k(kv)), tokens(self.v(kv)))
        attn = attn.transpose(-2, -1).reshape(b, c, h, w)
        return self.out(attn)


class CrossFusionBlock(nn.Module):
    """Bidirectional exchange: each stream attends to the other, then a gated FFN."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.attn_ab = CrossAttention(dim, heads)
        self.attn_ba = CrossAttention(dim, heads)
        self.norm_a = LayerNorm2d(dim)
        self.norm_b = LayerNorm2d(dim)
        self.ffn_a = GDFN(dim)
        self.ffn_b = GDFN(dim)

    def forward(self, a, b):
        ua, ub = self.attn_ab(a, b), self.attn_ba(b, a)
        a, b = a + ua, b + ub
        a = a + self.ffn_a(self.norm_a(a))
        b = b + self.ffn_b(self.norm_b(b))
        return a, b


class LatentFusion(nn.Module):
    """refine(...) + prior_rule(...) per level (visible stream first)."""

    def __init__(self, enc: EncoderConfig, cfg: FusionConfig | None = None):
        super().__init__()
        cfg = cfg or FusionConfig()
        if len(cfg.blocks) != enc.levels:
            raise InputError(f"fusion blocks needs {enc.levels} entries")
        self.prior_rule_id = cfg.prior_rule
        self.blocks = nn.ModuleList(
            nn.ModuleList(CrossFusionBlock(r, cfg.heads) for _ in range(n))
            for r, n in zip(enc.reduced_widths, cfg.blocks)
        )
        self.zero_proj = nn.ModuleList(nn.Conv2d(r, r, 1) for r in enc.reduced_widths)
        for conv in self.zero_proj:
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)

    def refine(self, z_vi: list[torch.Tensor], z_ir: list[torch.Tensor]) -> list[torch.Tensor]:
        _check_stacks(z_vi, z_ir)
        out = []
        for blocks, proj, a, b in zip(self.blocks, self.zero_proj, z_vi, z_ir):
            for block in blocks:
                a, b = block(a, b)
            out.append(proj(a + b))
        return out

    def forward(self, z_vi: list[torch.Tensor], z_ir: list[torch.Tensor]) -> list[torch.Tensor]:
        refined = self.refine(z_vi, z_ir)
        prior = prior_rule(z_vi, z_ir)
        return [r + p for r, p in zip(refined, prior)]

    fuse_latents = forward
