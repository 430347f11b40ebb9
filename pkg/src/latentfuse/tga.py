"""Text-guided attention: a channel-gated text vector queries global image features.

The description vector is projected to the block width and reweighted by a
sigmoid channel gate; each head uses it as a single query over the flattened
spatial features. The attended vector is projected (zero-initialized), broadcast
over space, refined by a gated feed-forward block, and added residually, so the
block is an exact identity at initialization.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import GDFN, LayerNorm2d
from .errors import InputError


class TGABlock(nn.Module):
    def __init__(self, dim: int, d_txt: int, heads: int):
        super().__init__()
        if dim % heads:
            raise InputError(f"dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.norm = LayerNorm2d(dim)
        self.txt_proj = nn.Linear(d_txt, dim)
        self.txt_gate = nn.Linear(d_txt, dim)
        self.k_proj = nn.Conv2d(dim, dim, 1, bias=False)
        self.v_proj = nn.Conv2d(dim, dim, 1, bias=False)
        self.out_proj = nn.Linear(dim, dim)
        nn.init.zeros_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)
        self.ffn = GDFN(dim)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        b, ch, h, w = x.shape
        if ch != self.dim:
            raise InputError(f"feature width {ch} != block width {self.dim}")
        if c.dim() == 1:
            c = c.expand(b, -1)
        dk = ch // self.heads

        xn = self.norm(x)
        t = self.txt_proj(c) * torch.sigmoid(self.txt_gate(c))      # channel-weighted text
        q = t.view(b, self.heads, 1, dk)
        k = self.k_proj(xn).view(b, self.heads, dk, h * w).transpose(-2, -1)
        v = self.v_proj(xn).view(b, self.heads, dk, h * w).transpose(-2, -1)
        ctx = F.scaled_dot_product_attention(q, k, v)               # (b, heads, 1, dk)
        u = self.out_proj(ctx.reshape(b, ch))
        return x + self.ffn(u.view(b, ch, 1, 1).expand(b, ch, h, w))
