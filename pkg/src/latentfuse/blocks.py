"""Shared conv/attention building blocks.

NAFBlock follows the published nonlinear-activation-free design (layer norm,
pointwise + depthwise conv, split-and-multiply gate, simplified channel
attention, pointwise conv, plus a gated FFN branch); its residual scales start
at zero so every block is an identity map at initialization. The gated
feed-forward (GDFN) is bias-free so a zero input stays zero.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import InputError


class LayerNorm2d(nn.Module):
    """Per-pixel layer norm over the channel dim of (B, C, H, W)."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        x = torch.nn.functional.layer_norm(
            x.permute(0, 2, 3, 1), self.weight.shape, self.weight, self.bias, self.eps
        )
        return x.permute(0, 3, 1, 2)


class SimpleGate(nn.Module):
    def forward(self, x):
        a, b = x.chunk(2, dim=1)
        return a * b


class NAFBlock(nn.Module):
    def __init__(self, c: int, dw_expand: int = 2, ffn_expand: int = 2):
        super().__init__()
        dw = c * dw_expand
        self.norm1 = LayerNorm2d(c)
        self.conv1 = nn.Conv2d(c, dw, 1)
        self.conv2 = nn.Conv2d(dw, dw, 3, padding=1, groups=dw)
        self.gate = SimpleGate()
        self.sca = nn.Sequential(nn.AdaptiveAvgPool2d(1), nn.Conv2d(dw // 2, dw // 2, 1))
        self.conv3 = nn.Conv2d(dw // 2, c, 1)

        ffn = c * ffn_expand
        self.norm2 = LayerNorm2d(c)
        self.conv4 = nn.Conv2d(c, ffn, 1)
        self.conv5 = nn.Conv2d(ffn // 2, c, 1)

        self.beta = nn.Parameter(torch.zeros(1, c, 1, 1))
        self.gamma = nn.Parameter(torch.zeros(1, c, 1, 1))

    def forward(self, inp):
        x = self.norm1(inp)
        x = self.conv2(self.conv1(x))
        x = self.gate(x)
        x = x * self.sca(x)
        x = self.conv3(x)
        y = inp + x * self.beta

        x = self.conv4(self.norm2(y))
        x = self.gate(x)
        x = self.conv5(x)
        return y + x * self.gamma


class GDFN(nn.Module):
    """Gated-deconv feed-forward; bias-free so it maps zero to zero."""

    def __init__(self, dim: int, expansion: float = 2.0):
        super().__init__()
        hidden = int(dim * expansion)
        self.project_in = nn.Conv2d(dim, hidden * 2, 1, bias=False)
        self.dwconv = nn.Conv2d(hidden * 2, hidden * 2, 3, padding=1, groups=hidden * 2, bias=False)
        self.project_out = nn.Conv2d(hidden, dim, 1, bias=False)

    def forward(self, x):
        a, b = self.dwconv(self.project_in(x)).chunk(2, dim=1)
        return self.project_out(torch.nn.functional.gelu(a) * b)


class ModalityBias(nn.Module):
    """Per-channel bias selected by the modality flag; zero at initialization."""

    def __init__(self, channels: int, n_modalities: int = 2):
        super().__init__()
        self.embed = nn.Parameter(torch.zeros(n_modalities, channels))

    def forward(self, x, m: int):
        if not 0 <= m < self.embed.shape[0]:
            raise InputError(f"invalid modality flag {m}")
        return x + self.embed[m].view(1, -1, 1, 1)


class BaseBlock(nn.Module):
    """Modality-aware feature block: modality bias + NAFBlock."""

    def __init__(self, c: int):
        super().__init__()
        self.modality = ModalityBias(c)
        self.naf = NAFBlock(c)

    def forward(self, x, m: int):
        return self.naf(self.modality(x, m))


class BottleNeck(nn.Module):
    """NAFBlock followed by a 1x1 projection to the reduced width."""

    def __init__(self, c: int, out_c: int):
        super().__init__()
        self.naf = NAFBlock(c)
        self.reduce = nn.Conv2d(c, out_c, 1)

    def forward(self, x):
        return self.reduce(self.naf(x))


class Downsample(nn.Module):
    """Strided 2x conv doubling the channel width."""

    def __init__(self, c: int, out_c: int | None = None):
        super().__init__()
        self.conv = nn.Conv2d(c, out_c if out_c is not None else 2 * c, 2, stride=2)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    """1x1 conv + pixel shuffle, 2x spatial."""

    def __init__(self, c: int, out_c: int):
        super().__init__()
        self.conv = nn.Conv2d(c, out_c * 4, 1)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x):
        return self.shuffle(self.conv(x))
