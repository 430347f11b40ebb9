"""Training objectives for both stages, as differentiable scalar functions.

Stage 1: restoration L1 + gradient term, cosine alignment between a degraded
image's latents and its clean counterpart's pseudo-task latents, pseudo-task
reconstruction L1, and prompt-classification cross-entropy.

Stage 2: chroma consistency against the visible source, a gradient term against
the elementwise max of the source gradients, and a feature-space term weighted
by each source's information content (measured on a frozen random extractor).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import LossWeights
from .errors import InputError

_SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
_EXTRACTOR_SEED = 2024


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def luma(img: torch.Tensor) -> torch.Tensor:
    """(B,C,H,W) -> (B,1,H,W) BT.601 luma; single-channel input passes through."""
    if img.shape[1] == 1:
        return img
    if img.shape[1] != 3:
        raise InputError(f"expected 1 or 3 channels, got {img.shape[1]}")
    w = torch.tensor([0.299, 0.587, 0.114], dtype=img.dtype, device=img.device)
    return (img * w.view(1, 3, 1, 1)).sum(1, keepdim=True)


def chroma(img: torch.Tensor) -> torch.Tensor:
    """(B,3,H,W) -> (B,2,H,W) BT.601 Cb/Cr planes (neutral = 0.5)."""
    if img.shape[1] != 3:
        raise InputError(f"chroma needs 3 channels, got {img.shape[1]}")
    y = luma(img)
    cb = (img[:, 2:3] - y) * 0.564 + 0.5
    cr = (img[:, 0:1] - y) * 0.713 + 0.5
    return torch.cat([cb, cr], dim=1)


def sobel_magnitude(img: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Per-channel 3x3 Sobel gradient magnitude with reflection padding."""
    c = img.shape[1]
    kx = torch.tensor(_SOBEL_X, dtype=img.dtype, device=img.device)
    kernel = torch.stack([kx, kx.t()]).unsqueeze(1).repeat(c, 1, 1, 1)  # (2c,1,3,3)
    padded = F.pad(img, (1, 1, 1, 1), mode="reflect")
    g = F.conv2d(padded, kernel, groups=c)
    gx, gy = g[:, 0::2], g[:, 1::2]
    return torch.sqrt(gx * gx + gy * gy + eps)


def loss_recon(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, target)
    return (pred - target).abs().mean()


def loss_task(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """L1 plus L1 between Sobel gradient magnitudes."""
    _check_same_shape(pred, target)
    grad_term = (sobel_magnitude(pred) - sobel_magnitude(target)).abs().mean()
    return (pred - target).abs().mean() + grad_term


def loss_unified(z: list[torch.Tensor], z_pd: list[torch.Tensor],
                 diagnostics: dict | None = None, eps: float = 1e-12) -> torch.Tensor:
    """Mean over levels of (1 - cosine similarity) between flattened latents.

    Cosine is taken per sample; a zero-norm pair contributes cosine 0 (loss 1)
    and bumps diagnostics["zero_norm_levels"].
    """
    if len(z) != len(z_pd):
        raise InputError(f"stacks differ in level count: {len(z)} vs {len(z_pd)}")
    terms = []
    for a, b in zip(z, z_pd):
        _check_same_shape(a, b)
        fa = a.flatten(1)
        fb = b.flatten(1)
        na = fa.norm(dim=1)
        nb = fb.norm(dim=1)
        ok = (na * nb) > eps
        cos = torch.zeros_like(na)
        if ok.any():
            cos = torch.where(ok, (fa * fb).sum(1) / (na * nb).clamp_min(eps), cos)
        if diagnostics is not None and (~ok).any():
            diagnostics["zero_norm_levels"] = diagnostics.get("zero_norm_levels", 0) + int((~ok).sum())
        terms.append((1.0 - cos).mean())
    return torch.stack(terms).mean()


def loss_text(probs: torch.Tensor, task_id: int, eps: float = 1e-12) -> torch.Tensor:
    """Negative log-probability of the true task."""
    if probs.dim() != 1:
        raise InputError(f"expected a probability vector, got shape {tuple(probs.shape)}")
    if not 0 <= task_id < probs.shape[0]:
        raise InputError(f"task id {task_id} out of range for {probs.shape[0]} classes")
    check = probs.detach()
    if (check < -1e-6).any() or abs(float(check.sum()) - 1.0) > 1e-4:
        raise InputError("input is not a probability distribution")
    return -torch.log(probs[task_id].clamp_min(eps))


def loss_stage1(l_task: torch.Tensor, l_unified: torch.Tensor, l_recon: torch.Tensor,
                l_text: torch.Tensor, w: LossWeights) -> torch.Tensor:
    return l_task + w.s1_unified * l_unified + w.s1_recon * l_recon + w.s1_text * l_text


def loss_color(fused: torch.Tensor, vi: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between the chroma planes of fused and visible."""
    _check_same_shape(fused, vi)
    return (chroma(fused) - chroma(vi)).abs().mean()


def loss_grad(fused: torch.Tensor, ir: torch.Tensor, vi: torch.Tensor) -> torch.Tensor:
    """Fused luma gradients should match the stronger of the two source gradients."""
    gf = sobel_magnitude(luma(fused))
    gi = sobel_magnitude(luma(ir))
    gv = sobel_magnitude(luma(vi))
    _check_same_shape(gf, gi)
    _check_same_shape(gf, gv)
    return (gf - torch.maximum(gi, gv)).abs().mean()


class FeatureExtractor(nn.Module):
    """Frozen 3-layer conv feature extractor with a fixed random initialization."""

    def __init__(self, seed: int = _EXTRACTOR_SEED, dtype=torch.float32):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1)
        self.conv2 = nn.Conv2d(16, 32, 3, padding=1)
        self.conv3 = nn.Conv2d(32, 64, 3, padding=1)
        gen = torch.Generator().manual_seed(seed)
        for conv in (self.conv1, self.conv2, self.conv3):
            fan_in = conv.in_channels * 9
            conv.weight.data.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
            conv.bias.data.zero_()
        self.to(dtype)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        if x.shape[1] == 1:
            x = x.expand(-1, 3, -1, -1)
        x = F.gelu(self.conv1(x))
        x = F.gelu(self.conv2(x))
        return self.conv3(x)


_extractors: dict[torch.dtype, FeatureExtractor] = {}


def default_extractor(dtype=torch.float32) -> FeatureExtractor:
    if dtype not in _extractors:
        _extractors[dtype] = FeatureExtractor(dtype=dtype)
    return _extractors[dtype]


def information_weights(ir: torch.Tensor, vi: torch.Tensor,
                        extractor: nn.Module, temperature: float = 0.1) -> torch.Tensor:
    """Softmax-normalized feature-gradient information measure of the two sources."""
    with torch.no_grad():
        gs = [sobel_magnitude(extractor(s)).pow(2).mean() for s in (ir, vi)]
    return torch.softmax(torch.stack(gs) / temperature, dim=0)


def loss_perceptual(fused: torch.Tensor, ir: torch.Tensor, vi: torch.Tensor,
                    extractor: nn.Module | None = None,
                    temperature: float = 0.1) -> torch.Tensor:
    """Information-weighted feature MSE between the fused image and each source."""
    if fused.shape[-2:] != ir.shape[-2:] or fused.shape[-2:] != vi.shape[-2:]:
        raise InputError("spatial shapes differ")
    extractor = extractor if extractor is not None else default_extractor(fused.dtype)
    w = information_weights(ir, vi, extractor, temperature)
    ff = extractor(fused)
    mse_ir = (ff - extractor(ir)).pow(2).mean()
    mse_vi = (ff - extractor(vi)).pow(2).mean()
    return w[0] * mse_ir + w[1] * mse_vi


def loss_stage2(l_color: torch.Tensor, l_grad: torch.Tensor, l_per: torch.Tensor,
                w: LossWeights) -> torch.Tensor:
    return l_color + w.s2_grad * l_grad + w.s2_perceptual * l_per


def stage2_terms(fused: torch.Tensor, ir: torch.Tensor, vi: torch.Tensor,
                 w: LossWeights, extractor: nn.Module | None = None):
    """(total, {term: value}) convenience wrapper for the stage-2 objective."""
    lc = loss_color(fused, vi)
    lg = loss_grad(fused, ir, vi)
    lp = loss_perceptual(fused, ir, vi, extractor)
    return loss_stage2(lc, lg, lp, w), {"color": lc, "grad": lg, "perceptual": lp}
