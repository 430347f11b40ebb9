"""Synthetic per-modality degradations for building restoration training pairs.

Visible-light kinds: LL (low light), HZ (haze), OE (overexposure).
Infrared kinds: LC (low contrast), SR4/SR8 (low resolution via bicubic
down/up at the original shape). PD is the identity pseudo task and is never
applied here.

Every kind is deterministic given (clean, spec, seed) and keeps pixels in [0,1].
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError
from .imgio import check_image

VISIBLE, INFRARED = 0, 1

# kind -> modality flag it applies to
KIND_MODALITY = {
    "LL": VISIBLE,
    "HZ": VISIBLE,
    "OE": VISIBLE,
    "LC": INFRARED,
    "SR4": INFRARED,
    "SR8": INFRARED,
}

DEFAULT_PARAMS = {
    "LL": {"gamma": (1.8, 3.0), "scale": (0.3, 0.6)},
    "HZ": {"airlight": (0.7, 0.95), "transmission": (0.3, 0.8)},
    "OE": {"gamma": (1.8, 3.0)},
    "LC": {"factor": (0.3, 0.6)},
    "SR4": {},
    "SR8": {},
    "PD": {},
}


@dataclass(frozen=True)
class DegradationSpec:
    """A degradation kind plus its scalar parameter ranges (lo, hi)."""

    kind: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown degradation kind {self.kind!r}; known: {sorted(DEFAULT_PARAMS)}")
        if self.kind == "PD" and self.parameters:
            raise ConfigError("PD carries no parameters")
        merged = dict(DEFAULT_PARAMS[self.kind])
        for key, rng in self.parameters.items():
            if key not in merged:
                raise ConfigError(f"kind {self.kind} has no parameter {key!r}")
            lo, hi = float(rng[0]), float(rng[1])
            if hi < lo:
                raise ConfigError(f"parameter {key}: empty range ({lo}, {hi})")
            merged[key] = (lo, hi)
        object.__setattr__(self, "parameters", merged)

    @property
    def modality(self) -> int:
        if self.kind == "PD":
            raise ConfigError("PD has no fixed modality")
        return KIND_MODALITY[self.kind]


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (hash() is salted, so not used)."""
    h = hashlib.blake2s("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def _uniform(rng: np.random.Generator, lo_hi: tuple[float, float]) -> float:
    lo, hi = lo_hi
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _bicubic_resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    t = torch.from_numpy(img[None].astype(np.float32))
    out = torch.nn.functional.interpolate(
        t, size=(height, width), mode="bicubic", align_corners=False
    )
    return out[0].numpy()


def _smooth_field(rng: np.random.Generator, height: int, width: int, lo: float, hi: float) -> np.ndarray:
    """Spatially smooth map in [lo, hi]: coarse noise, bicubic upsample, min-max rescale."""
    ch, cw = max(2, height // 16), max(2, width // 16)
    coarse = rng.random((1, ch, cw)).astype(np.float32)
    field = _bicubic_resize(coarse, height, width)[0]
    span = field.max() - field.min()
    if span < 1e-8:
        return np.full((height, width), 0.5 * (lo + hi), dtype=np.float32)
    return (lo + (hi - lo) * (field - field.min()) / span).astype(np.float32)


def apply_degradation(clean: np.ndarray, spec: DegradationSpec, seed: int) -> np.ndarray:
    """Produce the degraded counterpart of `clean`, same shape, values in [0,1]."""
    check_image(clean)
    if spec.kind == "PD":
        raise ConfigError("PD is the identity pseudo task; it is not synthesized")
    rng = np.random.default_rng(seed)
    p = spec.parameters
    v = clean.astype(np.float32)
    _, h, w = v.shape

    if spec.kind == "LL":
        gamma = _uniform(rng, p["gamma"])
        scale = _uniform(rng, p["scale"])
        out = np.power(v, gamma) * scale
    elif spec.kind == "HZ":
        airlight = _uniform(rng, p["airlight"])
        tr = _smooth_field(rng, h, w, *p["transmission"])[None]
        out = v * tr + airlight * (1.0 - tr)
    elif spec.kind == "OE":
        gamma = _uniform(rng, p["gamma"])
        out = np.power(v, 1.0 / gamma)
    elif spec.kind == "LC":
        factor = _uniform(rng, p["factor"])
        mean = v.mean()
        out = factor * (v - mean) + mean
    elif spec.kind in ("SR4", "SR8"):
        k = 4 if spec.kind == "SR4" else 8
        lo = _bicubic_resize(v, max(1, h // k), max(1, w // k))
        out = _bicubic_resize(lo, h, w)
    else:  # unreachable; __post_init__ validates kinds
        raise ConfigError(f"unsupported kind {spec.kind!r}")

    return np.clip(out, 0.0, 1.0).astype(np.float32)
