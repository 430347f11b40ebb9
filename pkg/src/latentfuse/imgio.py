"""Image IO and geometry helpers.

Images are carried as float32 numpy arrays, layout (C, H, W), values in [0, 1].
Visible images have 3 channels, infrared images 1 channel. On disk everything
is 8-bit PNG (infrared saved single-channel).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

# BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def check_image(img: np.ndarray, channels: int | None = None) -> np.ndarray:
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise InputError(f"expected (C,H,W) image with C in {{1,3}}, got shape {img.shape}")
    if channels is not None and img.shape[0] != channels:
        raise InputError(f"expected {channels}-channel image, got {img.shape[0]}")
    if not np.isfinite(img).all():
        raise InputError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InputError("image values outside [0,1]")
    return img


def load_image(path: str | Path, channels: int) -> np.ndarray:
    """Load a PNG as float32 (C,H,W) in [0,1]; channels is 1 (gray) or 3 (RGB)."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except InputError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for corrupt files
        raise InputError(f"unreadable image file {path}: {exc}") from exc
    if channels == 1:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Save a (C,H,W) float image in [0,1] as 8-bit PNG (1ch -> gray, 3ch -> RGB)."""
    check_image(img)
    arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        im = Image.fromarray(arr[0], mode="L")
    else:
        im = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    im.save(path)


def luma(img: np.ndarray) -> np.ndarray:
    """(C,H,W) -> (H,W) luma; 1-channel images pass through."""
    if img.shape[0] == 1:
        return img[0]
    r, g, b = LUMA_WEIGHTS
    return r * img[0] + g * img[1] + b * img[2]


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """BT.601 full-range YCbCr, all planes in [0,1] (neutral chroma = 0.5)."""
    check_image(img, channels=3)
    y = luma(img)
    cb = (img[2] - y) * 0.564 + 0.5
    cr = (img[0] - y) * 0.713 + 0.5
    return np.stack([y, cb, cr])


def pad_amounts(height: int, width: int, multiple: int) -> tuple[int, int]:
    """(pad_bottom, pad_right) growing the image to the next multiple."""
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    return pad_h, pad_w


def pad_to_multiple(img: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflection-pad (C,H,W) on bottom/right to a multiple; returns (padded, (ph, pw))."""
    _, h, w = img.shape
    ph, pw = pad_amounts(h, w, multiple)
    if ph == 0 and pw == 0:
        return img, (0, 0)
    if ph > h - 1 or pw > w - 1:
        raise InputError(f"image {h}x{w} too small to reflection-pad to multiple of {multiple}")
    out = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return out, (ph, pw)


def crop_to(img: np.ndarray, height: int, width: int) -> np.ndarray:
    return img[:, :height, :width]
