"""Procedural toy scenes for desk-scale experiments.

Each scene is a smooth background plus a few rectangles/disks. The visible
render colors every object; the infrared render maps each object's heat to
intensity, so the two modalities share structure but not appearance.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .degrade import derive_seed
from .imgio import save_image


def _coords(size: int) -> tuple[np.ndarray, np.ndarray]:
    ax = np.linspace(0.0, 1.0, size, dtype=np.float32)
    return np.meshgrid(ax, ax, indexing="ij")


def toy_scene(seed: int, size: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """Render one scene; returns (visible 3xHxW, infrared 1xHxW) in [0,1]."""
    rng = np.random.default_rng(seed)
    yy, xx = _coords(size)

    # smooth background: oriented ramp + low-frequency sinusoid
    theta = rng.uniform(0, 2 * np.pi)
    ramp = 0.5 + 0.35 * ((xx - 0.5) * np.cos(theta) + (yy - 0.5) * np.sin(theta))
    wave = 0.1 * np.sin(2 * np.pi * (rng.uniform(0.5, 1.5) * xx + rng.uniform(0.5, 1.5) * yy))
    base = ramp + wave

    vi = np.stack([base * rng.uniform(0.6, 1.0) for _ in range(3)])
    ir = (0.25 + 0.4 * base)[None]

    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        half = rng.uniform(0.06, 0.2)
        color = rng.uniform(0.1, 0.9, size=3)
        heat = rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < half) & (np.abs(xx - cx) < half * rng.uniform(0.5, 1.5))
        else:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < half**2
        for c in range(3):
            vi[c][mask] = color[c]
        ir[0][mask] = 0.2 + 0.75 * heat

    return np.clip(vi, 0, 1).astype(np.float32), np.clip(ir, 0, 1).astype(np.float32)


def write_toy_dataset(
    root: str | Path,
    n_clean: int = 8,
    n_pairs: int = 16,
    size: int = 80,
    seed: int = 0,
) -> dict:
    """Materialize the on-disk layout <root>/<modality>/<clean|pairs>/*.png.

    Clean sets are unpaired across modalities (independent scenes); the fusion
    pairs share a scene per stem. Returns a summary of what was written.
    """
    root = Path(root)
    counts = {"visible_clean": 0, "infrared_clean": 0, "pairs": 0}
    for i in range(n_clean):
        vi, _ = toy_scene(derive_seed(seed, "clean-vi", i), size)
        save_image(vi, root / "visible" / "clean" / f"vi_{i:03d}.png")
        counts["visible_clean"] += 1
    for i in range(n_clean):
        _, ir = toy_scene(derive_seed(seed, "clean-ir", i), size)
        save_image(ir, root / "infrared" / "clean" / f"ir_{i:03d}.png")
        counts["infrared_clean"] += 1
    for i in range(n_pairs):
        vi, ir = toy_scene(derive_seed(seed, "pair", i), size)
        stem = f"pair_{i:03d}.png"
        save_image(vi, root / "visible" / "pairs" / stem)
        save_image(ir, root / "infrared" / "pairs" / stem)
        counts["pairs"] += 1
    return counts
