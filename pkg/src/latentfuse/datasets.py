"""Dataset construction for both training stages.

Stage 1 serves restoration triplets (degraded, clean, modality): every clean
image yields one triplet per applicable degradation kind plus one identity
pseudo triplet (task id 0). Degraded images are synthesized on load with a
seed derived from (dataset seed, stem, kind), so runs are reproducible without
materializing degraded files.

Stage 2 serves (infrared, visible) pairs matched by filename stem.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degrade import INFRARED, VISIBLE, DegradationSpec, apply_degradation, derive_seed
from .errors import InputError
from .imgio import load_image, pad_to_multiple

MODALITY_DIR = {VISIBLE: "visible", INFRARED: "infrared"}
MODALITY_CHANNELS = {VISIBLE: 3, INFRARED: 1}


@dataclass
class RestorationSample:
    degraded: np.ndarray
    clean: np.ndarray
    modality: int
    task_id: int          # 0 is the identity pseudo task
    kind: str = "PD"
    stem: str = ""

    def __post_init__(self):
        if self.degraded.shape != self.clean.shape:
            raise InputError(f"degraded/clean shape mismatch for {self.stem}")
        if self.modality not in (VISIBLE, INFRARED):
            raise InputError(f"invalid modality flag {self.modality}")
        want = MODALITY_CHANNELS[self.modality]
        if self.clean.shape[0] != want:
            raise InputError(f"modality {self.modality} expects {want} channels, got {self.clean.shape[0]}")


@dataclass
class FusionPair:
    infrared: np.ndarray  # 1 x H x W
    visible: np.ndarray   # 3 x H x W
    stem: str = ""
    pad: tuple[int, int] = (0, 0)   # (bottom, right) reflection pad applied

    def __post_init__(self):
        if self.infrared.shape[1:] != self.visible.shape[1:]:
            raise InputError(f"pair {self.stem}: spatial shapes differ")


def make_pseudo_sample(clean: np.ndarray, modality: int, stem: str = "") -> RestorationSample:
    return RestorationSample(degraded=clean, clean=clean, modality=modality,
                             task_id=0, kind="PD", stem=stem)


def assign_task_ids(specs: list[DegradationSpec]) -> dict[str, int]:
    """Contiguous task ids: 0 reserved for PD, real kinds numbered in given order."""
    ids = {"PD": 0}
    for spec in specs:
        if spec.kind not in ids:
            ids[spec.kind] = len(ids)
    return ids


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise InputError(f"no such directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise InputError(f"no PNG images in {directory}")
    return files


def build_stage1_dataset(
    clean_dirs: dict[int, str | Path],
    specs: list[DegradationSpec],
    seed: int,
) -> list[RestorationSample]:
    """Build the stage-1 triplet list from per-modality clean directories.

    clean_dirs maps modality flag -> directory of clean PNGs. Each clean image
    contributes one sample per spec of its modality plus one pseudo sample.
    The returned order is shuffled deterministically by `seed`.
    """
    task_ids = assign_task_ids(specs)
    samples: list[RestorationSample] = []
    for modality in sorted(clean_dirs):
        channels = MODALITY_CHANNELS[modality]
        for path in _list_images(Path(clean_dirs[modality])):
            clean = load_image(path, channels)
            stem = path.stem
            for spec in specs:
                if spec.modality != modality:
                    continue
                degraded = apply_degradation(clean, spec, derive_seed(seed, stem, spec.kind))
                samples.append(RestorationSample(degraded, clean, modality,
                                                 task_ids[spec.kind], spec.kind, stem))
            samples.append(make_pseudo_sample(clean, modality, stem))
    random.Random(seed).shuffle(samples)
    return samples


def build_stage2_dataset(pair_dir: str | Path, pad_multiple: int = 8) -> list[FusionPair]:
    """Load matched ir/vi pairs from <pair_dir>/{infrared,visible}/pairs/*.png.

    Pairs are reflection-padded to `pad_multiple` and the pad amounts recorded.
    """
    pair_dir = Path(pair_dir)
    ir_files = {p.stem: p for p in _list_images(pair_dir / "infrared" / "pairs")}
    vi_files = {p.stem: p for p in _list_images(pair_dir / "visible" / "pairs")}
    missing_vi = sorted(set(ir_files) - set(vi_files))
    missing_ir = sorted(set(vi_files) - set(ir_files))
    if missing_vi or missing_ir:
        raise InputError(
            f"unmatched pair stems: missing visible for {missing_vi}, missing infrared for {missing_ir}"
        )
    pairs = []
    for stem in sorted(ir_files):
        ir = load_image(ir_files[stem], 1)
        vi = load_image(vi_files[stem], 3)
        if ir.shape[1:] != vi.shape[1:]:
            raise InputError(f"pair {stem}: shape mismatch {ir.shape[1:]} vs {vi.shape[1:]}")
        ir, pad = pad_to_multiple(ir, pad_multiple)
        vi, _ = pad_to_multiple(vi, pad_multiple)
        pairs.append(FusionPair(infrared=ir, visible=vi, stem=stem, pad=pad))
    return pairs


def write_stage1_manifest(samples: list[RestorationSample], root: Path, path: Path) -> None:
    """Line-delimited index: stem, task_id, modality, clean relpath, degraded source."""
    lines = []
    for s in samples:
        rel = Path(MODALITY_DIR[s.modality]) / "clean" / f"{s.stem}.png"
        lines.append(f"{s.stem}\t{s.task_id}\t{s.modality}\t{rel.as_posix()}\t{s.kind}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def write_stage2_manifest(pairs: list[FusionPair], path: Path) -> None:
    lines = []
    for p in pairs:
        ir_rel = Path("infrared") / "pairs" / f"{p.stem}.png"
        vi_rel = Path("visible") / "pairs" / f"{p.stem}.png"
        lines.append(f"{p.stem}\t{ir_rel.as_posix()}\t{vi_rel.as_posix()}\t{p.pad[0]}\t{p.pad[1]}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
