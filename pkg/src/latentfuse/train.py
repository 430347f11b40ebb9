"""Two-stage training loops.

Stage 1 learns the unified latent space on restoration triplets: every step
draws one (modality, task) group, encodes the degraded crop with the task
description and the clean crop with the pseudo description, decodes both, and
optimizes restoration + alignment + reconstruction + prompt-classification
terms jointly over text encoder, image encoder, and decoder.

Stage 2 freezes those three groups (decoder optionally trainable) and fits the
fusion refinement on fusion pairs encoded with the pseudo description.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import losses
from .config import ModelConfig, RunConfig, config_echo
from .conditioning import PromptCatalog
from .datasets import (RestorationSample, build_stage1_dataset, build_stage2_dataset)
from .degrade import DegradationSpec, INFRARED
from .errors import ConfigError, TrainingError
from .model import FusionModel, model_from_checkpoint

log = logging.getLogger(__name__)


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def specs_for_kinds(kinds: tuple[str, ...]) -> list[DegradationSpec]:
    seen = []
    for k in kinds:
        if k != "PD" and k not in seen:
            seen.append(k)
    return [DegradationSpec(k) for k in seen]


def catalog_for_run(cfg: RunConfig) -> PromptCatalog:
    if cfg.catalog_file:
        return PromptCatalog.from_file(cfg.catalog_file)
    return PromptCatalog.for_kinds([s.kind for s in specs_for_kinds(cfg.kinds)])


class MetricsLog:
    """Line-delimited (step, term, value) records."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._fh = open(path, "w")

    def write(self, step: int, terms: dict[str, float]) -> None:
        for term, value in terms.items():
            self._fh.write(f"{step}\t{term}\t{float(value):.8g}\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / max(1, total - 1)))


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _crop_coords(rng: np.random.Generator, h: int, w: int, crop: int) -> tuple[int, int]:
    if h < crop or w < crop:
        raise ConfigError(f"crop {crop} exceeds image {h}x{w}")
    return int(rng.integers(0, h - crop + 1)), int(rng.integers(0, w - crop + 1))


def _augment(imgs: list[np.ndarray], rng: np.random.Generator, crop: int, hflip: float) -> list[np.ndarray]:
    """Aligned random crop + horizontal flip across a list of same-size images."""
    _, h, w = imgs[0].shape
    top, left = _crop_coords(rng, h, w, crop)
    out = [im[:, top:top + crop, left:left + crop] for im in imgs]
    if rng.random() < hflip:
        out = [im[:, :, ::-1] for im in out]
    return [np.ascontiguousarray(im) for im in out]


def group_checksums(model: FusionModel, groups: tuple[str, ...]) -> dict[str, str]:
    out = {}
    for name in groups:
        h = hashlib.sha256()
        module = getattr(model, name)
        for key, tensor in sorted(module.state_dict().items()):
            h.update(key.encode())
            h.update(tensor.detach().cpu().numpy().tobytes())
        out[name] = h.hexdigest()
    return out


def _optimizer_arrays(model: FusionModel, optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    name_of = {id(p): n for n, p in model.named_parameters()}
    arrays = {}
    for p, state in optimizer.state.items():
        name = name_of.get(id(p))
        if name is None:
            continue
        for key, val in state.items():
            arr = val.detach().cpu().numpy() if torch.is_tensor(val) else np.asarray(val)
            arrays[f"{name}.{key}"] = arr
    return arrays


def _load_optimizer_arrays(model: FusionModel, optimizer: torch.optim.Optimizer,
                           arrays: dict[str, np.ndarray]) -> None:
    if not arrays:
        return
    params = dict(model.named_parameters())
    grouped: dict[str, dict] = {}
    for key, arr in arrays.items():
        name, field = key.rsplit(".", 1)
        grouped.setdefault(name, {})[field] = arr
    for name, state in grouped.items():
        p = params.get(name)
        if p is None or not p.requires_grad:
            continue
        optimizer.state[p] = {
            k: torch.from_numpy(v.copy()) if v.ndim else torch.tensor(v.item())
            for k, v in state.items()
        }


def _rng_meta(rng: np.random.Generator) -> dict:
    return {"np_state": json.loads(json.dumps(rng.bit_generator.state)),
            "torch_state": torch.get_rng_state().numpy().tolist()}


def _restore_rng(meta: dict, rng: np.random.Generator) -> None:
    rng.bit_generator.state = meta["np_state"]
    torch.set_rng_state(torch.tensor(meta["torch_state"], dtype=torch.uint8))


def _nan_dump(out_dir: Path, step: int, batch: dict[str, np.ndarray]) -> Path:
    path = out_dir / f"nan_dump_step{step}.npz"
    np.savez(path, **batch)
    return path


@dataclass
class TrainState:
    step: int
    model: FusionModel
    optimizer: torch.optim.Optimizer
    best_step: int
    best_loss: float
    metrics: MetricsLog


def _compare_target(pred: torch.Tensor, modality: int) -> torch.Tensor:
    """Decoder output is 3-channel; infrared targets compare against its luma."""
    return losses.luma(pred) if modality == INFRARED else pred


def _to_tensor(batch: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(batch))


def _snapshot_steps(cfg: RunConfig) -> dict[int, Path]:
    out = {}
    for frac in cfg.snapshot_fracs:
        step = max(1, int(round(frac * cfg.steps)))
        if step < cfg.steps:
            out[step] = Path(cfg.out_dir) / f"ckpt_step{step:06d}.npz"
    return out


def stage1_eval(model: FusionModel, samples: list[RestorationSample],
                catalog: PromptCatalog) -> dict[str, float]:
    """Full-image pseudo-reconstruction MAE and mean multi-scale latent cosine."""
    model.eval()
    recon, cosims = [], []
    seen_clean: set[tuple[int, str]] = set()
    with torch.no_grad():
        pd_prompt = catalog.prompts_for(0)[0]
        c_pd = model.text.describe(pd_prompt).values
        for s in samples:
            y = _to_tensor([s.clean])
            z_pd = model.encode(y, c_pd, s.modality)
            if (s.modality, s.stem) not in seen_clean:
                seen_clean.add((s.modality, s.stem))
                pred_pd = _compare_target(model.decode(z_pd), s.modality)
                recon.append(float((pred_pd - y).abs().mean()))
            if s.task_id == 0:
                continue
            c_t = model.text.describe(catalog.prompts_for(s.task_id)[0]).values
            z = model.encode(_to_tensor([s.degraded]), c_t, s.modality)
            cos = 1.0 - float(losses.loss_unified(z, z_pd))
            cosims.append(cos)
    model.train()
    return {"recon_mae": float(np.mean(recon)), "cosine": float(np.mean(cosims))}


def train_stage1(cfg: RunConfig, resume_from: str | None = None) -> Path:
    """Run stage 1 per the config; returns the final checkpoint path."""
    if cfg.stage != 1:
        raise ConfigError("config stage must be 1")
    set_determinism(cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = MetricsLog(out_dir / "metrics_stage1.tsv")
    (out_dir / "run_config.yaml").write_text(config_echo(cfg))

    specs = specs_for_kinds(cfg.kinds)
    catalog = catalog_for_run(cfg)
    clean_dirs = {m: Path(cfg.data_root) / d / "clean"
                  for m, d in ((0, "visible"), (1, "infrared"))
                  if any(s.modality == m for s in specs)}
    samples = build_stage1_dataset(clean_dirs, specs, cfg.seed)
    groups: dict[tuple[int, int], list[RestorationSample]] = {}
    for s in samples:
        if s.task_id > 0:
            groups.setdefault((s.modality, s.task_id), []).append(s)
    group_keys = sorted(groups)
    log.info("stage 1: %d samples, %d (modality, task) groups", len(samples), len(group_keys))

    rng = np.random.default_rng(cfg.seed)
    start_step = 0
    if resume_from:
        model, meta, optim_arrays = model_from_checkpoint(resume_from)
        start_step = int(meta.get("step", 0))
        catalog = model.catalog
    else:
        model = FusionModel(cfg.model, catalog)
    optimizer = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.lr)
    if resume_from:
        _load_optimizer_arrays(model, optimizer, optim_arrays)
        _restore_rng(meta["rng"], rng)

    state = TrainState(start_step, model, optimizer, best_step=start_step,
                       best_loss=float("inf"), metrics=metrics)
    snapshots = _snapshot_steps(cfg)

    def save(path: Path, step: int) -> None:
        evals = stage1_eval(model, samples, catalog)
        metrics.write(step, {f"eval_{k}": v for k, v in evals.items()})
        model.save(path, extra_meta={
            "stage": 1, "step": step, "seed": cfg.seed,
            "kinds": [s.kind for s in specs],
            "best": {"step": state.best_step, "loss": state.best_loss},
            "eval": evals, "rng": _rng_meta(rng),
        }, optimizer_arrays=_optimizer_arrays(model, optimizer))

    for step in range(start_step + 1, cfg.steps + 1):
        if cfg.lr_schedule == "cosine":
            _set_lr(optimizer, cosine_lr(cfg.lr, step - 1, cfg.steps))
        m, t = group_keys[int(rng.integers(len(group_keys)))]
        pool = groups[(m, t)]
        picks = [pool[int(rng.integers(len(pool)))] for _ in range(cfg.batch_size)]
        xs, ys = [], []
        for s in picks:
            deg, clean = _augment([s.degraded, s.clean], rng, cfg.crop, cfg.hflip)
            xs.append(deg)
            ys.append(clean)
        x, y = _to_tensor(xs), _to_tensor(ys)
        prompt = catalog.prompts_for(t)[int(rng.integers(len(catalog.prompts_for(t))))]
        pd_prompts = catalog.prompts_for(0)
        pd_prompt = pd_prompts[int(rng.integers(len(pd_prompts)))]

        optimizer.zero_grad()
        c_t = model.text.describe(prompt).values
        c_pd = model.text.describe(pd_prompt).values
        z = model.encode(x, c_t, m)
        z_pd = model.encode(y, c_pd, m)
        pred = _compare_target(model.decode(z), m)
        pred_pd = _compare_target(model.decode(z_pd), m)

        l_task = losses.loss_task(pred, y)
        l_recon = losses.loss_recon(pred_pd, y)
        l_unified = losses.loss_unified(z, z_pd)
        l_text = 0.5 * (losses.loss_text(model.text.classify(c_t), t)
                        + losses.loss_text(model.text.classify(c_pd), 0))
        total = losses.loss_stage1(l_task, l_unified, l_recon, l_text, cfg.weights)

        if not torch.isfinite(total):
            dump = _nan_dump(out_dir, step, {"x": x.numpy(), "y": y.numpy(),
                                             "modality": np.array(m), "task": np.array(t)})
            raise TrainingError(f"non-finite loss at step {step}; batch dumped to {dump}")
        total.backward()
        optimizer.step()
        state.step = step
        if float(total) < state.best_loss:
            state.best_loss, state.best_step = float(total), step
        if step % cfg.log_every == 0:
            metrics.write(step, {"task": float(l_task), "unified": float(l_unified),
                                 "recon": float(l_recon), "text": float(l_text),
                                 "total": float(total)})
        if step in snapshots:
            save(snapshots[step], step)

    final = out_dir / "stage1.npz"
    save(final, state.step)
    metrics.close()
    return final


FROZEN_STAGE2 = ("text", "encoder")


def train_stage2(cfg: RunConfig, stage1_ckpt: str | Path | None = None,
                 resume_from: str | None = None) -> Path:
    """Run stage 2 from a stage-1 checkpoint; returns the final checkpoint path."""
    if cfg.stage != 2:
        raise ConfigError("config stage must be 2")
    ckpt = Path(stage1_ckpt or cfg.stage1_ckpt)
    set_determinism(cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = MetricsLog(out_dir / "metrics_stage2.tsv")
    (out_dir / "run_config.yaml").write_text(config_echo(cfg))

    rng = np.random.default_rng(cfg.seed)
    if resume_from:
        model, meta, optim_arrays = model_from_checkpoint(resume_from)
        start_step = int(meta.get("step", 0))
    else:
        model, meta, _ = model_from_checkpoint(ckpt)
        start_step = 0
    catalog = model.catalog
    frozen = FROZEN_STAGE2 if cfg.train_decoder_stage2 else FROZEN_STAGE2 + ("decoder",)
    for name in frozen:
        for p in getattr(model, name).parameters():
            p.requires_grad_(False)
    checks_before = group_checksums(model, frozen)

    pairs = build_stage2_dataset(cfg.data_root, pad_multiple=cfg.model.encoder.pad_multiple)
    log.info("stage 2: %d fusion pairs, frozen groups %s", len(pairs), frozen)

    optimizer = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.lr)
    if resume_from:
        _load_optimizer_arrays(model, optimizer, optim_arrays)
        _restore_rng(meta["rng"], rng)

    state = TrainState(start_step, model, optimizer, best_step=start_step,
                       best_loss=float("inf"), metrics=metrics)
    snapshots = _snapshot_steps(cfg)
    pd_prompts = catalog.prompts_for(0)

    def save(path: Path, step: int) -> None:
        model.save(path, extra_meta={
            "stage": 2, "step": step, "seed": cfg.seed,
            "stage1_ckpt": str(ckpt),
            "frozen": list(frozen),
            "frozen_checksums": group_checksums(model, frozen),
            "best": {"step": state.best_step, "loss": state.best_loss},
            "rng": _rng_meta(rng),
        }, optimizer_arrays=_optimizer_arrays(model, optimizer))

    for step in range(start_step + 1, cfg.steps + 1):
        if cfg.lr_schedule == "cosine":
            _set_lr(optimizer, cosine_lr(cfg.lr, step - 1, cfg.steps))
        picks = [pairs[int(rng.integers(len(pairs)))] for _ in range(cfg.batch_size)]
        irs, vis = [], []
        for p in picks:
            ir, vi = _augment([p.infrared, p.visible], rng, cfg.crop, cfg.hflip)
            irs.append(ir)
            vis.append(vi)
        ir, vi = _to_tensor(irs), _to_tensor(vis)
        pd_prompt = pd_prompts[int(rng.integers(len(pd_prompts)))]

        optimizer.zero_grad()
        with torch.no_grad():
            c_pd = model.text.describe(pd_prompt).values
            z_vi = model.encode(vi, c_pd, 0)
            z_ir = model.encode(ir, c_pd, 1)
        fused = model.decode(model.fusion(z_vi, z_ir))
        total, terms = losses.stage2_terms(fused, ir, vi, cfg.weights)

        if not torch.isfinite(total):
            dump = _nan_dump(out_dir, step, {"ir": ir.numpy(), "vi": vi.numpy()})
            raise TrainingError(f"non-finite loss at step {step}; batch dumped to {dump}")
        if step == start_step + 1:
            metrics.write(step - 1, {"total": float(total)})
        total.backward()
        optimizer.step()
        state.step = step
        if float(total) < state.best_loss:
            state.best_loss, state.best_step = float(total), step
        if step % cfg.log_every == 0:
            metrics.write(step, {k: float(v) for k, v in terms.items()} | {"total": float(total)})
        if step in snapshots:
            save(snapshots[step], step)

    checks_after = group_checksums(model, frozen)
    if checks_before != checks_after:
        raise TrainingError(f"frozen parameters changed during stage 2: {frozen}")
    final = out_dir / "stage2.npz"
    save(final, state.step)
    metrics.close()
    return final
