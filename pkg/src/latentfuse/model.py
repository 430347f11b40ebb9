"""Full model assembly and checkpoint persistence."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .conditioning import PromptCatalog, TextEncoder
from .config import DecoderConfig, EncoderConfig, FusionConfig, ModelConfig
from .decoder import Decoder
from .encoder import ConditionalEncoder
from .errors import CheckpointError
from .fusion import LatentFusion


class FusionModel(nn.Module):
    """Text encoder + conditional image encoder + decoder + latent fusion."""

    def __init__(self, cfg: ModelConfig, catalog: PromptCatalog):
        super().__init__()
        self.cfg = cfg
        self.catalog = catalog
        self.text = TextEncoder(catalog, cfg.encoder.d_txt)
        self.encoder = ConditionalEncoder(cfg.encoder)
        self.decoder = Decoder(cfg.encoder, cfg.decoder)
        self.fusion = LatentFusion(cfg.encoder, cfg.fusion)

    def encode(self, x, c, m, **kw):
        return self.encoder(x, c, m, **kw)

    def decode(self, latents):
        return self.decoder(latents)

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "text": list(self.text.parameters()),
            "encoder": list(self.encoder.parameters()),
            "decoder": list(self.decoder.parameters()),
            "fusion": list(self.fusion.parameters()),
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}

    def save(self, path: str | Path, extra_meta: dict | None = None,
             optimizer_arrays: dict[str, np.ndarray] | None = None) -> None:
        arrays = {f"model/{k}": v for k, v in self.state_arrays().items()}
        if optimizer_arrays:
            arrays.update({f"optim/{k}": v for k, v in optimizer_arrays.items()})
        meta = {
            "package_version": __version__,
            "model_config": asdict(self.cfg),
            "prior_rule": self.cfg.fusion.prior_rule,
            "catalog": self.catalog.to_meta(),
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, arrays, meta)


def model_from_checkpoint(path: str | Path) -> tuple[FusionModel, dict, dict]:
    """Rebuild a FusionModel from a checkpoint; returns (model, meta, optim arrays)."""
    arrays, meta = load_checkpoint(path)
    try:
        mc = meta["model_config"]
        cfg = ModelConfig(
            encoder=EncoderConfig(**mc["encoder"]),
            decoder=DecoderConfig(**mc["decoder"]),
            fusion=FusionConfig(**mc["fusion"]),
        )
        catalog = PromptCatalog.from_meta(meta["catalog"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed metadata ({exc})") from exc
    model = FusionModel(cfg, catalog)
    state = {k[len("model/"):]: torch.from_numpy(v.copy())
             for k, v in arrays.items() if k.startswith("model/")}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(f"{path}: state mismatch (missing {missing}, unexpected {unexpected})")
    optim = {k[len("optim/"):]: v for k, v in arrays.items() if k.startswith("optim/")}
    return model, meta, optim
