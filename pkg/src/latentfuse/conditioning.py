"""Prompt catalog and the learned text-description encoder.

A degradation prompt is canonicalized and looked up in the catalog; each
catalog prompt owns a learned embedding that a linear layer + norm projects
into the shared description dimension. A classification head (norm + zero-init
linear) keeps task descriptions separable via a cross-entropy term in stage 1.
The head's zero init makes the untrained class distribution exactly uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .errors import InputError

D_TXT = 128

DEFAULT_PROMPTS = {
    "PD": ["no degradation", "clean input", "keep the image as is"],
    "LL": ["low light", "brighten the dark image", "enhance the low light photo"],
    "HZ": ["haze", "remove the haze", "dehaze the image"],
    "OE": ["overexposure", "fix the overexposed image", "tone down the exposure"],
    "LC": ["low contrast", "boost the contrast", "increase thermal contrast"],
    "SR4": ["low resolution x4", "upscale four times", "sharpen the 4x downsampled image"],
    "SR8": ["low resolution x8", "upscale eight times", "sharpen the 8x downsampled image"],
}


def canonicalize(prompt: str) -> str:
    return " ".join(prompt.strip().lower().split())


@dataclass
class DescriptionVector:
    values: torch.Tensor  # (d_txt,)
    source_task: int


class PromptCatalog:
    """Ordered task -> prompt-strings table; task id 0 is the identity pseudo task."""

    def __init__(self, tasks: list[tuple[int, list[str]]]):
        ids = [tid for tid, _ in tasks]
        if ids != list(range(len(ids))):
            raise InputError(f"task ids must be contiguous from 0, got {ids}")
        if not ids:
            raise InputError("catalog is empty")
        self.tasks = [(tid, [canonicalize(p) for p in prompts]) for tid, prompts in tasks]
        for tid, prompts in self.tasks:
            if not prompts:
                raise InputError(f"task {tid} has no prompts")
        self._index: dict[str, tuple[int, int]] = {}
        for tid, prompts in self.tasks:
            for p in prompts:
                if p in self._index:
                    raise InputError(f"duplicate prompt {p!r}")
                self._index[p] = (tid, len(self._index))

    @property
    def num_tasks(self) -> int:
        """Real degradation task count T (excludes the pseudo task)."""
        return len(self.tasks) - 1

    @property
    def num_prompts(self) -> int:
        return len(self._index)

    def all_prompts(self) -> list[str]:
        return list(self._index)

    def prompts_for(self, task_id: int) -> list[str]:
        return list(self.tasks[task_id][1])

    def lookup(self, prompt: str) -> tuple[int, int]:
        """(task_id, prompt_index) for a known prompt; error lists the catalog."""
        key = canonicalize(prompt)
        if key not in self._index:
            known = "\n  ".join(self._index)
            raise InputError(f"unknown prompt {prompt!r}; known prompts:\n  {known}")
        return self._index[key]

    @classmethod
    def for_kinds(cls, kinds: list[str]) -> "PromptCatalog":
        """Default catalog covering PD plus the given degradation kinds, in order."""
        tasks = [(0, list(DEFAULT_PROMPTS["PD"]))]
        for kind in kinds:
            if kind == "PD":
                continue
            if kind not in DEFAULT_PROMPTS:
                raise InputError(f"no default prompts for kind {kind!r}")
            tasks.append((len(tasks), list(DEFAULT_PROMPTS[kind])))
        return cls(tasks)

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptCatalog":
        """Parse `task_id<TAB>prompt` lines."""
        by_task: dict[int, list[str]] = {}
        for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                tid_s, prompt = line.split("\t", 1)
                tid = int(tid_s)
            except ValueError as exc:
                raise InputError(f"{path}:{ln}: expected 'task_id<TAB>prompt'") from exc
            by_task.setdefault(tid, []).append(prompt)
        return cls([(tid, by_task[tid]) for tid in sorted(by_task)])

    def to_file(self, path: str | Path) -> None:
        lines = [f"{tid}\t{p}" for tid, prompts in self.tasks for p in prompts]
        Path(path).write_text("\n".join(lines) + "\n")

    def to_meta(self) -> list[list]:
        return [[tid, prompts] for tid, prompts in self.tasks]

    @classmethod
    def from_meta(cls, meta: list) -> "PromptCatalog":
        return cls([(int(tid), list(prompts)) for tid, prompts in meta])


class TextEncoder(nn.Module):
    """Prompt -> description vector, plus the task classification head."""

    def __init__(self, catalog: PromptCatalog, d_txt: int = D_TXT):
        super().__init__()
        self.catalog = catalog
        self.d_txt = d_txt
        self.embedding = nn.Embedding(catalog.num_prompts, d_txt)
        self.proj = nn.Linear(d_txt, d_txt)
        self.norm = nn.LayerNorm(d_txt)
        self.head_norm = nn.LayerNorm(d_txt)
        self.head = nn.Linear(d_txt, catalog.num_tasks + 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def describe(self, prompt: str) -> DescriptionVector:
        task_id, prompt_index = self.catalog.lookup(prompt)
        idx = torch.tensor(prompt_index, device=self.embedding.weight.device)
        values = self.norm(self.proj(self.embedding(idx)))
        return DescriptionVector(values=values, source_task=task_id)

    def encode_text(self, prompt: str) -> DescriptionVector:
        return self.describe(prompt)

    def classify(self, values: torch.Tensor) -> torch.Tensor:
        """Task probability vector (T+1,) for a description vector."""
        if values.shape[-1] != self.d_txt:
            raise InputError(f"description dim {values.shape[-1]} != {self.d_txt}")
        return torch.softmax(self.head(self.head_norm(values)), dim=-1)
