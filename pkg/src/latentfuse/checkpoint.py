"""Versioned key->array checkpoint container.

The file is a plain uncompressed zip of .npy entries (np.load-compatible) plus
a __meta__.json entry. Entries are written in sorted order with a fixed
timestamp, so saving identical payloads yields byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
_META_NAME = "__meta__.json"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    meta = {"format_version": FORMAT_VERSION, **meta}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo(_META_NAME, date_time=_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True, separators=(",", ":")))
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[key]))
            zf.writestr(zipfile.ZipInfo(f"{key}.npy", date_time=_EPOCH), buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no such checkpoint: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            if _META_NAME not in names:
                raise CheckpointError(f"{path}: missing {_META_NAME}")
            meta = json.loads(zf.read(_META_NAME))
            version = meta.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: format version {version} unsupported")
            arrays = {}
            for name in names:
                if name == _META_NAME:
                    continue
                if not name.endswith(".npy"):
                    raise CheckpointError(f"{path}: unexpected entry {name!r}")
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)))
    except (zipfile.BadZipFile, json.JSONDecodeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return arrays, meta
