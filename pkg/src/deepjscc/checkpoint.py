"""Checkpoint archives.

A checkpoint is a single zip file holding:

* ``arch.json`` — the serialized architecture spec,
* ``meta.json`` — training metadata (step count, training SNR, master seed,
  and anything else the writer records),
* ``tensors/<name>.npy`` — named tensors stored as little-endian 32-bit
  reals, one file per tensor.

Round trips are bit-exact: tensors are written as '<f4' and read back
unchanged.  Optimizer state is stored under ``adam_m.*`` / ``adam_v.*``
names alongside the model parameters so training can resume exactly.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, MissingArtifactError
from .model import ArchitectureSpec, Model


def save_checkpoint(path: str | Path, arch: ArchitectureSpec,
                    tensors: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("arch.json", json.dumps(arch.to_dict(), indent=2, sort_keys=True))
        zf.writestr("meta.json", json.dumps(meta, indent=2, sort_keys=True))
        for name in sorted(tensors):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(tensors[name], dtype="<f4"))
            zf.writestr(f"tensors/{name}.npy", buf.getvalue())
    return path


def load_checkpoint(path: str | Path) -> tuple[ArchitectureSpec, dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    tensors: dict[str, np.ndarray] = {}
    try:
        with zipfile.ZipFile(path) as zf:
            arch = ArchitectureSpec.from_dict(json.loads(zf.read("arch.json")))
            meta = json.loads(zf.read("meta.json"))
            for info in zf.infolist():
                if info.filename.startswith("tensors/") and info.filename.endswith(".npy"):
                    name = info.filename[len("tensors/") : -len(".npy")]
                    tensors[name] = np.load(io.BytesIO(zf.read(info)))
    except (KeyError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise FormatError(f"malformed checkpoint {path}: {e}") from e
    return arch, tensors, meta


def model_tensors(model: Model) -> dict[str, np.ndarray]:
    return {name: p.detach().cpu().numpy() for name, p in model.state_dict().items()}


def load_model(path: str | Path, input_dims: tuple[int, int, int] | None = None
               ) -> tuple[Model, dict]:
    """Rebuild a model from a checkpoint, optionally at a new resolution.

    Fully-convolutional weights are resolution-independent, so redeploying at
    different input dims reuses the stored tensors unchanged.
    """
    arch, tensors, meta = load_checkpoint(path)
    if input_dims is not None:
        arch = arch.with_input_dims(input_dims)
    model = Model(arch)
    state = {
        name: torch.from_numpy(tensors[name])
        for name in model.state_dict()
        if name in tensors
    }
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise FormatError(f"checkpoint {path} is missing tensors: {sorted(missing)}")
    model.load_state_dict(state)
    model.eval()
    return model, meta
