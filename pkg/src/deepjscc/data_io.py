"""Image dataset loading, cropping, and pixel-domain conversion.

Two dataset kinds are supported: the CIFAR-10 binary record format and a
directory of losslessly stored RGB images (optionally random-cropped to
fixed-size patches).  Batches are immutable channel-last arrays carrying an
explicit value-domain flag, either raw pixels in [0, 255] or unit-interval
reals in [0, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, FormatError, MissingArtifactError
from .rng import stream

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_SIDE = 32

_IMAGE_EXTENSIONS = {".png", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"}


class Domain(str, Enum):
    PIXEL_255 = "pixel_255"
    UNIT_INTERVAL = "unit_interval"


@dataclass(frozen=True)
class ImageBatch:
    """N images of H x W x C reals with a declared value domain."""

    data: np.ndarray
    domain: Domain
    source_files: tuple[str, ...] = ()
    transposed: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ContractError(f"batch must be (N, H, W, C), got shape {self.data.shape}")
        lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
        limit = 255.0 if self.domain == Domain.PIXEL_255 else 1.0
        if self.data.size and (lo < 0.0 or hi > limit):
            raise ContractError(
                f"values [{lo}, {hi}] outside the {self.domain.value} range [0, {limit}]"
            )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def elements_per_image(self) -> int:
        """Source dimension n = H * W * C."""
        return self.height * self.width * self.channels

    def subset(self, indices) -> "ImageBatch":
        files = tuple(self.source_files[i] for i in indices) if self.source_files else ()
        flags = tuple(self.transposed[i] for i in indices) if self.transposed else ()
        return ImageBatch(self.data[np.asarray(indices)], self.domain, files, flags)


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset lives and how to slice it."""

    kind: str  # "cifar10" | "image_dir"
    path: str
    split: str = "train"
    patch: tuple[int, int] | None = None
    patches_per_image: int = 1
    seed: int = 0


def load_dataset(spec: DatasetSpec) -> ImageBatch:
    if spec.kind == "cifar10":
        return load_cifar10(spec)
    if spec.kind == "image_dir":
        return load_image_dir(spec)
    raise ContractError(f"unknown dataset kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# CIFAR-10 binary format


def _cifar_files(spec: DatasetSpec) -> list[Path]:
    path = Path(spec.path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise MissingArtifactError(f"CIFAR path does not exist: {path}")
    # canonical binary-version layout, possibly nested one level down
    for base in (path, path / "cifar-10-batches-bin"):
        if spec.split == "train":
            names = [f"data_batch_{i}.bin" for i in range(1, 6)]
        else:
            names = ["test_batch.bin"]
        files = [base / n for n in names if (base / n).is_file()]
        if files:
            return files
    raise MissingArtifactError(f"no CIFAR-10 {spec.split} batches under {path}")


def load_cifar10(spec: DatasetSpec) -> ImageBatch:
    """Parse CIFAR-10 binary records: 1 label byte + 3072 channel-major pixels."""
    arrays = []
    for f in _cifar_files(spec):
        raw = np.fromfile(f, dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
            offset = (raw.size // CIFAR_RECORD_BYTES) * CIFAR_RECORD_BYTES
            raise FormatError(
                f"{f}: truncated record at byte offset {offset} "
                f"(file size {raw.size} is not a multiple of {CIFAR_RECORD_BYTES})"
            )
        records = raw.reshape(-1, CIFAR_RECORD_BYTES)
        pixels = records[:, 1:]  # drop label byte
        images = pixels.reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1)
        arrays.append(images)
    data = np.concatenate(arrays, axis=0).astype(np.float32)
    return ImageBatch(data, Domain.PIXEL_255)


# ---------------------------------------------------------------------------
# Lossless image directories


def _list_image_files(root: Path) -> list[Path]:
    files = [
        root / name
        for name in sorted(os.listdir(root))
        if Path(name).suffix.lower() in _IMAGE_EXTENSIONS
    ]
    if not files:
        raise MissingArtifactError(f"no image files under {root}")
    return files


def _load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise FormatError(f"{path}: expected RGB input, got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8)


def load_image_dir(spec: DatasetSpec) -> ImageBatch:
    """Load a directory of RGB images, optionally as seeded random patches.

    Without a patch size all images must share dimensions; portrait images
    are rotated to the orientation of the first file and flagged in
    ``transposed``.  With a patch size each source image yields
    ``patches_per_image`` uniformly random axis-aligned crops.
    """
    root = Path(spec.path)
    if not root.is_dir():
        raise MissingArtifactError(f"image directory does not exist: {root}")
    files = _list_image_files(root)

    if spec.patch is None:
        target = None
        images, flags, bad = [], [], []
        for f in files:
            arr = _load_rgb(f)
            dims = arr.shape[:2]
            if target is None:
                target = dims
            if dims == target:
                images.append(arr)
                flags.append(False)
            elif dims == target[::-1]:
                images.append(np.rot90(arr))
                flags.append(True)
            else:
                bad.append(f"{f.name}: {dims[1]}x{dims[0]}")
        if bad:
            raise FormatError(
                "mixed image dimensions without patching: " + "; ".join(bad)
            )
        data = np.stack(images).astype(np.float32)
        return ImageBatch(data, Domain.PIXEL_255, tuple(f.name for f in files), tuple(flags))

    ph, pw = spec.patch
    patches, names = [], []
    for i, f in enumerate(files):
        arr = _load_rgb(f)
        h, w = arr.shape[:2]
        if h < ph or w < pw:
            raise ContractError(f"{f.name}: image {w}x{h} smaller than patch {pw}x{ph}")
        for j in range(spec.patches_per_image):
            g = stream(spec.seed, "crop", i, j)
            oy = int(g.integers(0, h - ph + 1))
            ox = int(g.integers(0, w - pw + 1))
            patches.append(arr[oy : oy + ph, ox : ox + pw])
            names.append(f.name)
    data = np.stack(patches).astype(np.float32)
    return ImageBatch(data, Domain.PIXEL_255, tuple(names), (False,) * len(names))


def random_crop(image: np.ndarray, patch: tuple[int, int], g: np.random.Generator) -> np.ndarray:
    """One uniform axis-aligned crop from an (H, W, C) array."""
    ph, pw = patch
    h, w = image.shape[:2]
    oy = int(g.integers(0, h - ph + 1))
    ox = int(g.integers(0, w - pw + 1))
    return image[oy : oy + ph, ox : ox + pw]


# ---------------------------------------------------------------------------
# Domain conversion


def to_unit(batch: ImageBatch) -> ImageBatch:
    """Divide by 255, flipping the domain flag to unit_interval."""
    if batch.domain != Domain.PIXEL_255:
        raise ContractError(f"to_unit requires pixel_255 input, got {batch.domain.value}")
    return replace(batch, data=batch.data / np.float32(255.0), domain=Domain.UNIT_INTERVAL)


def from_unit(batch: ImageBatch) -> ImageBatch:
    """Multiply by 255, flipping the domain flag to pixel_255. No clamping."""
    if batch.domain != Domain.UNIT_INTERVAL:
        raise ContractError(f"from_unit requires unit_interval input, got {batch.domain.value}")
    return replace(batch, data=batch.data * np.float32(255.0), domain=Domain.PIXEL_255)
