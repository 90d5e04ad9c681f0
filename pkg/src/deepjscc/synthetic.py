"""Seeded synthetic image corpora for desk-scale runs.

The sandboxed test environment has no dataset downloads, so experiments run
on generated images written in the exact on-disk formats the loaders
consume: CIFAR-10 binary batch files and a directory of lossless PNGs.
Images are low-frequency color fields with soft elliptical occluders and
mild sensor-style noise, giving codec and fallback statistics in the same
regime as natural photographs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .rng import stream


def synth_image(g: np.random.Generator, height: int, width: int,
                n_shapes: int, noise_sigma: float = 6.0) -> np.ndarray:
    """One (H, W, 3) uint8 image drawn from the given generator."""
    gh, gw = max(2, height // 8), max(2, width // 8)
    coarse = g.uniform(0.0, 255.0, (gh, gw, 3)).astype(np.uint8)
    field = Image.fromarray(coarse).resize((width, height), Image.BICUBIC)
    img = np.asarray(field, dtype=np.float64)

    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(n_shapes):
        cy, cx = g.uniform(0, height), g.uniform(0, width)
        ry = g.uniform(height / 12, height / 3)
        rx = g.uniform(width / 12, width / 3)
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        color = g.uniform(0.0, 255.0, 3)
        alpha = g.uniform(0.5, 1.0)
        img[mask] = (1.0 - alpha) * img[mask] + alpha * color

    img += g.normal(0.0, noise_sigma, img.shape)
    return np.clip(img, 0.0, 255.0).astype(np.uint8)


def write_cifar_corpus(out_dir: str | Path, n_train: int, n_test: int,
                       master_seed: int = 0) -> Path:
    """Write CIFAR-10 binary batch files (3073-byte records) of synthetic images.

    Train records go to data_batch_1.bin (then _2.bin etc. beyond 10000
    records per file, matching the canonical layout); test records go to
    test_batch.bin.  Labels are arbitrary bytes; the loader discards them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def records(tag: str, count: int) -> np.ndarray:
        recs = np.empty((count, 3073), dtype=np.uint8)
        for i in range(count):
            g = stream(master_seed, tag, i)
            img = synth_image(g, 32, 32, n_shapes=int(g.integers(2, 5)))
            recs[i, 0] = g.integers(0, 10)
            recs[i, 1:] = img.transpose(2, 0, 1).reshape(-1)  # channel-major R,G,B
        return recs

    train = records("train", n_train)
    for b, start in enumerate(range(0, n_train, 10000), start=1):
        train[start : start + 10000].tofile(out / f"data_batch_{b}.bin")
    records("test", n_test).tofile(out / "test_batch.bin")
    return out


def write_image_dir(out_dir: str | Path, n_images: int, height: int, width: int,
                    master_seed: int = 0, n_shapes: int = 14) -> Path:
    """Write a directory of synthetic lossless PNGs, im_000.png upward."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n_images):
        g = stream(master_seed, "hires", i)
        img = synth_image(g, height, width, n_shapes=n_shapes)
        Image.fromarray(img).save(out / f"im_{i:03d}.png")
    return out
