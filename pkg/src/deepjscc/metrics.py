"""Reconstruction quality: MSE, PSNR, SSIM, and repeat-averaged evaluation.

PSNR uses the 8-bit peak (MAX = 255).  SSIM is the standard windowed form:
K1 = 0.01, K2 = 0.03, L = 255, an 11x11 Gaussian window with sigma 1.5,
weighted (population) moments, computed per color channel over the valid
region and averaged.  Metrics run in float64 on pixel-domain arrays;
reconstructions are clamped to [0, 255] but never rounded to integers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from . import channel as ch
from .checkpoint import load_model
from .data_io import Domain, ImageBatch, from_unit, to_unit
from .errors import ContractError
from .model import Model
from .rng import stream

PEAK = 255.0


def _as_pixel_arrays(x: ImageBatch, x_hat: ImageBatch) -> tuple[np.ndarray, np.ndarray]:
    if x.domain != Domain.PIXEL_255 or x_hat.domain != Domain.PIXEL_255:
        raise ContractError("metrics operate in the pixel_255 domain")
    if x.data.shape != x_hat.data.shape:
        raise ContractError(f"shape mismatch {x.data.shape} vs {x_hat.data.shape}")
    return x.data.astype(np.float64), x_hat.data.astype(np.float64)


def mse(x: ImageBatch, x_hat: ImageBatch) -> np.ndarray:
    """Per-image mean squared error over all pixels and channels."""
    a, b = _as_pixel_arrays(x, x_hat)
    return ((a - b) ** 2).mean(axis=(1, 2, 3))


def psnr(x: ImageBatch, x_hat: ImageBatch) -> np.ndarray:
    """Per-image 10 log10(MAX^2 / MSE) in dB; +inf where images are identical."""
    errs = mse(x, x_hat)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(PEAK**2 / errs)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x: ImageBatch, x_hat: ImageBatch, k1: float = 0.01, k2: float = 0.03,
         win_size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Per-image mean structural similarity, channels computed separately
    and averaged."""
    a, b = _as_pixel_arrays(x, x_hat)
    if x.height < win_size or x.width < win_size:
        raise ContractError(
            f"images {x.width}x{x.height} smaller than the {win_size}x{win_size} window"
        )
    w = _gaussian_window(win_size, sigma)[None, :, :]
    c1 = (k1 * PEAK) ** 2
    c2 = (k2 * PEAK) ** 2

    out = np.empty(x.n, dtype=np.float64)
    for i in range(x.n):
        vals = []
        for c in range(x.channels):
            p, q = a[i, :, :, c][None], b[i, :, :, c][None]
            mu_p = fftconvolve(p, w, mode="valid")
            mu_q = fftconvolve(q, w, mode="valid")
            e_pp = fftconvolve(p * p, w, mode="valid")
            e_qq = fftconvolve(q * q, w, mode="valid")
            e_pq = fftconvolve(p * q, w, mode="valid")
            var_p = e_pp - mu_p**2
            var_q = e_qq - mu_q**2
            cov = e_pq - mu_p * mu_q
            s = ((2 * mu_p * mu_q + c1) * (2 * cov + c2)) / (
                (mu_p**2 + mu_q**2 + c1) * (var_p + var_q + c2)
            )
            vals.append(s.mean())
        out[i] = np.mean(vals)
    return out


@dataclass(frozen=True)
class QualityScore:
    """Aggregate quality over a batch (finite-PSNR images only)."""

    psnr_db: float
    ssim: float
    mse: float
    repeats: int
    n_infinite: int = 0

    @property
    def psnr_pooled_db(self) -> float:
        """PSNR of the pooled MSE (auxiliary convention)."""
        if self.mse == 0.0:
            return float("inf")
        return 10.0 * np.log10(PEAK**2 / self.mse)


def aggregate(psnr_values: np.ndarray, ssim_values: np.ndarray,
              mse_values: np.ndarray, repeats: int) -> QualityScore:
    finite = np.isfinite(psnr_values)
    mean_psnr = float(psnr_values[finite].mean()) if finite.any() else float("inf")
    return QualityScore(
        psnr_db=mean_psnr,
        ssim=float(ssim_values.mean()),
        mse=float(mse_values.mean()),
        repeats=repeats,
        n_infinite=int((~finite).sum()),
    )


# ---------------------------------------------------------------------------
# Result records and their CSV schema

RESULT_COLUMNS = [
    "scheme", "dataset", "channel_kind", "snr_train_db", "snr_test_db",
    "kn_ratio", "psnr_db", "ssim", "n_images", "repeats", "seed",
    # auxiliary columns after the core schema
    "psnr_pooled_db", "checkpoint", "detail",
]


@dataclass(frozen=True)
class ResultRecord:
    """One evaluation point, sufficient to re-run that row exactly."""

    scheme: str
    dataset: str
    channel_kind: str
    snr_train_db: float
    snr_test_db: float
    kn_ratio: float
    psnr_db: float
    ssim: float
    n_images: int
    repeats: int
    seed: int
    psnr_pooled_db: float = float("nan")
    checkpoint: str = ""
    detail: str = ""

    def to_row(self) -> list[str]:
        vals = []
        for name in RESULT_COLUMNS:
            v = getattr(self, name)
            if isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        return vals


def write_records(path: str | Path, records: list[ResultRecord], append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as f:
        w = csv.writer(f)
        if fresh:
            w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow(r.to_row())
    return path


def read_records(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
    missing = set(RESULT_COLUMNS[:11]) - set(reader.fieldnames or [])
    if missing:
        raise ContractError(f"result CSV missing columns: {sorted(missing)}")
    return rows


# ---------------------------------------------------------------------------
# Repeat-averaged model evaluation


@dataclass
class EvalResult:
    """Per-image metrics (repeat-averaged) plus the aggregate record."""

    per_image_psnr: np.ndarray
    per_image_ssim: np.ndarray
    record: ResultRecord


def _channel_draws_for(images: range, repeat: int, spec: ch.ChannelSpec, k: int,
                       master_seed: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-(image, repeat) streams: gain pair first (fading only), then noise."""
    sig = np.sqrt(spec.sigma2 / 2.0)
    hvar = np.sqrt(spec.fading_var / 2.0)
    noise = np.empty((len(images), 2 * k))
    gains = np.empty((len(images), 2)) if spec.kind == "rayleigh_awgn" else None
    for row, i in enumerate(images):
        g = stream(master_seed, int(i), int(repeat))
        if gains is not None:
            gains[row] = g.standard_normal(2) * hvar
        noise[row] = g.standard_normal(2 * k) * sig
    return noise, gains


def evaluate_model(model: Model, batch: ImageBatch, spec: ch.ChannelSpec,
                   repeats: int, master_seed: int, scheme: str = "deep_jscc",
                   dataset: str = "", snr_train_db: float = float("nan"),
                   checkpoint_name: str = "", batch_size: int = 256,
                   compute_ssim: bool = True) -> EvalResult:
    """Transmit each image `repeats` times with independent seeded channel
    draws, average PSNR/SSIM per image across repeats, then across images."""
    import torch

    if repeats < 1:
        raise ContractError("repeats must be >= 1")
    if batch.domain != Domain.PIXEL_255:
        raise ContractError("evaluate expects a pixel_255 batch")
    unit = to_unit(batch)
    k = model.arch.k
    n_img = batch.n
    dtype = next(model.parameters()).dtype

    psnr_acc = np.zeros(n_img)
    ssim_acc = np.zeros(n_img)
    mse_acc = np.zeros(n_img)
    for start in range(0, n_img, batch_size):
        stop = min(start + batch_size, n_img)
        sub = ImageBatch(unit.data[start:stop], Domain.UNIT_INTERVAL)
        ref = ImageBatch(batch.data[start:stop], Domain.PIXEL_255)
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(sub.data.transpose(0, 3, 1, 2))).to(dtype)
            latent = model.encode_tensor(x)
            for r in range(repeats):
                noise, gains = _channel_draws_for(range(start, stop), r, spec, k, master_seed)
                z = ch.channel_t(
                    latent, spec,
                    torch.from_numpy(noise).to(dtype),
                    torch.from_numpy(gains).to(dtype) if gains is not None else None,
                )
                xh = model.decode_tensor(z).numpy().astype(np.float64).transpose(0, 2, 3, 1)
                recon = ImageBatch(
                    np.clip(xh * PEAK, 0.0, PEAK), Domain.PIXEL_255
                )
                psnr_acc[start:stop] += psnr(ref, recon)
                mse_acc[start:stop] += mse(ref, recon)
                if compute_ssim:
                    ssim_acc[start:stop] += ssim(ref, recon)

    per_psnr = psnr_acc / repeats
    per_ssim = ssim_acc / repeats
    per_mse = mse_acc / repeats
    score = aggregate(per_psnr, per_ssim, per_mse, repeats)
    record = ResultRecord(
        scheme=scheme,
        dataset=dataset,
        channel_kind=spec.kind,
        snr_train_db=snr_train_db,
        snr_test_db=spec.snr_db,
        kn_ratio=model.arch.kn_ratio,
        psnr_db=score.psnr_db,
        ssim=score.ssim,
        n_images=n_img,
        repeats=repeats,
        seed=master_seed,
        psnr_pooled_db=score.psnr_pooled_db,
        checkpoint=checkpoint_name,
        detail=f"n_infinite={score.n_infinite}",
    )
    return EvalResult(per_psnr, per_ssim, record)


def evaluate(checkpoint_path: str | Path, batch: ImageBatch, spec: ch.ChannelSpec,
             repeats: int, master_seed: int, **kwargs) -> EvalResult:
    """Evaluate a stored checkpoint on a batch (see evaluate_model)."""
    model, meta = load_model(checkpoint_path, input_dims=batch.data.shape[1:])
    return evaluate_model(
        model, batch, spec, repeats, master_seed,
        snr_train_db=float(meta.get("snr_train_db", float("nan"))),
        checkpoint_name=str(checkpoint_path),
        **kwargs,
    )
