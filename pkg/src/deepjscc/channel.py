"""Channel-layer transforms: power normalization, AWGN, slow Rayleigh fading.

The numpy functions operate on complex symbol vectors and define the
reference semantics.  The ``*_t`` torch functions implement the same math on
interleaved-real tensors of shape (batch, 2k) so the channel can sit inside
the autodiff graph; element 2i is the real part and 2i+1 the imaginary part
of symbol i, matching ``pack_complex``.  Noise and fading draws always come
from explicit generator streams and are constants with respect to
differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ContractError, DegenerateLatentError


@dataclass(frozen=True)
class ChannelSpec:
    """Channel family plus operating point."""

    kind: str  # "awgn" | "rayleigh_awgn"
    snr_db: float
    power: float = 1.0
    fading_var: float = 1.0  # E[|h|^2] for the Rayleigh gain
    coherence: str = "per_image"

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh_awgn"):
            raise ContractError(f"unknown channel kind {self.kind!r}")
        if self.power <= 0 or self.fading_var <= 0:
            raise ContractError("power and fading variance must be positive")
        if self.coherence != "per_image":
            raise ContractError(f"unsupported coherence {self.coherence!r}")

    @property
    def sigma2(self) -> float:
        return snr_to_sigma2(self.snr_db, self.power)


def snr_to_sigma2(snr_db: float, power: float = 1.0) -> float:
    """Noise power sigma^2 = P / 10^(SNR/10)."""
    return power / 10.0 ** (snr_db / 10.0)


def sigma2_to_snr(sigma2: float, power: float = 1.0) -> float:
    return 10.0 * np.log10(power / sigma2)


# ---------------------------------------------------------------------------
# Real <-> complex symbol packing


def pack_complex(v: np.ndarray) -> np.ndarray:
    """Pair interleaved reals into complex symbols: (v[2i], v[2i+1]) -> v[2i] + j v[2i+1]."""
    v = np.asarray(v)
    if v.shape[-1] % 2 != 0:
        raise ContractError(f"cannot pack odd-length vector of {v.shape[-1]} reals")
    pairs = v.reshape(*v.shape[:-1], -1, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def unpack_complex(z: np.ndarray) -> np.ndarray:
    """Exact inverse of pack_complex."""
    z = np.asarray(z)
    pairs = np.stack([z.real, z.imag], axis=-1)
    return pairs.reshape(*z.shape[:-1], -1)


# ---------------------------------------------------------------------------
# Power normalization


def power_normalize(z_tilde: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Scale a latent to the average-power budget: z = sqrt(kP) z~ / sqrt(z~* z~).

    Scale-invariant in z~ and undefined at the zero vector, which raises.
    Mean symbol power of the result is exactly P in real arithmetic.
    """
    z_tilde = np.asarray(z_tilde, dtype=np.complex128)
    k = z_tilde.shape[-1]
    if k < 1:
        raise ContractError("empty latent")
    norm = np.sqrt(np.sum((z_tilde.conj() * z_tilde).real, axis=-1, keepdims=True))
    if np.any(norm == 0.0):
        raise DegenerateLatentError("degenerate latent: all-zero vector has no direction")
    return np.sqrt(k * power) * z_tilde / norm


def power_normalize_t(x: torch.Tensor, power: float = 1.0, eps: float = 0.0) -> torch.Tensor:
    """Torch power normalization on interleaved-real rows of length 2k.

    ``eps`` guards the division during training; the standalone operation
    (eps=0) raises on an exactly zero latent.
    """
    if x.ndim != 2 or x.shape[1] % 2 != 0:
        raise ContractError(f"expected (batch, 2k) tensor, got {tuple(x.shape)}")
    k = x.shape[1] // 2
    sq = (x * x).sum(dim=1, keepdim=True)
    if eps == 0.0 and bool((sq == 0).any()):
        raise DegenerateLatentError("degenerate latent: all-zero vector has no direction")
    return np.sqrt(k * power) * x / torch.sqrt(sq + eps)


def mean_symbol_power(z: np.ndarray) -> float:
    """(1/k) sum |z_i|^2 over the last axis (averaged over leading axes)."""
    z = np.asarray(z)
    return float(np.mean(np.abs(z) ** 2))


# ---------------------------------------------------------------------------
# Channel transfer functions


def awgn_noise(g: np.random.Generator, k: int, sigma2: float) -> np.ndarray:
    """Circularly symmetric complex noise, variance sigma^2 per symbol.

    Draw order is fixed: k (real, imag) pairs, sigma^2/2 variance each, so
    the numpy and torch paths consume streams identically.
    """
    pairs = g.standard_normal((k, 2)) * np.sqrt(sigma2 / 2.0)
    return pairs[:, 0] + 1j * pairs[:, 1]


def apply_awgn(z: np.ndarray, sigma2: float, g: np.random.Generator) -> np.ndarray:
    """z_hat = z + n with n ~ CN(0, sigma^2 I); identity gradient in z."""
    if sigma2 < 0:
        raise ContractError("sigma2 must be non-negative")
    z = np.asarray(z, dtype=np.complex128)
    if sigma2 == 0.0:
        return z.copy()
    return z + awgn_noise(g, z.shape[-1], sigma2)


def rayleigh_gain(g: np.random.Generator, fading_var: float = 1.0) -> complex:
    """One h ~ CN(0, H_c) draw: E[|h|^2] = H_c, drawn as (real, imag)."""
    pair = g.standard_normal(2) * np.sqrt(fading_var / 2.0)
    return complex(pair[0], pair[1])


def apply_fading(
    z: np.ndarray, fading_var: float, g: np.random.Generator
) -> tuple[complex, np.ndarray]:
    """Slow fading: one gain per call multiplies every symbol of the image."""
    if fading_var <= 0:
        raise ContractError("fading variance must be positive")
    h = rayleigh_gain(g, fading_var)
    return h, np.asarray(z, dtype=np.complex128) * h


def apply_channel(
    z: np.ndarray, spec: ChannelSpec, g: np.random.Generator
) -> tuple[np.ndarray, complex | None]:
    """Full transfer function: AWGN, or fading composed with AWGN (h z + n).

    For the fading channel the gain is drawn first, then the noise vector,
    a fixed order shared with the training path.
    """
    h: complex | None = None
    if spec.kind == "rayleigh_awgn":
        h, z = apply_fading(z, spec.fading_var, g)
    z_hat = apply_awgn(z, spec.sigma2, g)
    return z_hat, h


# ---------------------------------------------------------------------------
# Torch-side channel for the training graph


def draw_channel_tensors(
    spec: ChannelSpec, batch: int, k: int, g: np.random.Generator,
    dtype: torch.dtype = torch.float32,
) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Draw per-image noise (batch, 2k) and, for fading, gains (batch, 2).

    Per image the draw order matches apply_channel: gain pair first (fading
    only), then the k noise pairs.
    """
    sig = np.sqrt(spec.sigma2 / 2.0)
    hvar = np.sqrt(spec.fading_var / 2.0)
    noise = np.empty((batch, 2 * k), dtype=np.float64)
    gains = np.empty((batch, 2), dtype=np.float64) if spec.kind == "rayleigh_awgn" else None
    for i in range(batch):
        if gains is not None:
            gains[i] = g.standard_normal(2) * hvar
        noise[i] = g.standard_normal(2 * k) * sig
    noise_t = torch.from_numpy(noise).to(dtype)
    gains_t = torch.from_numpy(gains).to(dtype) if gains is not None else None
    return noise_t, gains_t


def fade_t(x: torch.Tensor, gains: torch.Tensor) -> torch.Tensor:
    """Complex multiply per image on interleaved-real rows; gradient is h."""
    b, two_k = x.shape
    pairs = x.reshape(b, two_k // 2, 2)
    hr = gains[:, 0:1]
    hi = gains[:, 1:2]
    re = hr * pairs[..., 0].reshape(b, -1) - hi * pairs[..., 1].reshape(b, -1)
    im = hr * pairs[..., 1].reshape(b, -1) + hi * pairs[..., 0].reshape(b, -1)
    return torch.stack([re, im], dim=-1).reshape(b, two_k)


def channel_t(
    x: torch.Tensor, spec: ChannelSpec,
    noise: torch.Tensor, gains: torch.Tensor | None,
) -> torch.Tensor:
    """Apply the channel inside the autodiff graph using pre-drawn tensors."""
    if spec.kind == "rayleigh_awgn":
        if gains is None:
            raise ContractError("fading channel needs gain draws")
        x = fade_t(x, gains)
    return x + noise
