"""Encoder/decoder networks for learned source-channel coding.

The encoder is a stack of strided convolutions with parametric-ReLU
activations whose final layer emits 2k feature values per image; those are
power-normalized and paired into k complex channel symbols.  The decoder
mirrors the encoder with transpose convolutions, PReLU on all but the last
layer, and a sigmoid producing unit-interval pixels.  The bandwidth ratio
k/n is set by the filter count of the last encoder layer.

Networks are fully convolutional: a model trained at one resolution runs on
any input whose sides are divisible by the total stride.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from . import channel as ch
from .data_io import Domain, ImageBatch
from .errors import ContractError
from .rng import stream


@dataclass(frozen=True)
class LayerSpec:
    """One convolutional layer: F x F x K / S."""

    filter_size: int
    filters: int
    stride: int
    transpose: bool = False
    activation: str = "prelu"  # "prelu" | "sigmoid" | "none"

    def __post_init__(self):
        if self.filter_size < 1 or self.filters < 1 or self.stride < 1:
            raise ContractError(f"invalid layer spec {self}")
        if self.activation not in ("prelu", "sigmoid", "none"):
            raise ContractError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Encoder layer list, mirrored decoder, input dims, and power budget."""

    encoder_layers: tuple[LayerSpec, ...]
    decoder_layers: tuple[LayerSpec, ...]
    input_dims: tuple[int, int, int]  # (H, W, C)
    power: float = 1.0

    def __post_init__(self):
        h, w, _ = self.input_dims
        s = self.total_stride
        if h % s or w % s:
            raise ContractError(f"input {h}x{w} not divisible by total stride {s}")
        feat = self.feature_units
        if feat % 2:
            raise ContractError(f"final encoder layer must emit an even unit count, got {feat}")

    @property
    def total_stride(self) -> int:
        s = 1
        for l in self.encoder_layers:
            s *= l.stride
        return s

    @property
    def latent_hw(self) -> tuple[int, int]:
        h, w, _ = self.input_dims
        s = self.total_stride
        return h // s, w // s

    @property
    def feature_units(self) -> int:
        """Output element count of the final encoder layer (= 2k)."""
        lh, lw = self.latent_hw
        return lh * lw * self.encoder_layers[-1].filters

    @property
    def k(self) -> int:
        """Complex channel symbols per image."""
        return self.feature_units // 2

    @property
    def n(self) -> int:
        """Source samples per image: H * W * C."""
        h, w, c = self.input_dims
        return h * w * c

    @property
    def kn_ratio(self) -> float:
        return self.k / self.n

    def with_input_dims(self, dims: tuple[int, int, int]) -> "ArchitectureSpec":
        """Same network deployed at a different resolution."""
        if dims[2] != self.input_dims[2]:
            raise ContractError("channel count is fixed by the trained filters")
        return ArchitectureSpec(self.encoder_layers, self.decoder_layers, dims, self.power)

    def to_dict(self) -> dict:
        def layers(ls):
            return [
                {
                    "filter_size": l.filter_size,
                    "filters": l.filters,
                    "stride": l.stride,
                    "transpose": l.transpose,
                    "activation": l.activation,
                }
                for l in ls
            ]

        return {
            "encoder_layers": layers(self.encoder_layers),
            "decoder_layers": layers(self.decoder_layers),
            "input_dims": list(self.input_dims),
            "power": self.power,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchitectureSpec":
        def layers(ls):
            return tuple(LayerSpec(**l) for l in ls)

        return ArchitectureSpec(
            layers(d["encoder_layers"]),
            layers(d["decoder_layers"]),
            tuple(d["input_dims"]),
            d["power"],
        )


def mirror_decoder(encoder_layers: tuple[LayerSpec, ...], out_channels: int) -> tuple[LayerSpec, ...]:
    """Decoder hyperparameters mirror the encoder's, reversed, ending in sigmoid."""
    in_chain = [out_channels] + [l.filters for l in encoder_layers[:-1]]
    layers = []
    for i, enc in enumerate(reversed(encoder_layers)):
        idx = len(encoder_layers) - 1 - i
        last = i == len(encoder_layers) - 1
        layers.append(
            LayerSpec(
                filter_size=enc.filter_size,
                filters=in_chain[idx],
                stride=enc.stride,
                transpose=True,
                activation="sigmoid" if last else "prelu",
            )
        )
    return tuple(layers)


def default_architecture(input_dims: tuple[int, int, int], target_kn: float,
                         power: float = 1.0) -> ArchitectureSpec:
    """The canonical five-layer architecture at a requested bandwidth ratio.

    Layers 1-2 downsample by stride 2 (x4 total), layers 3-5 keep the
    resolution; the last filter count is chosen so that
    k = (H/4)(W/4) C_out / 2 best matches target_kn * n.
    """
    h, w, c = input_dims
    if not 0.0 < target_kn <= 1.0:
        raise ContractError(f"target k/n must be in (0, 1], got {target_kn}")
    if h % 4 or w % 4:
        raise ContractError(f"input {h}x{w} must be divisible by 4")
    n = h * w * c
    lh, lw = h // 4, w // 4
    c_out = round(2.0 * target_kn * n / (lh * lw))
    if c_out < 1:
        raise ContractError(
            f"ratio {target_kn} unreachable at this resolution (filter count rounds to 0)"
        )
    enc = (
        LayerSpec(5, 16, 2),
        LayerSpec(5, 32, 2),
        LayerSpec(5, 32, 1),
        LayerSpec(5, 32, 1),
        LayerSpec(5, c_out, 1),
    )
    return ArchitectureSpec(enc, mirror_decoder(enc, c), input_dims, power)


def validate_canonical(arch: ArchitectureSpec) -> None:
    """Check the constraints of the five-layer reference design."""
    if len(arch.encoder_layers) != 5:
        raise ContractError("canonical encoder has exactly five convolutional layers")
    if any(l.activation != "prelu" for l in arch.encoder_layers):
        raise ContractError("all encoder layers are PReLU-activated")
    if arch.decoder_layers[-1].activation != "sigmoid":
        raise ContractError("final decoder activation is sigmoid")
    if len(arch.decoder_layers) != len(arch.encoder_layers):
        raise ContractError("decoder mirrors the encoder layer-for-layer")


# ---------------------------------------------------------------------------
# Torch modules


def _conv(in_ch: int, spec: LayerSpec) -> nn.Module:
    pad = spec.filter_size // 2
    if spec.transpose:
        return nn.ConvTranspose2d(
            in_ch, spec.filters, spec.filter_size, spec.stride,
            padding=pad, output_padding=spec.stride - 1,
        )
    return nn.Conv2d(in_ch, spec.filters, spec.filter_size, spec.stride, padding=pad)


def _activation(spec: LayerSpec) -> nn.Module:
    if spec.activation == "prelu":
        return nn.PReLU(num_parameters=spec.filters, init=0.25)
    if spec.activation == "sigmoid":
        return nn.Sigmoid()
    return nn.Identity()


class _Stack(nn.Module):
    def __init__(self, in_ch: int, layers: tuple[LayerSpec, ...]):
        super().__init__()
        mods = []
        for spec in layers:
            mods.append(_conv(in_ch, spec))
            mods.append(_activation(spec))
            in_ch = spec.filters
        self.net = nn.Sequential(*mods)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class Model(nn.Module):
    """Encoder + decoder pair bound to an architecture spec."""

    def __init__(self, arch: ArchitectureSpec):
        super().__init__()
        self.arch = arch
        c = arch.input_dims[2]
        self.encoder = _Stack(c, arch.encoder_layers)
        self.decoder = _Stack(arch.encoder_layers[-1].filters, arch.decoder_layers)

    # -- tensor-space paths (used by training; stay inside autograd) --------

    def encode_tensor(self, x: torch.Tensor, eps: float = 0.0) -> torch.Tensor:
        """(B, C, H, W) unit-interval input -> (B, 2k) power-normalized latent."""
        b = x.shape[0]
        feat = self.encoder(x)
        flat = feat.permute(0, 2, 3, 1).reshape(b, -1)
        return ch.power_normalize_t(flat, self.arch.power, eps=eps)

    def decode_tensor(self, z: torch.Tensor) -> torch.Tensor:
        """(B, 2k) received latent -> (B, C, H, W) unit-interval reconstruction."""
        b = z.shape[0]
        lh, lw = self._latent_hw_for(z.shape[1])
        feat = z.reshape(b, lh, lw, -1).permute(0, 3, 1, 2)
        return self.decoder(feat)

    def _latent_hw_for(self, units: int) -> tuple[int, int]:
        c_last = self.arch.encoder_layers[-1].filters
        if units % c_last:
            raise ContractError(f"latent size {units} does not match {c_last} filters")
        cells = units // c_last
        lh, lw = self.arch.latent_hw
        if lh * lw != cells:
            raise ContractError(
                f"symbol count mismatch: got {units // 2} symbols, architecture expects {self.arch.k}"
            )
        return lh, lw

    # -- batch-space paths (numpy in, numpy out) -----------------------------

    def encode(self, batch: ImageBatch) -> np.ndarray:
        """Unit-interval batch -> (N, k) complex symbols at the power budget."""
        if batch.domain != Domain.UNIT_INTERVAL:
            raise ContractError("encode expects a unit_interval batch")
        h, w, c = self.arch.input_dims
        if batch.data.shape[1:] != (h, w, c):
            raise ContractError(
                f"batch dims {batch.data.shape[1:]} do not match architecture {self.arch.input_dims}"
            )
        dtype = next(self.parameters()).dtype
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(batch.data.transpose(0, 3, 1, 2))).to(dtype)
            z = self.encode_tensor(x)
        return ch.pack_complex(z.numpy().astype(np.float64))

    def decode(self, z_hat: np.ndarray) -> ImageBatch:
        """(N, k) received symbols -> unit-interval reconstruction batch."""
        if z_hat.ndim != 2 or z_hat.shape[1] != self.arch.k:
            raise ContractError(
                f"expected (N, {self.arch.k}) symbols, got {z_hat.shape}"
            )
        dtype = next(self.parameters()).dtype
        with torch.no_grad():
            flat = torch.from_numpy(ch.unpack_complex(z_hat)).to(dtype)
            x = self.decode_tensor(flat)
        data = x.numpy().astype(np.float32).transpose(0, 2, 3, 1)
        return ImageBatch(np.clip(data, 0.0, 1.0), Domain.UNIT_INTERVAL)


def init_params(arch: ArchitectureSpec, seed: int) -> Model:
    """Build a model with fan-in-scaled normal conv weights, zero biases,
    and PReLU slopes at 0.25, reproducible from the seed."""
    model = Model(arch)
    conv_index = 0
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
                # Conv2d weights are (out, in, kh, kw); transpose convs (in, out, kh, kw)
                in_ch = mod.weight.shape[0] if isinstance(mod, nn.ConvTranspose2d) else mod.weight.shape[1]
                fan_in = in_ch * mod.kernel_size[0] * mod.kernel_size[1]
                g = stream(seed, "init", conv_index)
                w = g.normal(0.0, np.sqrt(2.0 / fan_in), size=tuple(mod.weight.shape))
                mod.weight.copy_(torch.from_numpy(w).to(mod.weight.dtype))
                mod.bias.zero_()
                conv_index += 1
    return model
