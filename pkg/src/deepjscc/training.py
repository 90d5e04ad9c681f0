"""End-to-end training of the encoder/decoder pair through the channel.

The objective is the average per-image mean squared error between the
unit-interval input and its reconstruction after the noisy channel.  Every
stochastic choice (batch sampling, crops, channel draws) is keyed by
(master_seed, purpose, step), so a run is a pure function of its config and
training can resume from any checkpoint with an identical continuation.

Adam state (first/second moments) is kept explicitly per parameter and
serialized into checkpoints, which keeps resume bit-exact; hyperparameters
beyond the learning rate are the framework-standard beta1=0.9, beta2=0.999,
eps=1e-8.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import channel as ch
from .checkpoint import load_checkpoint, model_tensors, save_checkpoint
from .data_io import DatasetSpec, Domain, ImageBatch, load_dataset, to_unit
from .errors import ConfigError, ContractError, TrainingDivergedError
from .metrics import evaluate_model
from .model import ArchitectureSpec, Model, init_params
from .rng import stream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    dataset: DatasetSpec
    arch: ArchitectureSpec
    channel: ch.ChannelSpec  # snr_db here is SNR_train
    batch_size: int = 64
    lr_initial: float = 1e-3
    lr_after_drop: float = 1e-4
    drop_step: int = 500_000
    max_steps: int = 50_000
    eval_every: int = 5_000
    master_seed: int = 0
    checkpoint_dir: str = "runs/default"
    val_fraction: float = 0.05
    val_count: int | None = None
    val_repeats: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_initial <= 0 or self.lr_after_drop <= 0:
            raise ConfigError("learning rates must be positive")
        if self.drop_step > self.max_steps and self.max_steps > 0:
            # the schedule allows this (drop simply never fires); only flag nonsense
            pass
        if self.max_steps < 0 or self.eval_every < 1:
            raise ConfigError("max_steps must be >= 0 and eval_every >= 1")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Learning rate used for update number `step` (1-based)."""
    return cfg.lr_initial if step <= cfg.drop_step else cfg.lr_after_drop


@dataclass
class TrainState:
    model: Model
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    step: int = 0

    @staticmethod
    def fresh(model: Model) -> "TrainState":
        zeros = {
            name: torch.zeros_like(p) for name, p in model.named_parameters()
        }
        return TrainState(
            model,
            {n: z.clone() for n, z in zeros.items()},
            {n: z.clone() for n, z in zeros.items()},
        )


def mse_loss(x: ImageBatch, x_hat: ImageBatch) -> float:
    """Average over images of the per-image mean squared error."""
    if x.domain != Domain.UNIT_INTERVAL or x_hat.domain != Domain.UNIT_INTERVAL:
        raise ContractError("mse_loss operates on unit_interval batches")
    if x.data.shape != x_hat.data.shape:
        raise ContractError(f"shape mismatch {x.data.shape} vs {x_hat.data.shape}")
    diff = x.data.astype(np.float64) - x_hat.data.astype(np.float64)
    return float((diff**2).mean())


def forward_loss(model: Model, x: torch.Tensor, spec: ch.ChannelSpec,
                 noise: torch.Tensor, gains: torch.Tensor | None,
                 eps: float = 1e-12) -> torch.Tensor:
    """encode -> channel -> decode -> mean squared error, inside autograd."""
    latent = model.encode_tensor(x, eps=eps)
    received = ch.channel_t(latent, spec, noise, gains)
    recon = model.decode_tensor(received)
    return ((x - recon) ** 2).mean()


def _check_finite(state: TrainState, loss: torch.Tensor) -> None:
    if not torch.isfinite(loss):
        raise TrainingDivergedError(state.step + 1, "loss")
    for name, p in state.model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise TrainingDivergedError(state.step + 1, name)


def train_step(state: TrainState, batch: np.ndarray, spec: ch.ChannelSpec,
               g: np.random.Generator, lr: float) -> float:
    """One forward/backward/Adam update on a (B, H, W, C) unit-domain array.

    Fresh per-image channel draws come from `g`; the update increments
    state.step.  Raises TrainingDivergedError on any non-finite value.
    """
    model = state.model
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2))).to(dtype)
    noise, gains = ch.draw_channel_tensors(spec, x.shape[0], model.arch.k, g, dtype)

    model.zero_grad(set_to_none=True)
    loss = forward_loss(model, x, spec, noise, gains)
    loss.backward()
    _check_finite(state, loss)

    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    with torch.no_grad():
        for name, p in model.named_parameters():
            grad = p.grad
            m = state.m[name]
            v = state.v[name]
            m.mul_(ADAM_BETA1).add_(grad, alpha=1.0 - ADAM_BETA1)
            v.mul_(ADAM_BETA2).addcmul_(grad, grad, value=1.0 - ADAM_BETA2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(ADAM_EPS), value=-lr)
    state.step = t
    return float(loss.detach())


# ---------------------------------------------------------------------------
# The full fit loop


def _split_train_val(n: int, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    n_val = cfg.val_count if cfg.val_count is not None else int(round(n * cfg.val_fraction))
    if n_val >= n:
        raise ConfigError(f"validation size {n_val} leaves no training data (N={n})")
    perm = stream(cfg.master_seed, "val_split").permutation(n)
    return perm[n_val:], perm[:n_val]


def _sample_batch(data: np.ndarray, train_idx: np.ndarray, cfg: TrainConfig,
                  step: int) -> np.ndarray:
    g = stream(cfg.master_seed, "batch", step)
    picks = train_idx[g.integers(0, len(train_idx), size=cfg.batch_size)]
    return data[picks]


def _val_psnr(state: TrainState, val_batch: ImageBatch, cfg: TrainConfig) -> float:
    res = evaluate_model(
        state.model, val_batch, cfg.channel, repeats=cfg.val_repeats,
        master_seed=cfg.master_seed, compute_ssim=False,
    )
    return res.record.psnr_db


def _write_state(cfg: TrainConfig, state: TrainState, tag: str, val_psnr: float) -> Path:
    tensors = model_tensors(state.model)
    tensors.update({f"adam_m.{n}": t.numpy() for n, t in state.m.items()})
    tensors.update({f"adam_v.{n}": t.numpy() for n, t in state.v.items()})
    meta = {
        "step": state.step,
        "snr_train_db": cfg.channel.snr_db,
        "channel_kind": cfg.channel.kind,
        "master_seed": cfg.master_seed,
        "val_psnr_db": val_psnr,
        "rng": {"scheme": "counter_streams", "cursor_step": state.step},
    }
    return save_checkpoint(Path(cfg.checkpoint_dir) / f"{tag}.ckpt",
                           state.model.arch, tensors, meta)


def load_state(path: str | Path) -> tuple[TrainState, dict]:
    arch, tensors, meta = load_checkpoint(path)
    model = Model(arch)
    model.load_state_dict(
        {n: torch.from_numpy(tensors[n]) for n in model.state_dict()}
    )
    state = TrainState.fresh(model)
    for name in state.m:
        state.m[name] = torch.from_numpy(tensors[f"adam_m.{name}"]).clone()
        state.v[name] = torch.from_numpy(tensors[f"adam_v.{name}"]).clone()
    state.step = int(meta["step"])
    return state, meta


@dataclass
class FitResult:
    final_checkpoint: Path
    best_checkpoint: Path
    log_path: Path
    best_val_psnr: float
    val_trace: list[tuple[int, float]] = field(default_factory=list)


def fit(cfg: TrainConfig, resume_from: str | Path | None = None) -> FitResult:
    """Run training to max_steps, checkpointing at every evaluation point.

    Writes step-tagged checkpoints plus best.ckpt (highest validation PSNR)
    and a CSV log (step, loss, lr, val_psnr, wall_time_s).  With
    resume_from, continues the loaded state; the continuation is identical
    to an uninterrupted run because all randomness is keyed by step.
    """
    out = Path(cfg.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)

    full = to_unit(load_dataset(cfg.dataset))
    train_idx, val_idx = _split_train_val(full.n, cfg)
    val_batch = ImageBatch(
        (full.data[val_idx] * 255.0).astype(np.float32), Domain.PIXEL_255
    )

    if resume_from is not None:
        state, _ = load_state(resume_from)
    else:
        state = TrainState.fresh(init_params(cfg.arch, cfg.master_seed))

    log_path = out / "log.csv"
    log_mode = "a" if resume_from is not None and log_path.exists() else "w"
    t0 = time.time()
    best_path = out / "best.ckpt"
    best_psnr = -math.inf
    if resume_from is not None and best_path.exists():
        _, _, best_meta = load_checkpoint(best_path)
        best_psnr = float(best_meta.get("val_psnr_db", -math.inf))
    val_trace: list[tuple[int, float]] = []

    with open(log_path, log_mode, newline="") as logf:
        log = csv.writer(logf)
        if log_mode == "w":
            log.writerow(["step", "loss", "lr", "val_psnr", "wall_time_s"])

        def eval_and_checkpoint() -> None:
            nonlocal best_psnr
            vp = _val_psnr(state, val_batch, cfg)
            val_trace.append((state.step, vp))
            path = _write_state(cfg, state, f"step_{state.step:08d}", vp)
            if vp > best_psnr:
                best_psnr = vp
                arch, tensors, meta = load_checkpoint(path)
                save_checkpoint(best_path, arch, tensors, meta)
            log.writerow([state.step, "", lr_at(max(state.step, 1), cfg), repr(vp),
                          f"{time.time() - t0:.3f}"])

        if state.step == 0:
            eval_and_checkpoint()

        while state.step < cfg.max_steps:
            step = state.step + 1
            batch = _sample_batch(full.data, train_idx, cfg, step)
            g = stream(cfg.master_seed, "chan", step)
            loss = train_step(state, batch, cfg.channel, g, lr_at(step, cfg))
            log.writerow([state.step, repr(loss), lr_at(step, cfg), "",
                          f"{time.time() - t0:.3f}"])
            if state.step % cfg.eval_every == 0 or state.step == cfg.max_steps:
                eval_and_checkpoint()

    final = out / f"step_{state.step:08d}.ckpt"
    if not final.exists():
        _write_state(cfg, state, f"step_{state.step:08d}", float("nan"))
    if not best_path.exists():  # max_steps=0 edge: init checkpoint is the best
        arch, tensors, meta = load_checkpoint(final)
        save_checkpoint(best_path, arch, tensors, meta)
    return FitResult(final, best_path, log_path, best_psnr, val_trace)


# ---------------------------------------------------------------------------
# Gradient verification


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tolerance: float
    channel_kind: str
    sigma2: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(arch: ArchitectureSpec, spec: ch.ChannelSpec,
                   tolerance: float = 1e-4, n_params: int = 120,
                   seed: int = 0, fd_step: float = 1e-6) -> GradCheckReport:
    """Central finite differences vs. reverse-mode gradients in float64.

    The channel draw (noise, and gain for fading) is frozen, so the loss is
    a deterministic function of the parameters.
    """
    model = init_params(arch, seed).double()
    h, w, c = arch.input_dims
    g = stream(seed, "gradcheck")
    x = torch.from_numpy(g.uniform(0.0, 1.0, (2, c, h, w))).double()
    noise_np, gains_np = ch.draw_channel_tensors(spec, 2, arch.k, g, torch.float64)
    noise = noise_np.double()
    gains = gains_np.double() if gains_np is not None else None

    loss = forward_loss(model, x, spec, noise, gains, eps=0.0)
    model.zero_grad(set_to_none=True)
    loss.backward()
    analytic = {n: p.grad.detach().clone() for n, p in model.named_parameters()}

    named = list(model.named_parameters())
    sizes = np.array([p.numel() for _, p in named])
    total = int(sizes.sum())
    picks = g.choice(total, size=min(n_params, total), replace=False)

    max_rel = 0.0
    with torch.no_grad():
        for flat_idx in picks:
            pi = int(np.searchsorted(np.cumsum(sizes), flat_idx, side="right"))
            offset = int(flat_idx - (np.cumsum(sizes)[pi - 1] if pi else 0))
            name, p = named[pi]
            view = p.reshape(-1)
            orig = float(view[offset])

            view[offset] = orig + fd_step
            lp = float(forward_loss(model, x, spec, noise, gains, eps=0.0))
            view[offset] = orig - fd_step
            lm = float(forward_loss(model, x, spec, noise, gains, eps=0.0))
            view[offset] = orig

            fd = (lp - lm) / (2.0 * fd_step)
            ad = float(analytic[name].reshape(-1)[offset])
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-8)
            max_rel = max(max_rel, rel)

    return GradCheckReport(max_rel, len(picks), tolerance, spec.kind, spec.sigma2)
