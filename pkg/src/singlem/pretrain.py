"""Masked-autoencoder pretraining loop and its composite loss.

Half of each sequence's contextual embeddings are zeroed before the global
stage; a shared affine decoder maps every output representation back to token
space. The loss blends Huber reconstruction over masked and unmasked tokens
with a squared-error term on the 13-50 Hz content of every token. Each
optimization step derives its randomness from (seed, step), so an interrupted
run resumed from a checkpoint replays bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamDict, Tensor
from .checkpoint import Checkpoint, save_checkpoint
from .dsp import bandpass_mask_matrix
from .encoder import EncoderConfig, embed_tokens, global_encode, temporal_encode
from .errors import NonFiniteLoss, PlanMismatch, ShapeMismatch
from .optim import AdamWState, adamw_step, cosine_lr
from .tokenizer import TokenStream, sample_sequences


@dataclass(frozen=True)
class MaskPlan:
    """Which token indices of an L-token sequence are hidden from the encoder."""

    length: int
    masked: tuple[int, ...]
    proportion: float = 0.5

    def __post_init__(self):
        if any(not 0 <= i < self.length for i in self.masked):
            raise PlanMismatch(f"mask indices out of range for L={self.length}")

    @property
    def unmasked(self) -> tuple[int, ...]:
        hidden = set(self.masked)
        return tuple(i for i in range(self.length) if i not in hidden)


def sample_mask(length: int, proportion: float, rng: np.random.Generator) -> MaskPlan:
    """floor(p*L) indices drawn uniformly without replacement."""
    count = int(math.floor(proportion * length))
    masked = tuple(sorted(rng.choice(length, size=count, replace=False).tolist()))
    return MaskPlan(length=length, masked=masked, proportion=proportion)


@dataclass(frozen=True)
class PretrainConfig:
    lambda_masked: float = 1.0
    lambda_unmasked: float = 1.0
    lambda_band: float = 0.1
    huber_delta: float = 1.0
    mask_p: float = 0.5
    batch_size: int = 64
    epochs: int = 16
    seq_len_range: tuple[int, int] = (8, 32)
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    seed: int = 0
    max_steps: int | None = None
    checkpoint_every: int | None = None

    def __post_init__(self):
        weights = (self.lambda_masked, self.lambda_unmasked, self.lambda_band)
        if any(w < 0 for w in weights) or not any(weights):
            raise ValueError("loss weights must be >= 0 and not all zero")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


def init_decoder_weights(cfg: EncoderConfig, seed) -> ParamDict:
    """Shared affine decoder from repr_dim back to token space."""
    rng = np.random.default_rng(seed)
    bound = np.sqrt(1.0 / cfg.repr_dim)
    params: ParamDict = {}
    params["decoder.w"] = ad.Parameter(
        "decoder.w",
        Tensor(rng.uniform(-bound, bound, size=(cfg.repr_dim, cfg.token_len)),
               requires_grad=True))
    params["decoder.b"] = ad.Parameter(
        "decoder.b", Tensor(np.zeros(cfg.token_len), requires_grad=True))
    return params


def apply_mask(e: Tensor, plan: MaskPlan) -> Tensor:
    """Zero the masked rows of (L, D); other rows pass through bit-identical."""
    e = ad.as_tensor(e)
    if e.shape[0] != plan.length:
        raise PlanMismatch(f"plan is for L={plan.length}, embeddings have {e.shape[0]}")
    keep = np.ones((plan.length, 1))
    if plan.masked:
        keep[list(plan.masked)] = 0.0
    return ad.mul(e, Tensor(keep))


def decode(r: Tensor, params: ParamDict) -> Tensor:
    """Affine map from (L, repr_dim) to reconstructed tokens (L, token_len)."""
    return ad.matmul(r, params["decoder.w"].tensor) + params["decoder.b"].tensor


def forward_masked(tokens: np.ndarray, plan: MaskPlan, params: ParamDict,
                   cfg: EncoderConfig) -> Tensor:
    """Encoder with masking injected between the local and global stages."""
    u = temporal_encode(tokens, params, cfg)
    e = embed_tokens(u, params, cfg)
    r = global_encode(apply_mask(e, plan), params, cfg)
    return decode(r, params)


def band_matrix_for(cfg: EncoderConfig, rate_hz: float = 128.0) -> Tensor:
    """Constant 13-50 Hz projection matrix sized to the configured token."""
    return Tensor(bandpass_mask_matrix(cfg.token_len, rate_hz=rate_hz))


def pretrain_loss(tokens, recon: Tensor, plan: MaskPlan, cfg: PretrainConfig,
                  band: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """(total, masked, unmasked, band) loss terms.

    Degenerate index sets (no masked or no unmasked tokens) contribute an
    exact zero instead of erroring, so single-token sequences stay trainable.
    """
    targets = ad.as_tensor(tokens)
    if targets.shape != recon.shape:
        raise ShapeMismatch(f"targets {targets.shape} vs recon {recon.shape}")
    if targets.shape[0] != plan.length:
        raise PlanMismatch(f"plan is for L={plan.length}, got {targets.shape[0]}")

    def masked_huber(indices: tuple[int, ...]) -> Tensor:
        if not indices:
            return Tensor(0.0)
        idx = np.asarray(indices)
        return ad.huber(ad.gather_rows(recon, idx), ad.gather_rows(targets, idx),
                        cfg.huber_delta)

    l_masked = masked_huber(plan.masked)
    l_unmasked = masked_huber(plan.unmasked)

    diff = ad.matmul(recon, band) - ad.matmul(targets, band)
    l_band = ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / plan.length)

    total = (ad.scale(l_masked, cfg.lambda_masked)
             + ad.scale(l_unmasked, cfg.lambda_unmasked)
             + ad.scale(l_band, cfg.lambda_band))
    return total, l_masked, l_unmasked, l_band


@dataclass
class HistoryRow:
    step: int
    lr: float
    total: float
    l_masked: float
    l_unmasked: float
    l_band: float


@dataclass
class TrainResult:
    history: list[HistoryRow] = field(default_factory=list)
    total_steps: int = 0


def planned_steps(stream: TokenStream, cfg: PretrainConfig) -> int:
    """Epochs translated into steps: one epoch covers the corpus token count."""
    if cfg.max_steps is not None:
        return cfg.max_steps
    mean_len = (cfg.seq_len_range[0] + cfg.seq_len_range[1]) / 2.0
    per_epoch = max(1, int(math.ceil(len(stream) / (cfg.batch_size * mean_len))))
    return cfg.epochs * per_epoch


def history_csv_lines(history: list[HistoryRow]) -> list[str]:
    lines = ["step,lr,total,l_masked,l_unmasked,l_bg"]
    for row in history:
        lines.append(f"{row.step},{row.lr!r},{row.total!r},{row.l_masked!r},"
                     f"{row.l_unmasked!r},{row.l_band!r}")
    return lines


def train(stream: TokenStream, params: ParamDict, enc_cfg: EncoderConfig,
          cfg: PretrainConfig, *, opt_state: AdamWState | None = None,
          start_step: int = 0, stop_after: int | None = None,
          checkpoint_path: str | Path | None = None,
          config_echo: dict[str, str] | None = None) -> TrainResult:
    """Run the optimization loop from start_step to the planned step count.

    params must contain both encoder and decoder entries. Checkpoints (when a
    path is given) are written every cfg.checkpoint_every steps and at the end.
    stop_after interrupts the run early while keeping the learning-rate
    schedule pinned to the full horizon, so a later resume replays the
    uninterrupted run exactly.
    """
    total_steps = planned_steps(stream, cfg)
    opt_state = opt_state or AdamWState()
    band = band_matrix_for(enc_cfg)
    lo, hi = cfg.seq_len_range
    result = TrainResult(total_steps=total_steps)
    last_step = total_steps if stop_after is None else min(stop_after, total_steps)

    def write_checkpoint():
        if checkpoint_path is not None:
            save_checkpoint(
                Checkpoint(params=params, config=dict(config_echo or {}),
                           opt_state=opt_state),
                checkpoint_path)

    for step in range(start_step, last_step):
        rng = np.random.default_rng([cfg.seed, step])
        seq_len = int(rng.integers(lo, hi + 1))
        seqs = sample_sequences(stream, seq_len, cfg.batch_size, rng)

        total_sum = Tensor(0.0)
        comp_sums = [0.0, 0.0, 0.0]
        for tokens in seqs:
            plan = sample_mask(seq_len, cfg.mask_p, rng)
            recon = forward_masked(tokens, plan, params, enc_cfg)
            total, l_m, l_u, l_b = pretrain_loss(tokens, recon, plan, cfg, band)
            total_sum = total_sum + total
            comp_sums[0] += l_m.item()
            comp_sums[1] += l_u.item()
            comp_sums[2] += l_b.item()

        batch_total = ad.scale(total_sum, 1.0 / len(seqs))
        loss_value = batch_total.item()
        if not np.isfinite(loss_value):
            raise NonFiniteLoss(f"loss became {loss_value} at step {step}")

        batch_total.backward()
        lr = cosine_lr(step, total_steps - 1, cfg.lr_max, cfg.lr_min)
        adamw_step(params, opt_state, lr, beta1=cfg.beta1, beta2=cfg.beta2,
                   weight_decay=cfg.weight_decay)
        for p in params.values():
            p.tensor.zero_grad()

        result.history.append(HistoryRow(
            step=step, lr=lr, total=loss_value,
            l_masked=comp_sums[0] / len(seqs),
            l_unmasked=comp_sums[1] / len(seqs),
            l_band=comp_sums[2] / len(seqs)))

        if (cfg.checkpoint_every is not None
                and (step + 1) % cfg.checkpoint_every == 0
                and step + 1 < last_step):
            write_checkpoint()

    write_checkpoint()
    return result


def evaluate_reconstruction(sequences: list[np.ndarray], params: ParamDict,
                            enc_cfg: EncoderConfig, mask_p: float, seed,
                            delta: float = 1.0) -> float:
    """Mean Huber error over all tokens of held-out sequences, fixed masks."""
    rng = np.random.default_rng(seed)
    errors = []
    with ad.no_grad():
        for tokens in sequences:
            plan = sample_mask(tokens.shape[0], mask_p, rng)
            recon = forward_masked(tokens, plan, params, enc_cfg)
            errors.append(ad.huber(recon, tokens, delta).item())
    return float(np.mean(errors))
