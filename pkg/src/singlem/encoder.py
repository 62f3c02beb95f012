"""Three-stage single-channel encoder.

Stage 1 runs each token through a small 1-D CNN that acts like a bank of
band-specific filters. Stage 2 contextualizes every token against a short
window of neighbors through a local transformer with a prepended summary
slot and an MLP bottleneck. Stage 3 is a sequence-level transformer over all
tokens followed by a linear projection down to the compact per-token
representation used downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import AttentionWeights, Parameter, ParamDict, Tensor
from .errors import EmptySequence, SequenceTooLong


@dataclass(frozen=True)
class EncoderConfig:
    token_len: int = 128
    conv_kernels: tuple[int, int, int] = (3, 61, 1)
    conv_channels: tuple[int, int, int] = (32, 32, 1)
    embed_dim: int = 128
    window: int = 5
    embed_layers: int = 4
    embed_heads: int = 4
    bottleneck_dim: int = 32
    model_dim: int = 128
    global_layers: int = 12
    global_heads: int = 8
    repr_dim: int = 16
    max_seq_len: int = 64

    def __post_init__(self):
        if any(k % 2 == 0 for k in self.conv_kernels):
            raise ValueError(f"conv kernels must be odd: {self.conv_kernels}")
        if self.window % 2 == 0:
            raise ValueError(f"context window must be odd: {self.window}")
        if self.embed_dim % self.embed_heads != 0:
            raise ValueError("embed_dim must be divisible by embed_heads")
        if self.model_dim % self.global_heads != 0:
            raise ValueError("model_dim must be divisible by global_heads")
        if not self.bottleneck_dim < self.embed_dim:
            raise ValueError("bottleneck_dim must be smaller than embed_dim")
        if self.conv_channels[-1] != 1:
            raise ValueError("final conv layer must project to one channel")

    def as_flat_dict(self) -> dict[str, str]:
        return {
            "token_len": str(self.token_len),
            "conv_kernels": ",".join(map(str, self.conv_kernels)),
            "conv_channels": ",".join(map(str, self.conv_channels)),
            "embed_dim": str(self.embed_dim),
            "window": str(self.window),
            "embed_layers": str(self.embed_layers),
            "embed_heads": str(self.embed_heads),
            "bottleneck_dim": str(self.bottleneck_dim),
            "model_dim": str(self.model_dim),
            "global_layers": str(self.global_layers),
            "global_heads": str(self.global_heads),
            "repr_dim": str(self.repr_dim),
            "max_seq_len": str(self.max_seq_len),
        }

    @classmethod
    def from_flat_dict(cls, d: dict[str, str]) -> "EncoderConfig":
        def ints(key):
            return tuple(int(v) for v in d[key].split(","))

        return cls(
            token_len=int(d["token_len"]),
            conv_kernels=ints("conv_kernels"),
            conv_channels=ints("conv_channels"),
            embed_dim=int(d["embed_dim"]),
            window=int(d["window"]),
            embed_layers=int(d["embed_layers"]),
            embed_heads=int(d["embed_heads"]),
            bottleneck_dim=int(d["bottleneck_dim"]),
            model_dim=int(d["model_dim"]),
            global_layers=int(d["global_layers"]),
            global_heads=int(d["global_heads"]),
            repr_dim=int(d["repr_dim"]),
            max_seq_len=int(d["max_seq_len"]),
        )


def toy_config() -> EncoderConfig:
    """Small configuration for gradient checks and fast CPU pretraining."""
    return EncoderConfig(
        token_len=16, conv_kernels=(3, 7, 1), conv_channels=(4, 4, 1),
        embed_dim=8, window=5, embed_layers=1, embed_heads=2,
        bottleneck_dim=4, model_dim=8, global_layers=1, global_heads=2,
        repr_dim=4, max_seq_len=64)


# -- weight construction ----------------------------------------------------


def _param(params: ParamDict, name: str, data: np.ndarray) -> None:
    params[name] = Parameter(name, Tensor(data, requires_grad=True))


def _add_linear(params: ParamDict, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator) -> None:
    bound = np.sqrt(1.0 / fan_in)
    _param(params, f"{name}.w", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    _param(params, f"{name}.b", np.zeros(fan_out))


def _add_layer_norm(params: ParamDict, name: str, dim: int) -> None:
    _param(params, f"{name}.gain", np.ones(dim))
    _param(params, f"{name}.bias", np.zeros(dim))


def _add_transformer_layer(params: ParamDict, prefix: str, dim: int,
                           rng: np.random.Generator) -> None:
    for gate in ("wq", "wk", "wv", "wo"):
        bound = np.sqrt(1.0 / dim)
        _param(params, f"{prefix}.attn.{gate}",
               rng.uniform(-bound, bound, size=(dim, dim)))
    for gate in ("bq", "bk", "bv", "bo"):
        _param(params, f"{prefix}.attn.{gate}", np.zeros(dim))
    _add_layer_norm(params, f"{prefix}.ln1", dim)
    _add_layer_norm(params, f"{prefix}.ln2", dim)
    _add_linear(params, f"{prefix}.ffn.fc1", dim, 4 * dim, rng)
    _add_linear(params, f"{prefix}.ffn.fc2", 4 * dim, dim, rng)


def init_encoder_weights(cfg: EncoderConfig, seed) -> ParamDict:
    """Fresh weights: uniform(+-sqrt(1/fan_in)) linear/conv maps, N(0, 0.02)
    embedding and positional tables, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params: ParamDict = {}

    c_prev = 1
    for i, (k, c_out) in enumerate(zip(cfg.conv_kernels, cfg.conv_channels), 1):
        fan_in = c_prev * k
        bound = np.sqrt(1.0 / fan_in)
        _param(params, f"temporal.conv{i}.w",
               rng.uniform(-bound, bound, size=(c_out, c_prev, k)))
        if i < len(cfg.conv_kernels):
            _add_layer_norm(params, f"temporal.ln{i}", c_out)
        c_prev = c_out

    bound = np.sqrt(1.0 / cfg.token_len)
    _param(params, "embed.w_e",
           rng.uniform(-bound, bound, size=(cfg.token_len, cfg.embed_dim)))
    _param(params, "embed.e0", rng.normal(0.0, 0.02, size=cfg.embed_dim))
    _param(params, "embed.pos",
           rng.normal(0.0, 0.02, size=(cfg.window + 1, cfg.embed_dim)))
    for i in range(cfg.embed_layers):
        _add_transformer_layer(params, f"embed.layer{i}", cfg.embed_dim, rng)
    half = cfg.embed_dim // 2
    _add_linear(params, "embed.bottleneck.fc1", cfg.embed_dim, half, rng)
    _add_linear(params, "embed.bottleneck.fc2", half, cfg.bottleneck_dim, rng)
    _add_linear(params, "embed.bottleneck.fc3", cfg.bottleneck_dim, cfg.model_dim, rng)

    _param(params, "global.pos",
           rng.normal(0.0, 0.02, size=(cfg.max_seq_len, cfg.model_dim)))
    for i in range(cfg.global_layers):
        _add_transformer_layer(params, f"global.layer{i}", cfg.model_dim, rng)
    _add_layer_norm(params, "global.final_ln", cfg.model_dim)
    bound = np.sqrt(1.0 / cfg.model_dim)
    _param(params, "proj.w_r",
           rng.uniform(-bound, bound, size=(cfg.model_dim, cfg.repr_dim)))
    return params


def param_count(params: ParamDict) -> int:
    return sum(p.tensor.size for p in params.values())


# -- forward stages ----------------------------------------------------------


def _t(params: ParamDict, name: str) -> Tensor:
    return params[name].tensor


def _channel_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Layer norm across the channel axis at every time step of (B, c, t)."""
    return ad.swap_last(ad.layer_norm(ad.swap_last(x), gain, bias))


def transformer_layer(x: Tensor, prefix: str, params: ParamDict,
                      heads: int) -> Tensor:
    """Pre-norm residual block: attention then a 4x-wide GELU FFN."""
    attn = AttentionWeights(
        wq=_t(params, f"{prefix}.attn.wq"), bq=_t(params, f"{prefix}.attn.bq"),
        wk=_t(params, f"{prefix}.attn.wk"), bk=_t(params, f"{prefix}.attn.bk"),
        wv=_t(params, f"{prefix}.attn.wv"), bv=_t(params, f"{prefix}.attn.bv"),
        wo=_t(params, f"{prefix}.attn.wo"), bo=_t(params, f"{prefix}.attn.bo"))
    h = ad.layer_norm(x, _t(params, f"{prefix}.ln1.gain"),
                      _t(params, f"{prefix}.ln1.bias"))
    a = ad.multi_head_attention(h, heads, attn) + x
    h2 = ad.layer_norm(a, _t(params, f"{prefix}.ln2.gain"),
                       _t(params, f"{prefix}.ln2.bias"))
    f = ad.matmul(h2, _t(params, f"{prefix}.ffn.fc1.w")) + _t(params, f"{prefix}.ffn.fc1.b")
    f = ad.matmul(ad.gelu(f), _t(params, f"{prefix}.ffn.fc2.w")) + _t(params, f"{prefix}.ffn.fc2.b")
    return f + a


def temporal_encode(tokens, params: ParamDict, cfg: EncoderConfig) -> Tensor:
    """CNN stage: (L, token_len) in, (L, token_len) filtered features out."""
    x = ad.as_tensor(tokens)
    if x.ndim == 1:
        x = ad.reshape(x, (1, x.size))
    length = x.shape[0]
    x = ad.reshape(x, (length, 1, cfg.token_len))
    n_layers = len(cfg.conv_kernels)
    for i in range(1, n_layers + 1):
        x = ad.conv1d(x, _t(params, f"temporal.conv{i}.w"))
        if i < n_layers:
            x = _channel_norm(x, _t(params, f"temporal.ln{i}.gain"),
                              _t(params, f"temporal.ln{i}.bias"))
        x = ad.elu(x)
    return ad.reshape(x, (length, cfg.token_len))


def embed_tokens(u: Tensor, params: ParamDict, cfg: EncoderConfig) -> Tensor:
    """Local-context stage: (L, token_len) features to (L, model_dim) embeddings.

    Each token is projected to the embedding space, grouped with its window
    of neighbors (edges replicate the first/last token), prefixed with the
    learnable summary slot, position-coded, and run through the local
    transformer; the summary slot's output is squeezed through the bottleneck.
    """
    u = ad.as_tensor(u)
    length = u.shape[0]
    if length == 0:
        raise EmptySequence("cannot embed an empty token sequence")
    v = ad.matmul(u, _t(params, "embed.w_e"))

    half = cfg.window // 2
    idx = np.clip(np.arange(length)[:, None] + np.arange(-half, half + 1)[None, :],
                  0, length - 1)
    windows = ad.gather_rows(v, idx)  # (L, w, d)

    e0 = ad.reshape(_t(params, "embed.e0"), (1, 1, cfg.embed_dim))
    e0 = ad.expand(e0, (length, 1, cfg.embed_dim))
    h = ad.concat([e0, windows], axis=1) + _t(params, "embed.pos")

    for i in range(cfg.embed_layers):
        h = transformer_layer(h, f"embed.layer{i}", params, cfg.embed_heads)

    z = ad.reshape(ad.narrow(h, 1, 0, 1), (length, cfg.embed_dim))
    b = ad.gelu(ad.matmul(z, _t(params, "embed.bottleneck.fc1.w"))
                + _t(params, "embed.bottleneck.fc1.b"))
    b = ad.gelu(ad.matmul(b, _t(params, "embed.bottleneck.fc2.w"))
                + _t(params, "embed.bottleneck.fc2.b"))
    return (ad.matmul(b, _t(params, "embed.bottleneck.fc3.w"))
            + _t(params, "embed.bottleneck.fc3.b"))


def global_encode(e: Tensor, params: ParamDict, cfg: EncoderConfig) -> Tensor:
    """Sequence stage: (L, model_dim) embeddings to (L, repr_dim) representations."""
    e = ad.as_tensor(e)
    length = e.shape[0]
    if length > cfg.max_seq_len:
        raise SequenceTooLong(
            f"sequence of {length} tokens exceeds max_seq_len={cfg.max_seq_len}")
    g = e + ad.narrow(_t(params, "global.pos"), 0, 0, length)
    for i in range(cfg.global_layers):
        g = transformer_layer(g, f"global.layer{i}", params, cfg.global_heads)
    g = ad.layer_norm(g, _t(params, "global.final_ln.gain"),
                      _t(params, "global.final_ln.bias"))
    return ad.matmul(g, _t(params, "proj.w_r"))


def encode(tokens, params: ParamDict, cfg: EncoderConfig) -> Tensor:
    """Full pipeline: (L, token_len) raw tokens to (L, repr_dim)."""
    return global_encode(embed_tokens(temporal_encode(tokens, params, cfg),
                                      params, cfg), params, cfg)
