"""Sliding-window tokenization with end-of-channel boundaries.

Tokens are fixed-length overlapping windows of one channel. A boundary marker
after the last token of each segment keeps sampled training sequences from
straddling two channels or recordings; the marker is bookkeeping only and is
never fed to the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoValidWindow, SignalTooShort


@dataclass(frozen=True)
class TokenizerParams:
    token_len: int = 128
    overlap: int = 32

    def __post_init__(self):
        if not 0 <= self.overlap < self.token_len:
            raise ValueError(
                f"overlap must satisfy 0 <= u < token_len, got {self.overlap}")

    @property
    def stride(self) -> int:
        return self.token_len - self.overlap


def tokenize(x: np.ndarray, params: TokenizerParams = TokenizerParams()) -> np.ndarray:
    """Split a signal into floor((S - l)/s) + 1 overlapping tokens, shape (L, l)."""
    x = np.asarray(x, dtype=np.float64)
    ell, s = params.token_len, params.stride
    if x.size < ell:
        raise SignalTooShort(f"signal of {x.size} samples < token length {ell}")
    count = (x.size - ell) // s + 1
    starts = np.arange(count) * s
    return x[starts[:, None] + np.arange(ell)[None, :]]


@dataclass(frozen=True)
class TokenStream:
    """Concatenated tokens plus the set of indices followed by a boundary."""

    tokens: np.ndarray  # (T, token_len)
    boundaries: frozenset[int] = field(default_factory=frozenset)
    skipped_segments: int = 0

    def __len__(self) -> int:
        return self.tokens.shape[0]


def build_stream(segments: list[np.ndarray],
                 params: TokenizerParams = TokenizerParams()) -> TokenStream:
    """Tokenize each segment in order, marking a boundary after each one.

    Segments shorter than one token are skipped and counted.
    """
    chunks = []
    boundaries = set()
    skipped = 0
    total = 0
    for seg in segments:
        try:
            toks = tokenize(seg, params)
        except SignalTooShort:
            skipped += 1
            continue
        chunks.append(toks)
        total += toks.shape[0]
        boundaries.add(total - 1)
    tokens = (np.concatenate(chunks, axis=0) if chunks
              else np.empty((0, params.token_len)))
    return TokenStream(tokens=tokens, boundaries=frozenset(boundaries),
                       skipped_segments=skipped)


def valid_sequence_starts(stream: TokenStream, seq_len: int) -> np.ndarray:
    """Start indices whose seq_len-token window contains no internal boundary."""
    total = len(stream)
    if seq_len < 1 or total < seq_len:
        return np.empty(0, dtype=np.int64)
    ok = np.ones(total - seq_len + 1, dtype=bool)
    for b in stream.boundaries:
        # a boundary after token b invalidates starts with b strictly inside
        lo = max(0, b - seq_len + 2)
        hi = min(ok.size, b + 1)
        ok[lo:hi] = False
    return np.flatnonzero(ok).astype(np.int64)


def sample_sequences(stream: TokenStream, seq_len: int, count: int,
                     seed) -> list[np.ndarray]:
    """Uniformly sample boundary-free runs of seq_len consecutive tokens.

    Sampling is without replacement while count allows it, deterministic in
    the seed. Raises NoValidWindow when no channel has seq_len consecutive
    tokens.
    """
    starts = valid_sequence_starts(stream, seq_len)
    if starts.size == 0:
        raise NoValidWindow(
            f"no run of {seq_len} consecutive tokens without a boundary")
    rng = np.random.default_rng(seed)
    if count <= starts.size:
        chosen = rng.permutation(starts)[:count]
    else:
        chosen = rng.choice(starts, size=count, replace=True)
    return [stream.tokens[s:s + seq_len] for s in chosen]
