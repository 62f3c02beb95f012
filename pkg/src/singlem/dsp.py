"""Per-channel preprocessing: FIR filtering, resampling, artifact rejection, scaling.

All filters are linear-phase windowed-sinc FIRs applied forward-backward with
mirror padding, so the pipeline has zero net phase shift. The 13-50 Hz filter
used by the spectral loss is an exact DFT bin mask: one-second tokens at
128 Hz put every integer frequency on its own bin, which makes that loss term
analytically checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    AmplitudeOverflow,
    EmptySignal,
    InvalidBand,
    SignalTooShort,
    WrongLength,
)

NOTCH_WIDTH_HZ = 2.0

# microvolts -> volts; the configured scale factor applies to volt units
UV_TO_V = 1e-6


@dataclass(frozen=True)
class FilterSpec:
    kind: str  # "bandpass" | "notch" | "bandpass_beta_gamma"
    low_hz: float = 0.0
    high_hz: float = 0.0
    notch_hz: float = 0.0
    num_taps: int = 513


@dataclass(frozen=True)
class PreprocessConfig:
    band: tuple[float, float] = (0.5, 50.0)
    notch_hz: float = 50.0
    target_rate_hz: float = 128.0
    reject_threshold_uv: float = 100.0
    scale_factor: float = 1e4
    reject_enabled: bool = True
    num_taps: int = 513


def _convolve_full(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Full convolution, via FFT when the direct product count gets large."""
    n_out = x.size + h.size - 1
    if x.size * h.size < 1 << 22:
        return np.convolve(x, h)
    n_fft = 1 << int(math.ceil(math.log2(n_out)))
    y = np.fft.irfft(np.fft.rfft(x, n_fft) * np.fft.rfft(h, n_fft), n_fft)
    return y[:n_out]


def _windowed_sinc_lowpass(cutoff_hz: float, rate_hz: float, num_taps: int,
                           window: np.ndarray) -> np.ndarray:
    """Linear-phase low-pass with unit DC gain."""
    m = (num_taps - 1) / 2.0
    n = np.arange(num_taps, dtype=np.float64)
    fc = cutoff_hz / rate_hz
    taps = 2.0 * fc * np.sinc(2.0 * fc * (n - m)) * window
    return taps / taps.sum()


def design_fir(spec: FilterSpec, rate_hz: float) -> np.ndarray:
    """Hamming-windowed sinc taps for band-pass or narrow band-stop filters."""
    if spec.num_taps < 3 or spec.num_taps % 2 == 0:
        raise InvalidBand(f"num_taps must be odd and >= 3, got {spec.num_taps}")
    window = np.hamming(spec.num_taps)

    if spec.kind in ("bandpass", "bandpass_beta_gamma"):
        low, high = (13.0, 50.0) if spec.kind == "bandpass_beta_gamma" else (
            spec.low_hz, spec.high_hz)
        if not 0.0 < low < high < rate_hz / 2.0:
            raise InvalidBand(f"band ({low}, {high}) invalid at rate {rate_hz}")
        return (_windowed_sinc_lowpass(high, rate_hz, spec.num_taps, window)
                - _windowed_sinc_lowpass(low, rate_hz, spec.num_taps, window))

    if spec.kind == "notch":
        low = spec.notch_hz - NOTCH_WIDTH_HZ / 2.0
        high = spec.notch_hz + NOTCH_WIDTH_HZ / 2.0
        if not 0.0 < low < high < rate_hz / 2.0:
            raise InvalidBand(f"notch at {spec.notch_hz} Hz invalid at rate {rate_hz}")
        bp = (_windowed_sinc_lowpass(high, rate_hz, spec.num_taps, window)
              - _windowed_sinc_lowpass(low, rate_hz, spec.num_taps, window))
        stop = -bp
        stop[(spec.num_taps - 1) // 2] += 1.0
        return stop

    raise InvalidBand(f"unknown filter kind {spec.kind!r}")


def filtfilt(taps: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward-backward FIR application with mirror padding of 3*len(taps)."""
    taps = np.asarray(taps, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n_taps = taps.size
    if x.size <= 3 * n_taps:
        raise SignalTooShort(
            f"need more than {3 * n_taps} samples for {n_taps} taps, got {x.size}")
    pad = 3 * n_taps
    if pad > 0:
        xp = np.concatenate([x[1:pad + 1][::-1], x, x[-pad - 1:-1][::-1]])
    else:
        xp = x
    y = _convolve_full(xp, taps)
    y = _convolve_full(y[::-1], taps)[::-1]
    start = (n_taps - 1) + pad
    return y[start:start + x.size]


def resample(x: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Rate conversion to round(len(x) * to/from) samples.

    Rational ratios use polyphase interpolation with a Kaiser-windowed
    anti-alias filter (beta = 8.6); anything else falls back to an anti-alias
    low-pass followed by linear interpolation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot resample an empty signal")
    if from_hz <= 0 or to_hz <= 0:
        raise InvalidBand("sampling rates must be positive")
    if from_hz == to_hz:
        return x.copy()

    out_len = int(round(x.size * to_hz / from_hz))
    ratio = to_hz / from_hz
    frac = Fraction(ratio).limit_denominator(1024)
    rational = (
        frac.numerator > 0
        and abs(float(frac) - ratio) <= 1e-12 * ratio
        and frac.numerator <= 256
    )

    if rational:
        up, down = frac.numerator, frac.denominator
        half = 10 * max(up, down)
        num_taps = 2 * half + 1
        cutoff = min(from_hz, to_hz) / 2.0
        window = np.kaiser(num_taps, 8.6)
        taps = up * _windowed_sinc_lowpass(cutoff, from_hz * up, num_taps, window)
        x_up = np.zeros(x.size * up)
        x_up[::up] = x
        y = _convolve_full(x_up, taps)[half:half + x.size * up]
        return y[::down][:out_len].copy()

    if to_hz < from_hz:
        half = 10 * max(2, int(math.ceil(from_hz / to_hz)))
        num_taps = 2 * half + 1
        window = np.kaiser(num_taps, 8.6)
        taps = _windowed_sinc_lowpass(to_hz / 2.0, from_hz, num_taps, window)
        x = _convolve_full(x, taps)[half:half + x.size]
    t_out = np.arange(out_len) / to_hz
    t_in = np.arange(x.size) / from_hz
    return np.interp(t_out, t_in, x)


def reject_artifacts(x: np.ndarray, threshold_uv: float) -> list[tuple[int, int]]:
    """Maximal contiguous runs where |sample| <= threshold, as (start, end)."""
    x = np.asarray(x)
    keep = np.abs(x) <= threshold_uv
    if not keep.any():
        return []
    edges = np.flatnonzero(np.diff(keep.astype(np.int8)))
    starts = [0] if keep[0] else []
    starts += [int(e) + 1 for e in edges if not keep[e]]
    ends = [int(e) + 1 for e in edges if keep[e]]
    if keep[-1]:
        ends.append(x.size)
    return list(zip(starts, ends))


def preprocess_channel(x: np.ndarray, from_hz: float,
                       cfg: PreprocessConfig = PreprocessConfig()) -> list[np.ndarray]:
    """Band-pass -> notch -> resample -> reject -> scale, returning clean segments.

    Input is in microvolts; outputs are dimensionless with |v| < 1 whenever the
    rejection threshold matches the configured scale factor.
    """
    x = np.asarray(x, dtype=np.float64)
    band_taps = design_fir(
        FilterSpec("bandpass", cfg.band[0], cfg.band[1], num_taps=cfg.num_taps),
        from_hz)
    y = filtfilt(band_taps, x)
    notch_taps = design_fir(
        FilterSpec("notch", notch_hz=cfg.notch_hz, num_taps=cfg.num_taps), from_hz)
    y = filtfilt(notch_taps, y)
    y = resample(y, from_hz, cfg.target_rate_hz)

    if cfg.reject_enabled:
        segments = reject_artifacts(y, cfg.reject_threshold_uv)
    else:
        segments = [(0, y.size)]

    scale = UV_TO_V * cfg.scale_factor
    out = []
    for start, end in segments:
        v = y[start:end] * scale
        if not cfg.reject_enabled and v.size and np.max(np.abs(v)) >= 1.0:
            raise AmplitudeOverflow(
                f"scaled amplitude {np.max(np.abs(v)):.3f} >= 1 with rejection disabled")
        out.append(v)
    return out


def bandpass_13_50(token: np.ndarray) -> np.ndarray:
    """Zero-phase 13-50 Hz filter for one-second tokens, as an exact bin mask."""
    token = np.asarray(token, dtype=np.float64)
    if token.shape != (128,):
        raise WrongLength(f"expected a 128-sample token, got shape {token.shape}")
    spectrum = np.fft.rfft(token)
    freqs = np.arange(spectrum.size)  # bin k of a 1 s window is k Hz
    spectrum[(freqs < 13) | (freqs > 50)] = 0.0
    return np.fft.irfft(spectrum, n=128)


def bandpass_mask_matrix(n: int, rate_hz: float = 128.0,
                         low_hz: float = 13.0, high_hz: float = 50.0) -> np.ndarray:
    """Matrix form of the DFT bin-mask band-pass for length-n tokens.

    Right-multiplying a (batch, n) array by this symmetric idempotent matrix
    applies the same filter as the bin mask; for n = 128 at 128 Hz it matches
    bandpass_13_50 exactly.
    """
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    mask = ((freqs >= low_hz) & (freqs <= high_hz)).astype(np.float64)
    eye = np.eye(n)
    return np.fft.irfft(np.fft.rfft(eye, axis=0) * mask[:, None], n=n, axis=0)
