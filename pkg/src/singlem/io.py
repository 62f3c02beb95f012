"""Recording container I/O and synthetic corpus generation.

A recording on disk is a pair of files: ``<name>.sgh`` (UTF-8 ``key=value``
header, one pair per line) plus ``<name>.sgb`` (raw little-endian float32
payload, channel-major). The format is deliberately bit-exact: whatever
float32 values go in come back out unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    InvalidSpec,
    IoFailure,
    MalformedHeader,
    NonFiniteSample,
    PayloadSizeMismatch,
)

HEADER_SUFFIX = ".sgh"
PAYLOAD_SUFFIX = ".sgb"
CONTAINER_VERSION = 1


@dataclass(frozen=True)
class ChannelSignal:
    """One electrode's samples. Microvolts before scaling, dimensionless after."""

    name: str
    samples: np.ndarray
    scaled: bool = False

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", arr)
        if arr.ndim != 1:
            raise MalformedHeader(f"channel {self.name!r}: samples must be 1-D")
        if arr.size and not np.all(np.isfinite(arr)):
            raise NonFiniteSample(f"channel {self.name!r} contains NaN/Inf")


@dataclass(frozen=True)
class Recording:
    """One subject/session: equal-length channels at a common sampling rate."""

    subject_id: str
    channels: list[ChannelSignal]
    sampling_rate_hz: float
    label: int | None = None

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise MalformedHeader("sampling_rate_hz must be positive")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise MalformedHeader(f"duplicate channel names: {names}")
        lengths = {c.samples.size for c in self.channels}
        if len(lengths) > 1:
            raise MalformedHeader(f"channels have unequal lengths: {sorted(lengths)}")

    @property
    def n_samples(self) -> int:
        return self.channels[0].samples.size if self.channels else 0

    def channel(self, name: str) -> ChannelSignal:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)


def _paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (HEADER_SUFFIX, PAYLOAD_SUFFIX):
        p = p.with_suffix("")
    return p.with_suffix(HEADER_SUFFIX), p.with_suffix(PAYLOAD_SUFFIX)


def write_container(rec: Recording, path: str | Path) -> None:
    """Write header + payload; read_container inverts this exactly.

    Values are stored as float32, so callers that need bit-exact round trips
    must hand in float32-representable samples.
    """
    for c in rec.channels:
        if c.samples.size and not np.all(np.isfinite(c.samples)):
            raise NonFiniteSample(f"refusing to write channel {c.name!r}")
    header_path, payload_path = _paths(path)
    lines = [
        f"version={CONTAINER_VERSION}",
        f"rate={rec.sampling_rate_hz!r}",
        "channels=" + ",".join(c.name for c in rec.channels),
        f"samples={rec.n_samples}",
        "scaled=" + ",".join("1" if c.scaled else "0" for c in rec.channels),
        f"subject={rec.subject_id}",
    ]
    if rec.label is not None:
        lines.append(f"label={rec.label}")
    payload = (
        np.concatenate([c.samples for c in rec.channels])
        if rec.channels
        else np.empty(0)
    )
    try:
        header_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        payload_path.write_bytes(payload.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_container(path: str | Path) -> Recording:
    """Load a recording, validating header/payload agreement."""
    header_path, payload_path = _paths(path)
    if not header_path.exists():
        raise MalformedHeader(f"missing header file {header_path}")
    if not payload_path.exists():
        raise PayloadSizeMismatch(f"missing payload file {payload_path}")

    kv: dict[str, str] = {}
    for line in header_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedHeader(f"bad header line: {line!r}")
        key, value = line.split("=", 1)
        kv[key.strip()] = value.strip()

    for key in ("version", "rate", "channels", "samples"):
        if key not in kv:
            raise MalformedHeader(f"header missing key {key!r}")
    if kv["version"] != str(CONTAINER_VERSION):
        raise MalformedHeader(f"unsupported container version {kv['version']!r}")
    try:
        rate = float(kv["rate"])
        n_samples = int(kv["samples"])
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from exc
    names = [n for n in kv["channels"].split(",") if n] if kv["channels"] else []
    scaled_flags = (
        [f == "1" for f in kv["scaled"].split(",")]
        if "scaled" in kv and kv["scaled"]
        else [False] * len(names)
    )
    if len(scaled_flags) != len(names):
        raise MalformedHeader("scaled flags do not match channel count")

    raw = payload_path.read_bytes()
    expected = 4 * len(names) * n_samples
    if len(raw) != expected:
        raise PayloadSizeMismatch(
            f"payload is {len(raw)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if flat.size and not np.all(np.isfinite(flat)):
        raise NonFiniteSample(f"payload of {payload_path} contains NaN/Inf")

    channels = [
        ChannelSignal(
            name=name,
            samples=flat[i * n_samples : (i + 1) * n_samples],
            scaled=scaled_flags[i],
        )
        for i, name in enumerate(names)
    ]
    label = int(kv["label"]) if "label" in kv else None
    subject = kv.get("subject", header_path.stem)
    return Recording(
        subject_id=subject, channels=channels, sampling_rate_hz=rate, label=label
    )


@dataclass(frozen=True)
class BandComponent:
    """One sinusoidal ingredient: center frequency, base amplitude, per-class gains."""

    center_hz: float
    amplitude_uv: float
    class_gains: tuple[float, ...]


@dataclass(frozen=True)
class SyntheticSpec:
    """Deterministic recipe for a synthetic multi-channel recording.

    Channels not listed in ``informative_channels`` (when set) always use a
    gain of 1.0, so only the listed channels carry class information.
    """

    n_subjects: int = 1
    n_channels: int = 2
    duration_s: float = 10.0
    band_components: tuple[BandComponent, ...] = (
        BandComponent(10.0, 20.0, (1.0,)),
    )
    noise_std_uv: float = 5.0
    seed: int = 0
    sampling_rate_hz: float = 128.0
    subject_id: str = "S00"
    channel_names: tuple[str, ...] | None = None
    informative_channels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_channels < 1 or self.duration_s <= 0:
            raise InvalidSpec("n_subjects, n_channels, duration_s must be positive")
        if self.noise_std_uv < 0:
            raise InvalidSpec("noise_std_uv must be non-negative")
        for comp in self.band_components:
            if not 0 < comp.center_hz < self.sampling_rate_hz / 2:
                raise InvalidSpec(
                    f"component at {comp.center_hz} Hz outside (0, rate/2)"
                )
        if self.channel_names is not None and len(self.channel_names) != self.n_channels:
            raise InvalidSpec("channel_names length must equal n_channels")

    def resolved_channel_names(self) -> tuple[str, ...]:
        if self.channel_names is not None:
            return self.channel_names
        return tuple(f"ch{i:02d}" for i in range(self.n_channels))


def generate_synthetic(spec: SyntheticSpec, class_label: int) -> Recording:
    """Sum of per-class-scaled sinusoids plus Gaussian noise, pure in (spec, label)."""
    n = int(round(spec.duration_s * spec.sampling_rate_hz))
    t = np.arange(n, dtype=np.float64) / spec.sampling_rate_hz
    names = spec.resolved_channel_names()
    informative = (
        set(names) if spec.informative_channels is None else set(spec.informative_channels)
    )
    rng = np.random.default_rng([spec.seed, class_label])
    channels = []
    for name in names:
        x = np.zeros(n)
        for comp in spec.band_components:
            if name in informative:
                if not 0 <= class_label < len(comp.class_gains):
                    raise InvalidSpec(
                        f"class {class_label} outside gains of component "
                        f"{comp.center_hz} Hz"
                    )
                gain = comp.class_gains[class_label]
            else:
                gain = 1.0
            phase = rng.uniform(0.0, 2.0 * math.pi)
            x += comp.amplitude_uv * gain * np.sin(2.0 * math.pi * comp.center_hz * t + phase)
        if spec.noise_std_uv > 0:
            x += rng.normal(0.0, spec.noise_std_uv, size=n)
        channels.append(ChannelSignal(name=name, samples=x))
    return Recording(
        subject_id=spec.subject_id,
        channels=channels,
        sampling_rate_hz=spec.sampling_rate_hz,
        label=class_label,
    )


def subject_spec(spec: SyntheticSpec, subject_index: int) -> SyntheticSpec:
    """Derive a per-subject variant with its own seed and id."""
    return replace(
        spec,
        seed=int(np.random.SeedSequence([spec.seed, subject_index]).generate_state(1)[0]),
        subject_id=f"S{subject_index:02d}",
    )


def trial_spec(spec: SyntheticSpec, subject_index: int,
               trial_index: int) -> SyntheticSpec:
    """Per-trial variant: fresh seed per (subject, trial), subject id kept."""
    base = subject_spec(spec, subject_index)
    return replace(
        base,
        seed=int(np.random.SeedSequence([base.seed, trial_index]).generate_state(1)[0]),
    )
