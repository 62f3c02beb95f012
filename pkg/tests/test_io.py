import numpy as np
import pytest

from singlem.errors import (
    InvalidSpec,
    MalformedHeader,
    NonFiniteSample,
    PayloadSizeMismatch,
)
from singlem.io import (
    BandComponent,
    ChannelSignal,
    Recording,
    SyntheticSpec,
    generate_synthetic,
    read_container,
    subject_spec,
    write_container,
)


def make_recording(rng, n_channels=2, n_samples=256, subject="S00"):
    channels = [
        ChannelSignal(f"ch{i}", rng.normal(size=n_samples).astype(np.float32))
        for i in range(n_channels)
    ]
    return Recording(subject_id=subject, channels=channels, sampling_rate_hz=128.0)


def test_header_payload_size_arithmetic(tmp_path):
    rng = np.random.default_rng(0)
    rec = make_recording(rng, n_channels=2, n_samples=256)
    write_container(rec, tmp_path / "r")
    assert (tmp_path / "r.sgb").stat().st_size == 2 * 256 * 4
    back = read_container(tmp_path / "r")
    assert len(back.channels) == 2
    assert back.n_samples == 256


def test_payload_off_by_one_rejected(tmp_path):
    rng = np.random.default_rng(1)
    rec = make_recording(rng)
    write_container(rec, tmp_path / "r")
    payload = (tmp_path / "r.sgb").read_bytes()
    (tmp_path / "r.sgb").write_bytes(payload[:-1])
    with pytest.raises(PayloadSizeMismatch):
        read_container(tmp_path / "r")


def test_round_trip_bit_identical(tmp_path):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n_ch = int(rng.integers(1, 5))
        n_s = int(rng.integers(0, 1000))
        rec = make_recording(rng, n_ch, n_s, subject=f"S{seed:02d}")
        write_container(rec, tmp_path / f"r{seed}")
        back = read_container(tmp_path / f"r{seed}")
        assert back.subject_id == rec.subject_id
        assert back.sampling_rate_hz == rec.sampling_rate_hz
        for a, b in zip(rec.channels, back.channels):
            assert a.name == b.name
            assert a.scaled == b.scaled
            assert a.samples.astype(np.float32).tobytes() == \
                b.samples.astype(np.float32).tobytes()


def test_empty_recording(tmp_path):
    rec = Recording(subject_id="S00", channels=[ChannelSignal("c", np.empty(0))],
                    sampling_rate_hz=128.0)
    write_container(rec, tmp_path / "empty")
    assert (tmp_path / "empty.sgb").stat().st_size == 0
    assert "samples=0" in (tmp_path / "empty.sgh").read_text()
    back = read_container(tmp_path / "empty")
    assert back.n_samples == 0


def test_payload_is_little_endian_f32(tmp_path):
    rec = Recording(subject_id="S00",
                    channels=[ChannelSignal("c", np.array([0.5, -0.25]))],
                    sampling_rate_hz=128.0)
    write_container(rec, tmp_path / "two")
    raw = (tmp_path / "two.sgb").read_bytes()
    assert raw == np.array([0.5, -0.25], dtype="<f4").tobytes()


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteSample):
        ChannelSignal("c", np.array([1.0, np.nan]))


def test_nonfinite_rejected_at_write_after_mutation(tmp_path):
    rec = Recording(subject_id="S00",
                    channels=[ChannelSignal("c", np.array([1.0, 2.0]))],
                    sampling_rate_hz=128.0)
    rec.channels[0].samples[1] = np.inf
    with pytest.raises(NonFiniteSample):
        write_container(rec, tmp_path / "bad")


def test_header_validation(tmp_path):
    rng = np.random.default_rng(2)
    rec = make_recording(rng)
    write_container(rec, tmp_path / "r")
    header = (tmp_path / "r.sgh").read_text().splitlines()
    (tmp_path / "r.sgh").write_text(
        "\n".join(line for line in header if not line.startswith("rate=")))
    with pytest.raises(MalformedHeader):
        read_container(tmp_path / "r")


def test_duplicate_channel_names_rejected():
    with pytest.raises(MalformedHeader):
        Recording(subject_id="S",
                  channels=[ChannelSignal("c", np.zeros(4)),
                            ChannelSignal("c", np.zeros(4))],
                  sampling_rate_hz=128.0)


# -- synthetic generation ----------------------------------------------------


def pure_tone_spec(**kwargs):
    defaults = dict(
        n_subjects=1, n_channels=2, duration_s=4.0,
        band_components=(BandComponent(10.0, 20.0, (1.0,)),),
        noise_std_uv=0.0, seed=7)
    defaults.update(kwargs)
    return SyntheticSpec(**defaults)


def tone_amplitude(samples, freq_hz, duration_s):
    """Exact amplitude of an integer-bin sinusoid via its DFT line."""
    spectrum = np.fft.rfft(samples)
    return 2.0 * np.abs(spectrum[int(freq_hz * duration_s)]) / samples.size


def test_pure_sinusoid_when_noise_free():
    rec = generate_synthetic(pure_tone_spec(), 0)
    for ch in rec.channels:
        assert tone_amplitude(ch.samples, 10.0, 4.0) == pytest.approx(20.0, abs=1e-9)
        # exactly one spectral line at 10 Hz
        spectrum = np.abs(np.fft.rfft(ch.samples))
        assert np.argmax(spectrum) == 10 * 4  # 4 s window: bin = f * duration


def test_synthetic_determinism():
    a = generate_synthetic(pure_tone_spec(noise_std_uv=3.0), 0)
    b = generate_synthetic(pure_tone_spec(noise_std_uv=3.0), 0)
    for ca, cb in zip(a.channels, b.channels):
        assert np.array_equal(ca.samples, cb.samples)


def test_spectral_peak_dominates_by_20db():
    rec = generate_synthetic(pure_tone_spec(noise_std_uv=1.0, duration_s=8.0), 0)
    x = rec.channels[0].samples
    spectrum = np.abs(np.fft.rfft(x))
    peak = spectrum[10 * 8]
    other = spectrum[25 * 8]
    assert 20 * np.log10(peak / other) >= 20.0


def test_per_class_gains_and_informative_channels():
    spec = pure_tone_spec(
        band_components=(BandComponent(10.0, 20.0, (1.0, 2.0)),),
        channel_names=("C3", "C4"),
        informative_channels=("C3",))
    r0 = generate_synthetic(spec, 0)
    r1 = generate_synthetic(spec, 1)
    assert tone_amplitude(r0.channel("C3").samples, 10.0, 4.0) == \
        pytest.approx(20.0, abs=1e-9)
    assert tone_amplitude(r1.channel("C3").samples, 10.0, 4.0) == \
        pytest.approx(40.0, abs=1e-9)
    # the uninformative channel keeps unit gain for every class
    assert tone_amplitude(r1.channel("C4").samples, 10.0, 4.0) == \
        pytest.approx(20.0, abs=1e-9)


def test_invalid_component_frequency():
    with pytest.raises(InvalidSpec):
        pure_tone_spec(band_components=(BandComponent(70.0, 10.0, (1.0,)),))


def test_subject_spec_derivation_is_stable():
    base = pure_tone_spec()
    a = subject_spec(base, 3)
    b = subject_spec(base, 3)
    assert a.seed == b.seed
    assert a.subject_id == "S03"
    assert a.seed != subject_spec(base, 4).seed
