import json

import numpy as np
import pytest

from singlem.cli import main
from singlem.io import read_container

TOY_ENCODER_KEYS = """
preset = toy
overlap = 4
"""

PRETRAIN_CFG = TOY_ENCODER_KEYS + """
seed = 5
batch_size = 4
seq_len_min = 3
seq_len_max = 5
max_steps = 10
lr_max = 1e-3
lr_min = 1e-5
"""


def write_cfg(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def corpus_cfg(tmp_path):
    return write_cfg(tmp_path, "synth.cfg", """
mode = corpus
n_subjects = 2
n_channels = 1
duration_s = 20
components = 10:30:1.4|0.6, 25:12:0.6|1.4
noise_std_uv = 3
classes = 2
seed = 9
""")


def trials_cfg(tmp_path):
    return write_cfg(tmp_path, "trials.cfg", """
mode = trials
n_subjects = 3
n_channels = 2
channel_names = C3,C4
duration_s = 2
components = 10:30:1.5|0.3, 25:30:0.3|1.5
noise_std_uv = 3
classes = 2
trials_per_class = 6
seed = 13
""")


def run(argv):
    return main(argv)


def test_synth_and_preprocess_pipeline(tmp_path, capsys):
    raw = tmp_path / "raw"
    assert run(["synth", "--config", corpus_cfg(tmp_path),
                "--out", str(raw)]) == 0
    headers = sorted(raw.glob("*.sgh"))
    assert len(headers) == 4  # 2 subjects x 2 classes
    pre = tmp_path / "pre"
    assert run(["preprocess", "--out", str(pre), str(raw)]) == 0
    outs = sorted(pre.glob("*.sgh"))
    assert len(outs) >= 4
    rec = read_container(outs[0])
    assert rec.sampling_rate_hz == 128.0
    assert all(c.scaled for c in rec.channels)
    manifest = json.loads((pre / "run_manifest.json").read_text())
    assert manifest["command"] == "preprocess"


def test_preprocess_splits_on_spike(tmp_path):
    from singlem.io import ChannelSignal, Recording, write_container

    t = np.arange(10 * 512) / 512.0
    x = 50.0 * np.sin(2 * np.pi * 10.0 * t)
    x[2560:2575] += 300.0
    rec = Recording(subject_id="S00",
                    channels=[ChannelSignal("C3", x)], sampling_rate_hz=512.0)
    raw = tmp_path / "raw"
    raw.mkdir()
    write_container(rec, raw / "spiky")
    out = tmp_path / "pre"
    assert run(["preprocess", "--out", str(out), str(raw)]) == 0
    assert len(sorted(out.glob("*.sgh"))) >= 2


def test_missing_config_key_is_usage_error(tmp_path, capsys):
    bad = write_cfg(tmp_path, "bad.cfg", "mode = corpus\n")
    code = run(["synth", "--config", bad, "--seed", "1",
                "--out", str(tmp_path / "x")])
    captured = capsys.readouterr()
    assert code == 2
    assert "n_subjects" in captured.err
    assert "E_CONFIG" in captured.err


def make_corpus(tmp_path):
    raw = tmp_path / "raw"
    run(["synth", "--config", corpus_cfg(tmp_path), "--out", str(raw)])
    pre = tmp_path / "pre"
    run(["preprocess", "--out", str(pre), str(raw)])
    return pre


def test_pretrain_writes_history_and_checkpoint(tmp_path):
    pre = make_corpus(tmp_path)
    out = tmp_path / "run"
    cfg = write_cfg(tmp_path, "pt.cfg", PRETRAIN_CFG)
    assert run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(out)]) == 0
    lines = (out / "loss_history.csv").read_text().strip().splitlines()
    assert lines[0].startswith("step,lr,total")
    assert len(lines) == 11  # header + 10 steps
    assert (out / "model.ckpt").exists()
    assert (out / "model.ckpb").exists()


def test_pretrain_determinism_across_runs(tmp_path):
    pre = make_corpus(tmp_path)
    cfg = write_cfg(tmp_path, "pt.cfg", PRETRAIN_CFG)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(out_a)]) == 0
    assert run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(out_b)]) == 0
    assert (out_a / "model.ckpb").read_bytes() == (out_b / "model.ckpb").read_bytes()
    assert (out_a / "model.ckpt").read_bytes() == (out_b / "model.ckpt").read_bytes()
    assert (out_a / "loss_history.csv").read_bytes() == \
        (out_b / "loss_history.csv").read_bytes()


def test_pretrain_resume_matches_uninterrupted(tmp_path):
    pre = make_corpus(tmp_path)
    full_cfg = write_cfg(tmp_path, "full.cfg", PRETRAIN_CFG)
    stop_cfg = write_cfg(tmp_path, "stop.cfg", PRETRAIN_CFG + "stop_after = 5\n")
    out_full, out_part = tmp_path / "full", tmp_path / "part"
    assert run(["pretrain", "--config", full_cfg, "--corpus", str(pre),
                "--out", str(out_full)]) == 0
    assert run(["pretrain", "--config", stop_cfg, "--corpus", str(pre),
                "--out", str(out_part)]) == 0
    assert run(["pretrain", "--config", full_cfg, "--corpus", str(pre),
                "--out", str(out_part),
                "--resume", str(out_part / "model.ckpt")]) == 0
    assert (out_full / "model.ckpb").read_bytes() == \
        (out_part / "model.ckpb").read_bytes()
    assert (out_full / "loss_history.csv").read_bytes() == \
        (out_part / "loss_history.csv").read_bytes()


def test_pretrain_rejects_corrupt_checkpoint(tmp_path, capsys):
    pre = make_corpus(tmp_path)
    cfg = write_cfg(tmp_path, "pt.cfg", PRETRAIN_CFG)
    out = tmp_path / "run"
    assert run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(out)]) == 0
    blob = bytearray((out / "model.ckpb").read_bytes())
    blob[5] ^= 0x01
    (out / "model.ckpb").write_bytes(bytes(blob))
    code = run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(out), "--resume", str(out / "model.ckpt")])
    captured = capsys.readouterr()
    assert code == 1
    assert "E_CHECKPOINT_INTEGRITY" in captured.err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Corpus -> checkpoint -> trials, shared across CLI feature tests."""
    tmp_path = tmp_path_factory.mktemp("pipeline")
    pre = make_corpus(tmp_path)
    cfg = write_cfg(tmp_path, "pt.cfg", PRETRAIN_CFG)
    run_dir = tmp_path / "run"
    assert run(["pretrain", "--config", cfg, "--corpus", str(pre),
                "--out", str(run_dir)]) == 0
    trials = tmp_path / "trials"
    assert run(["synth", "--config", trials_cfg(tmp_path),
                "--out", str(trials)]) == 0
    trials_pre = tmp_path / "trials_pre"
    # short trials need a shorter filter than the 513-tap default; with
    # rejection off the multi-channel trial structure is preserved
    pp_cfg = write_cfg(tmp_path, "pp.cfg", "reject = false\nnum_taps = 65\n")
    assert run(["preprocess", "--config", pp_cfg, "--out", str(trials_pre),
                str(trials)]) == 0
    rec = read_container(sorted(trials_pre.glob("*.sgh"))[0])
    assert len(rec.channels) == 2
    return {"tmp": tmp_path, "run": run_dir, "trials": trials_pre}


def test_extract_encoder_features(pipeline):
    out = pipeline["tmp"] / "features.csv"
    assert run(["extract", "--trials", str(pipeline["trials"]),
                "--checkpoint", str(pipeline["run"] / "model.ckpt"),
                "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("# channel_slices=")
    assert len(lines) == 2 + 3 * 2 * 6  # slices + header + trials
    # 2 s trial, 16-sample tokens, stride 12 -> 21 tokens x repr 4 x 2 channels
    width = len(lines[2].split(",")) - 2
    assert width == 2 * 21 * 4


def test_extract_fourier_features(pipeline):
    out = pipeline["tmp"] / "features_fourier.csv"
    assert run(["extract", "--trials", str(pipeline["trials"]),
                "--fourier", "k=8", "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    width = len(lines[2].split(",")) - 2
    assert width == 2 * 2 * 8 * 2  # channels x (mag+phase) x k x seconds


def test_extract_empty_dir_errors(tmp_path, capsys):
    empty = tmp_path / "none"
    empty.mkdir()
    code = run(["extract", "--trials", str(empty),
                "--fourier", "k=8", "--out", str(tmp_path / "f.csv")])
    captured = capsys.readouterr()
    assert code == 1
    assert "E_EMPTY_INPUT" in captured.err


def test_evaluate_from_features_and_reproducibility(pipeline):
    features = pipeline["tmp"] / "features.csv"
    if not features.exists():
        run(["extract", "--trials", str(pipeline["trials"]),
             "--checkpoint", str(pipeline["run"] / "model.ckpt"),
             "--out", str(features)])
    out_a = pipeline["tmp"] / "eval_a"
    out_b = pipeline["tmp"] / "eval_b"
    for out in (out_a, out_b):
        assert run(["evaluate", "--features", str(features),
                    "--seed", "3", "--out", str(out)]) == 0
    report = (out_a / "report.csv").read_text().splitlines()
    assert report[0].startswith("fold,")
    assert sum(1 for ln in report if ln and ln[0].isdigit()) == 3  # 3 subjects
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    assert (out_a / "summary.txt").read_bytes() == (out_b / "summary.txt").read_bytes()


def test_synth_preprocess_extract_idempotent(tmp_path):
    cfg = corpus_cfg(tmp_path)
    raw_a, raw_b = tmp_path / "ra", tmp_path / "rb"
    for out in (raw_a, raw_b):
        assert run(["synth", "--config", cfg, "--out", str(out)]) == 0
    sample = sorted(raw_a.glob("*.sgb"))[0].name
    assert (raw_a / sample).read_bytes() == (raw_b / sample).read_bytes()

    pre_a, pre_b = tmp_path / "pa", tmp_path / "pb"
    for src, out in ((raw_a, pre_a), (raw_b, pre_b)):
        assert run(["preprocess", "--out", str(out), str(src)]) == 0
    sample = sorted(pre_a.glob("*.sgb"))[0].name
    assert (pre_a / sample).read_bytes() == (pre_b / sample).read_bytes()

    feats_a, feats_b = tmp_path / "fa.csv", tmp_path / "fb.csv"
    for src, out in ((pre_a, feats_a), (pre_b, feats_b)):
        assert run(["extract", "--trials", str(src), "--fourier", "k=8",
                    "--out", str(out)]) == 0
    assert feats_a.read_bytes() == feats_b.read_bytes()


def test_evaluate_per_channel(pipeline):
    out = pipeline["tmp"] / "eval_pc"
    assert run(["evaluate", "--trials", str(pipeline["trials"]),
                "--checkpoint", str(pipeline["run"] / "model.ckpt"),
                "--per-channel", "--seed", "3", "--out", str(out)]) == 0
    lines = (out / "per_channel.csv").read_text().strip().splitlines()
    assert lines[0] == "channel,accuracy,f1,kappa,normalized_accuracy"
    assert len(lines) == 3  # header + C3 + C4
