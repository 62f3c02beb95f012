"""Frozen-feature extraction and subject-held-out evaluation.

Trials are encoded channel by channel with frozen weights; per-channel token
representations are flattened and concatenated (late fusion). Evaluation is
leave-one-subject-out: the remaining subjects are split 80/20 stratified by
label, hyperparameters are tuned on the validation part by macro-F1, the
model is retrained on the 80% part, and metrics are reported on the held-out
subject. Standardization statistics always come from the training part only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamDict
from .dsp import PreprocessConfig, preprocess_channel
from .encoder import EncoderConfig, encode
from .errors import (
    EmptyInput,
    LengthMismatch,
    TooFewBins,
    TooFewSubjects,
)
from .io import Recording
from .svm import Scaler, fit_scaler, train_svm
from .tokenizer import TokenizerParams, tokenize


@dataclass(frozen=True)
class Trial:
    """One labeled trial: preprocessed per-channel signals at 128 Hz."""

    subject_id: str
    label: int
    channel_names: tuple[str, ...]
    signals: np.ndarray  # (n_channels, n_samples)

    def __post_init__(self):
        sig = np.asarray(self.signals, dtype=np.float64)
        object.__setattr__(self, "signals", sig)
        if sig.ndim != 2 or sig.shape[0] != len(self.channel_names):
            raise LengthMismatch(
                f"signals {sig.shape} do not match {len(self.channel_names)} channels")


@dataclass(frozen=True)
class TrialFeatures:
    """Late-fusion feature vector with per-channel slice bookkeeping."""

    subject_id: str
    label: int
    vector: np.ndarray
    channel_slices: dict[str, tuple[int, int]]

    def channel_vector(self, name: str) -> np.ndarray:
        start, end = self.channel_slices[name]
        return self.vector[start:end]


def trial_from_recording(rec: Recording,
                         cfg: PreprocessConfig | None = None) -> Trial:
    """Preprocess a labeled recording into a trial (artifact rejection off).

    Recordings whose channels are already scaled are taken as preprocessed
    and used verbatim.
    """
    if rec.label is None:
        raise EmptyInput(f"recording {rec.subject_id!r} carries no label")
    if all(c.scaled for c in rec.channels):
        signals = np.stack([c.samples for c in rec.channels])
    else:
        if cfg is None:
            cfg = PreprocessConfig(reject_enabled=False)
        signals = np.stack([
            preprocess_channel(c.samples, rec.sampling_rate_hz, cfg)[0]
            for c in rec.channels])
    return Trial(subject_id=rec.subject_id, label=rec.label,
                 channel_names=tuple(c.name for c in rec.channels),
                 signals=signals)


def extract_features(trial: Trial, params: ParamDict, cfg: EncoderConfig,
                     tok_params: TokenizerParams | None = None) -> TrialFeatures:
    """Encode every channel with frozen weights and concatenate flattened reps."""
    if tok_params is None:
        tok_params = TokenizerParams(token_len=cfg.token_len)
    pieces = []
    slices: dict[str, tuple[int, int]] = {}
    offset = 0
    with ad.no_grad():
        for name, signal in zip(trial.channel_names, trial.signals):
            tokens = tokenize(signal, tok_params)
            rep = encode(tokens, params, cfg).data
            flat = rep.reshape(-1)
            slices[name] = (offset, offset + flat.size)
            offset += flat.size
            pieces.append(flat)
    return TrialFeatures(subject_id=trial.subject_id, label=trial.label,
                         vector=np.concatenate(pieces), channel_slices=slices)


def fourier_features(trial: Trial, k_per_second: int,
                     rate_hz: float = 128.0) -> TrialFeatures:
    """Handcrafted baseline: top-k spectral coefficients per second per channel.

    Coefficients are ranked by magnitude (ties broken by ascending bin index);
    the feature vector is the selected magnitudes followed by their phases.
    """
    pieces = []
    slices: dict[str, tuple[int, int]] = {}
    offset = 0
    for name, signal in zip(trial.channel_names, trial.signals):
        k_total = int(round(k_per_second * signal.size / rate_hz))
        spectrum = np.fft.rfft(signal)
        if k_total < 1 or k_total > spectrum.size:
            raise TooFewBins(
                f"need {k_total} bins from {spectrum.size} available")
        mags = np.abs(spectrum)
        order = np.lexsort((np.arange(spectrum.size), -mags))[:k_total]
        feat = np.concatenate([mags[order], np.angle(spectrum[order])])
        slices[name] = (offset, offset + feat.size)
        offset += feat.size
        pieces.append(feat)
    return TrialFeatures(subject_id=trial.subject_id, label=trial.label,
                         vector=np.concatenate(pieces), channel_slices=slices)


# -- metrics ------------------------------------------------------------------


def confusion_matrix(y_true, y_pred, labels: tuple[int, ...]) -> np.ndarray:
    index = {c: k for k, c in enumerate(labels)}
    m = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        m[index[int(t)], index[int(p)]] += 1
    return m


def metrics(y_true, y_pred,
            labels: tuple[int, ...] | None = None) -> tuple[float, float, float]:
    """(accuracy, macro-F1, Cohen's kappa) from hand-built confusion counts.

    A class with zero F1 denominator contributes 0 to the macro average. When
    expected agreement is 1 (both sides constant), kappa is 1 for perfect
    agreement and 0 otherwise.
    """
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true vs {len(y_pred)} predicted")
    if not y_true:
        raise EmptyInput("no predictions to score")
    if labels is None:
        labels = tuple(sorted({int(v) for v in y_true} | {int(v) for v in y_pred}))
    m = confusion_matrix(y_true, y_pred, labels)
    total = m.sum()
    accuracy = float(np.trace(m)) / total

    f1_terms = []
    for k in range(len(labels)):
        tp = m[k, k]
        denom = 2 * tp + (m[k].sum() - tp) + (m[:, k].sum() - tp)
        f1_terms.append(2.0 * tp / denom if denom > 0 else 0.0)
    macro_f1 = float(np.mean(f1_terms))

    p_o = accuracy
    p_e = float((m.sum(axis=1) * m.sum(axis=0)).sum()) / (total * total)
    if p_e >= 1.0:
        kappa = 1.0 if p_o >= 1.0 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return accuracy, macro_f1, float(kappa)


# -- hyperparameter search ----------------------------------------------------


@dataclass(frozen=True)
class SearchGrid:
    C_values: tuple[float, ...]
    gamma_values: tuple[float, ...]


def default_grid() -> SearchGrid:
    return SearchGrid(C_values=tuple(np.logspace(-2, 3, 7)),
                      gamma_values=tuple(np.logspace(-4, 1, 6)))


def tune_hyperparams(train_x: np.ndarray, train_y: np.ndarray,
                     val_x: np.ndarray, val_y: np.ndarray,
                     grid: SearchGrid, kind: str = "rbf_svm") -> tuple[float, float]:
    """Exhaustive grid argmax of validation macro-F1; ties prefer the
    smallest C, then the smallest gamma."""
    best = (-1.0, 0.0, 0.0)
    labels = tuple(sorted({int(v) for v in train_y} | {int(v) for v in val_y}))
    for c_value in grid.C_values:
        for gamma in grid.gamma_values:
            model = train_svm(train_x, train_y, c_value, gamma, kind)
            _, f1, _ = metrics(val_y, model.predict(val_x), labels)
            if f1 > best[0]:
                best = (f1, c_value, gamma)
    return best[1], best[2]


# -- leave-one-subject-out ----------------------------------------------------


@dataclass
class FoldResult:
    test_subject: str
    n_test: int
    accuracy: float
    macro_f1: float
    kappa: float
    confusion: np.ndarray
    C: float
    gamma: float
    train_subjects: frozenset[str]
    val_subjects: frozenset[str]
    scaler: Scaler
    train_indices: tuple[int, ...]
    val_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


@dataclass
class EvalReport:
    classes: tuple[int, ...]
    folds: list[FoldResult] = field(default_factory=list)

    def mean_std(self, attr: str) -> tuple[float, float]:
        values = np.array([getattr(f, attr) for f in self.folds])
        return float(values.mean()), float(values.std())

    def total_confusion(self) -> np.ndarray:
        return np.sum([f.confusion for f in self.folds], axis=0)

    def summary_text(self) -> str:
        lines = [f"folds={len(self.folds)} classes=" +
                 ",".join(map(str, self.classes))]
        for k, f in enumerate(self.folds):
            lines.append(
                f"fold={k} subject={f.test_subject} n_test={f.n_test} "
                f"accuracy={f.accuracy:.4f} macro_f1={f.macro_f1:.4f} "
                f"kappa={f.kappa:.4f} C={f.C!r} gamma={f.gamma!r}")
        for attr in ("accuracy", "macro_f1", "kappa"):
            mean, std = self.mean_std(attr)
            lines.append(f"{attr}: {mean:.4f} +/- {std:.4f}")
        lines.append("confusion (rows=true, cols=predicted):")
        for row in self.total_confusion():
            lines.append("  " + " ".join(f"{v:6d}" for v in row))
        return "\n".join(lines) + "\n"

    def csv_lines(self) -> list[str]:
        lines = ["fold,subject,n_test,accuracy,macro_f1,kappa,C,gamma"]
        for k, f in enumerate(self.folds):
            lines.append(f"{k},{f.test_subject},{f.n_test},{f.accuracy!r},"
                         f"{f.macro_f1!r},{f.kappa!r},{f.C!r},{f.gamma!r}")
        for stat, reducer in (("mean", np.mean), ("std", np.std)):
            acc = reducer([f.accuracy for f in self.folds])
            f1 = reducer([f.macro_f1 for f in self.folds])
            kap = reducer([f.kappa for f in self.folds])
            lines.append(f"{stat},,,{float(acc)!r},{float(f1)!r},{float(kap)!r},,")
        return lines


def stratified_split(labels: np.ndarray, val_fraction: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-label shuffled split; every label keeps at least one training row."""
    train_idx, val_idx = [], []
    for label in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == label)
        idx = rng.permutation(idx)
        n_val = int(round(val_fraction * idx.size))
        n_val = min(max(n_val, 1), idx.size - 1) if idx.size > 1 else 0
        val_idx.extend(idx[:n_val].tolist())
        train_idx.extend(idx[n_val:].tolist())
    return (np.array(sorted(train_idx), dtype=np.int64),
            np.array(sorted(val_idx), dtype=np.int64))


def loso_from_features(features: list[TrialFeatures],
                       grid: SearchGrid | None = None, seed: int = 0,
                       kind: str = "rbf_svm") -> EvalReport:
    """LOSO over pre-extracted features; see module docstring for protocol."""
    if not features:
        raise EmptyInput("no trials to evaluate")
    grid = grid or default_grid()
    subjects = sorted({f.subject_id for f in features})
    if len(subjects) < 2:
        raise TooFewSubjects(f"LOSO needs >= 2 subjects, got {len(subjects)}")
    classes = tuple(sorted({f.label for f in features}))
    x_all = np.stack([f.vector for f in features])
    y_all = np.array([f.label for f in features])
    subj_all = np.array([f.subject_id for f in features])

    report = EvalReport(classes=classes)
    for fold_i, held_out in enumerate(subjects):
        test_mask = subj_all == held_out
        rest_idx = np.flatnonzero(~test_mask)
        rng = np.random.default_rng([seed, fold_i])
        tr_rel, va_rel = stratified_split(y_all[rest_idx], 0.2, rng)
        tr_idx = rest_idx[tr_rel]
        va_idx = rest_idx[va_rel]
        te_idx = np.flatnonzero(test_mask)

        scaler = fit_scaler(x_all[tr_idx])
        x_tr = scaler.apply(x_all[tr_idx])
        x_va = scaler.apply(x_all[va_idx])
        x_te = scaler.apply(x_all[te_idx])

        c_best, g_best = tune_hyperparams(x_tr, y_all[tr_idx], x_va,
                                          y_all[va_idx], grid, kind)
        model = train_svm(x_tr, y_all[tr_idx], c_best, g_best, kind)
        pred = model.predict(x_te)
        acc, f1, kappa = metrics(y_all[te_idx], pred, classes)
        report.folds.append(FoldResult(
            test_subject=held_out, n_test=int(te_idx.size), accuracy=acc,
            macro_f1=f1, kappa=kappa,
            confusion=confusion_matrix(y_all[te_idx], pred, classes),
            C=float(c_best), gamma=float(g_best),
            train_subjects=frozenset(subj_all[tr_idx].tolist()),
            val_subjects=frozenset(subj_all[va_idx].tolist()),
            scaler=scaler,
            train_indices=tuple(tr_idx.tolist()),
            val_indices=tuple(va_idx.tolist()),
            test_indices=tuple(te_idx.tolist())))
    return report


def loso_evaluate(trials: list[Trial], params: ParamDict | None = None,
                  cfg: EncoderConfig | None = None,
                  tok_params: TokenizerParams | None = None,
                  feature: str = "encoder", k_per_second: int = 8,
                  grid: SearchGrid | None = None, seed: int = 0) -> EvalReport:
    """Extract features of the requested kind, then run the LOSO protocol."""
    if feature == "encoder":
        if params is None or cfg is None:
            raise EmptyInput("encoder features need weights and a config")
        feats = [extract_features(t, params, cfg, tok_params) for t in trials]
    elif feature == "fourier":
        feats = [fourier_features(t, k_per_second) for t in trials]
    else:
        raise ValueError(f"unknown feature kind {feature!r}")
    return loso_from_features(feats, grid=grid, seed=seed)


def per_channel_evaluate(trials: list[Trial], params: ParamDict,
                         cfg: EncoderConfig,
                         tok_params: TokenizerParams | None = None,
                         grid: SearchGrid | None = None, seed: int = 0,
                         ) -> dict[str, tuple[float, float, float]]:
    """LOSO restricted to each channel's feature slice, channel by channel."""
    if not trials:
        raise EmptyInput("no trials to evaluate")
    feats = [extract_features(t, params, cfg, tok_params) for t in trials]
    channels = trials[0].channel_names
    results: dict[str, tuple[float, float, float]] = {}
    for name in channels:
        sliced = [TrialFeatures(subject_id=f.subject_id, label=f.label,
                                vector=f.channel_vector(name),
                                channel_slices={name: (0, f.channel_vector(name).size)})
                  for f in feats]
        report = loso_from_features(sliced, grid=grid, seed=seed)
        results[name] = (report.mean_std("accuracy")[0],
                         report.mean_std("macro_f1")[0],
                         report.mean_std("kappa")[0])
    return results


def per_channel_csv_lines(results: dict[str, tuple[float, float, float]]) -> list[str]:
    """channel,accuracy,f1,kappa,normalized_accuracy with min-max scaling."""
    accs = np.array([v[0] for v in results.values()])
    span = accs.max() - accs.min()
    lines = ["channel,accuracy,f1,kappa,normalized_accuracy"]
    for name, (acc, f1, kappa) in results.items():
        norm = 1.0 if span == 0 else float((acc - accs.min()) / span)
        lines.append(f"{name},{acc!r},{f1!r},{kappa!r},{norm!r}")
    return lines
