"""Kernel SVM trained by sequential minimal optimization.

The inner solver loop has two interchangeable implementations: a Cython
extension (singlem._smo) and a numpy fallback (singlem._smo_py). The compiled
one is picked at import when available; set SINGLEM_PURE_PY=1 to force the
fallback. Both produce bit-identical models. Multiclass problems train
one-vs-one machines with majority voting.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, SingleClass

if os.environ.get("SINGLEM_PURE_PY"):
    from ._smo_py import smo_loop

    HAVE_COMPILED_SMO = False
else:
    try:
        from ._smo import smo_loop

        HAVE_COMPILED_SMO = True
    except ImportError:
        from ._smo_py import smo_loop

        HAVE_COMPILED_SMO = False

KKT_TOL = 1e-3


def kernel_matrix(a: np.ndarray, b: np.ndarray, kind: str,
                  gamma: float) -> np.ndarray:
    """Gram matrix between row sets: RBF exp(-gamma*||x-y||^2) or plain dot."""
    if kind == "linear":
        return a @ b.T
    if kind == "rbf_svm" or kind == "rbf":
        sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * (a @ b.T))
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise ValueError(f"unknown kernel kind {kind!r}")


def _bias(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, C: float) -> float:
    """Average -y*grad over free vectors; midpoint of the bound sets otherwise."""
    v = -(y * grad)
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        return float(v[free].mean())
    pos = y > 0.0
    mask_up = np.where(pos, alpha < C, alpha > 0.0)
    mask_low = np.where(pos, alpha > 0.0, alpha < C)
    hi = np.where(mask_up, v, -np.inf).max()
    lo = np.where(mask_low, v, np.inf).min()
    if not np.isfinite(hi) or not np.isfinite(lo):
        return 0.0
    return float((hi + lo) / 2.0)


@dataclass
class BinarySVM:
    """A trained two-class machine: support data, dual coefficients, bias."""

    support_x: np.ndarray  # (m, dim)
    coef: np.ndarray  # (m,) alpha_i * y_i over support vectors
    bias: float
    kind: str
    gamma: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        k = kernel_matrix(np.atleast_2d(x), self.support_x, self.kind, self.gamma)
        return k @ self.coef + self.bias


def train_binary(x: np.ndarray, y: np.ndarray, C: float, gamma: float,
                 kind: str = "rbf_svm", max_iter: int | None = None) -> BinarySVM:
    """SMO fit on labels +-1; converged when the max KKT violation is < 1e-3."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.size
    if max_iter is None:
        max_iter = max(100_000, 200 * n)
    K = np.ascontiguousarray(kernel_matrix(x, x, kind, gamma))
    alpha, grad, iterations, gap = smo_loop(K, y, float(C), KKT_TOL, max_iter)
    alpha = np.asarray(alpha)
    grad = np.asarray(grad)
    if iterations >= max_iter and gap > KKT_TOL:
        raise NoConvergence(
            f"SMO hit the {max_iter}-iteration cap with KKT gap {gap:.3e}")
    b = _bias(alpha, grad, y, C)
    support = alpha > 0.0
    return BinarySVM(support_x=x[support], coef=alpha[support] * y[support],
                     bias=b, kind=kind, gamma=gamma)


@dataclass
class SVMModel:
    """One-vs-one ensemble over the observed class set."""

    kind: str
    classes: tuple[int, ...]
    machines: list[tuple[int, int, BinarySVM]]
    C: float
    gamma: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        votes = np.zeros((n, len(self.classes)), dtype=np.int64)
        scores = np.zeros((n, len(self.classes)))
        index = {c: k for k, c in enumerate(self.classes)}
        for ca, cb, machine in self.machines:
            d = machine.decision(x)
            toward_a = d >= 0.0
            votes[toward_a, index[ca]] += 1
            votes[~toward_a, index[cb]] += 1
            scores[:, index[ca]] += d
            scores[:, index[cb]] -= d
        out = np.empty(n, dtype=np.int64)
        for row in range(n):
            best = np.flatnonzero(votes[row] == votes[row].max())
            if best.size > 1:
                # vote tie: fall back on aggregate decision values, then on
                # the smallest class index
                sub = best[scores[row, best] == scores[row, best].max()]
                best = sub
            out[row] = self.classes[best[0]]
        return out


def train_svm(x: np.ndarray, labels: np.ndarray, C: float, gamma: float,
              kind: str = "rbf_svm") -> SVMModel:
    """Train a (multi)class SVM; raises SingleClass below two classes."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = tuple(sorted(set(labels.tolist())))
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes}")
    machines = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            ca, cb = classes[ai], classes[bi]
            mask = (labels == ca) | (labels == cb)
            y = np.where(labels[mask] == ca, 1.0, -1.0)
            machines.append((ca, cb, train_binary(x[mask], y, C, gamma, kind)))
    return SVMModel(kind=kind, classes=classes, machines=machines,
                    C=float(C), gamma=float(gamma))


@dataclass(frozen=True)
class Scaler:
    """Per-dimension standardization, fit on training data only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def fit_scaler(x: np.ndarray) -> Scaler:
    x = np.asarray(x, dtype=np.float64)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Scaler(mean=x.mean(axis=0), std=std)
