import numpy as np
import pytest

from singlem._smo_py import smo_loop as smo_loop_py
from singlem.errors import SingleClass
from singlem.svm import (
    HAVE_COMPILED_SMO,
    fit_scaler,
    kernel_matrix,
    train_binary,
    train_svm,
)


def blobs(n_per, centers, spread, seed):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, center in enumerate(centers):
        xs.append(rng.normal(size=(n_per, len(center))) * spread + center)
        ys.append(np.full(n_per, label))
    return np.concatenate(xs), np.concatenate(ys)


def test_separable_clusters_fit_exactly():
    x, y = blobs(20, [(-3.0, -3.0), (3.0, 3.0)], 0.5, 0)
    model = train_svm(x, y, C=1.0, gamma=0.5)
    assert np.array_equal(model.predict(x), y)


def test_xor_rbf_vs_linear():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    rbf = train_svm(x, y, C=10.0, gamma=2.0)
    assert np.array_equal(rbf.predict(x), y)
    linear = train_svm(x, y, C=10.0, gamma=0.0, kind="linear")
    assert np.mean(linear.predict(x) == y) < 1.0


def test_conflicting_duplicates_do_not_crash():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 2.0], [2.1, 2.0]])
    y = np.array([0, 1, 1, 1])
    model = train_svm(x, y, C=1.0, gamma=1.0)
    pred = model.predict(x[:2])
    assert np.mean(pred == y[:2]) <= 0.5


def test_single_class_rejected():
    x = np.zeros((4, 2))
    with pytest.raises(SingleClass):
        train_svm(x, np.zeros(4, dtype=int), C=1.0, gamma=1.0)


def test_duplicate_non_support_point_invariance():
    x, y = blobs(25, [(-2.0, 0.0), (2.0, 0.0)], 0.4, 1)
    ypm = np.where(y == 0, 1.0, -1.0)
    base = train_binary(x, ypm, C=1.0, gamma=0.5)
    # pick a training point that is not a support vector
    support_rows = {tuple(r) for r in base.support_x}
    non_support = next(i for i in range(x.shape[0])
                       if tuple(x[i]) not in support_rows)
    x_dup = np.concatenate([x, x[non_support:non_support + 1]])
    y_dup = np.concatenate([ypm, ypm[non_support:non_support + 1]])
    dup = train_binary(x_dup, y_dup, C=1.0, gamma=0.5)
    grid = np.random.default_rng(2).normal(size=(50, 2)) * 2.0
    assert np.max(np.abs(base.decision(grid) - dup.decision(grid))) < 1e-6


def test_three_class_one_vs_one():
    x, y = blobs(15, [(-4.0, 0.0), (0.0, 4.0), (4.0, 0.0)], 0.5, 3)
    model = train_svm(x, y, C=1.0, gamma=0.5)
    assert len(model.machines) == 3
    assert np.array_equal(model.predict(x), y)
    assert np.array_equal(model.predict(x), model.predict(x))


def test_rbf_kernel_values():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    k = kernel_matrix(a, a, "rbf_svm", gamma=2.0)
    assert k[0, 0] == pytest.approx(1.0)
    assert k[0, 1] == pytest.approx(np.exp(-2.0))
    lin = kernel_matrix(a, a, "linear", gamma=0.0)
    assert np.array_equal(lin, a @ a.T)


@pytest.mark.skipif(not HAVE_COMPILED_SMO,
                    reason="compiled SMO extension not built")
def test_compiled_and_pure_solvers_bit_identical():
    from singlem._smo import smo_loop as smo_loop_c

    for seed in range(4):
        x, y = blobs(30, [(-1.5, 0.5), (1.5, -0.5)], 1.0, seed)
        ypm = np.ascontiguousarray(np.where(y == 0, 1.0, -1.0))
        K = np.ascontiguousarray(kernel_matrix(x, x, "rbf_svm", 0.7))
        a_c, g_c, it_c, gap_c = smo_loop_c(K, ypm, 1.0, 1e-3, 100_000)
        a_p, g_p, it_p, gap_p = smo_loop_py(K, ypm, 1.0, 1e-3, 100_000)
        assert it_c == it_p
        assert gap_c == gap_p
        assert np.asarray(a_c).tobytes() == a_p.tobytes()
        assert np.asarray(g_c).tobytes() == g_p.tobytes()


def test_scaler_statistics_and_constant_columns():
    rng = np.random.default_rng(4)
    x = rng.normal(3.0, 2.0, size=(40, 3))
    x[:, 2] = 7.0  # constant column must not divide by zero
    scaler = fit_scaler(x)
    z = scaler.apply(x)
    assert np.max(np.abs(z[:, :2].mean(axis=0))) < 1e-12
    assert np.allclose(z[:, :2].std(axis=0), 1.0)
    assert np.allclose(z[:, 2], 0.0)
