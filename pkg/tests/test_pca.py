import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from submort.core import AgeGrid
from submort.pca import BasisError, ReferenceMatrix, build_basis, svd

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def matrices(max_n=12, max_g=8):
    return st.tuples(st.integers(1, max_n), st.integers(1, max_g)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite))


def test_identity_singular_values():
    _, D, _ = svd(np.eye(3))
    np.testing.assert_allclose(D, [1, 1, 1], atol=1e-14)


def test_rank_one_outer_product():
    u = np.array([1, 2, 2]) / 3
    v = np.array([3, 0, 4]) / 5
    _, D, V = svd(10 * np.outer(u, v))
    np.testing.assert_allclose(D, [10, 0, 0], atol=1e-12)
    assert abs(abs(V[:, 0] @ v) - 1) < 1e-12


def test_random_20x5_reconstruction():
    X = np.random.default_rng(1).normal(size=(20, 5))
    U, D, V = svd(X)
    assert np.linalg.norm(X - U @ np.diag(D) @ V.T) < 1e-8 * np.linalg.norm(X)


def test_non_finite_rejected_with_cell():
    X = np.ones((3, 4))
    X[1, 2] = np.nan
    with pytest.raises(BasisError, match="row 1, column 2"):
        svd(X)
    with pytest.raises(BasisError, match="row 1, column 2"):
        ReferenceMatrix(X, AgeGrid((0, 1, 5, 10)))


@given(matrices())
def test_svd_contract(X):
    U, D, V = svd(X)
    r = min(X.shape)
    assert U.shape == (X.shape[0], r) and V.shape == (X.shape[1], r)
    assert np.linalg.norm(X - U @ np.diag(D) @ V.T) <= 1e-8 * max(np.linalg.norm(X), 1e-300)
    np.testing.assert_allclose(V.T @ V, np.eye(r), atol=1e-10)
    assert np.all(np.diff(D) <= 0) and np.all(D >= 0)


@given(matrices(), st.floats(0.1, 50))
def test_svd_scale_equivariance(X, c):
    _, D, _ = svd(X)
    _, Dc, _ = svd(c * X)
    np.testing.assert_allclose(Dc, c * D, rtol=1e-9, atol=1e-9 * c * max(D.max(initial=0), 1))


def test_full_rank_basis_ratios_sum_to_one():
    X = np.random.default_rng(2).normal(size=(6, 4))
    b = build_basis(X, 4)
    assert b.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-12)


def test_duplicated_rows_give_one_component_along_the_row():
    row = np.array([-6.0, -8.5, -9.0, -7.0, -4.0])
    X = np.tile(row, (7, 1))
    U, D, V = svd(X)
    assert np.all(D[1:] < 1e-10 * D[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = build_basis(X, 1)
    # mean schedule is negative, so the positive-inner-product column is -row/|row|
    np.testing.assert_allclose(b.Y[:, 0], row / np.linalg.norm(row), atol=1e-12)


def test_basis_orthonormal_with_descending_singular_values(basis):
    assert basis.Y.shape == (19, 3)
    np.testing.assert_allclose(basis.Y.T @ basis.Y, np.eye(3), atol=1e-10)
    assert np.all(np.diff(basis.singular_values) <= 0)


@given(matrices(max_n=10, max_g=6))
def test_sign_convention_holds(X):
    r = min(X.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = build_basis(X, r)
    ip = X.mean(axis=0) @ b.Y
    tol = 1e-12 * max(1.0, np.abs(X.mean(axis=0)).sum())
    assert np.all(ip >= -tol)


def test_first_component_traces_mortality_curve(standard):
    from submort.simulator import reference_schedules

    X = reference_schedules(standard, seed=5)
    b = build_basis(X, 3)
    assert b.explained_variance_ratio[0] > 0.99
    y1 = b.Y[:, 0]
    assert np.all(X.X.mean(axis=0) @ b.Y >= 0)
    # same sign as the log-rate curve: child dip then rise with age
    lm = np.log(standard.m)
    assert np.corrcoef(y1, lm)[0, 1] > 0.99


@given(st.permutations(range(9)))
def test_row_order_does_not_change_basis(perm):
    X = np.random.default_rng(4).normal(-5, 1, size=(9, 6))
    a = build_basis(X, 3).Y
    b = build_basis(X[list(perm)], 3).Y
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_build_basis_deterministic():
    X = np.random.default_rng(6).normal(size=(30, 19))
    assert build_basis(X, 3).Y.tobytes() == build_basis(X.copy(), 3).Y.tobytes()


def test_component_count_checks():
    X = np.random.default_rng(0).normal(size=(4, 6))
    with pytest.raises(BasisError):
        build_basis(X, 0)
    with pytest.raises(BasisError):
        build_basis(X, 5)
    with pytest.warns(UserWarning):
        build_basis(X, 1)


def test_reference_rows_with_zero_deaths_rejected():
    from submort.core import DatasetError, MortalityDataset

    d = MortalityDataset(["s"], [2000], np.array([[[0.0]], [[5.0]]]), np.full((2, 1, 1), 100.0), AgeGrid((0, 1)))
    with pytest.raises(DatasetError, match="no positive rate"):
        ReferenceMatrix.from_dataset(d)
