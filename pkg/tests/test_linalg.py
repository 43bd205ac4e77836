import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plmmse import InsufficientDataError, InvalidInputError
from plmmse.linalg import (
    DB2,
    HAAR,
    empirical_moments,
    gaussian_logpdf,
    gaussian_pdf,
    haar_transform,
    hadamard_dictionary,
    pseudo_inverse,
    wavelet_level_index,
    wavelet_transform,
)


def _penrose_errors(a, g):
    return (
        np.abs(a @ g @ a - a).max(),
        np.abs(g @ a @ g - g).max(),
        np.abs(a @ g - (a @ g).T).max(),
        np.abs(g @ a - (g @ a).T).max(),
    )


@settings(max_examples=100, deadline=None)
@given(
    rows=st.integers(1, 7),
    cols=st.integers(1, 7),
    rank_frac=st.floats(0, 1),
    seed=st.integers(0, 2**31),
)
def test_penrose_axioms_on_random_ranks(rows, cols, rank_frac, seed):
    rng = np.random.default_rng(seed)
    rank = int(round(rank_frac * min(rows, cols)))
    a = rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, cols))
    g = pseudo_inverse(a)
    assert g.shape == (cols, rows)
    scale = max(1.0, np.abs(a).max()) * max(1.0, np.abs(g).max())
    assert max(_penrose_errors(a, g)) < 1e-9 * scale**2


def test_pseudo_inverse_matches_inverse_for_nonsingular():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(pseudo_inverse(a), np.linalg.inv(a), atol=1e-14)


def test_pseudo_inverse_zero_matrix_and_tolerance():
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))
    a = np.diag([1.0, 1e-3])
    np.testing.assert_allclose(pseudo_inverse(a, tol=1e-2), np.diag([1.0, 0.0]))


@pytest.mark.parametrize("bad", [np.array([[np.nan]]), np.array([[np.inf, 0.0]])])
def test_pseudo_inverse_rejects_nonfinite(bad):
    with pytest.raises(InvalidInputError):
        pseudo_inverse(bad)


def test_pseudo_inverse_rejects_negative_tol():
    with pytest.raises(InvalidInputError):
        pseudo_inverse(np.eye(2), tol=-1.0)


def test_empirical_moments_recover_generator():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 4))
    cov = a @ a.T
    errs = []
    for count in (1_000, 100_000):
        xy = rng.multivariate_normal(np.zeros(4), cov, size=count)
        _, _, cxx, cxy, cyy = empirical_moments(xy[:, :2], xy[:, 2:])
        full = np.block([[cxx, cxy], [cxy.T, cyy]])
        errs.append(np.linalg.norm(full - cov) / np.linalg.norm(cov))
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_empirical_moments_are_symmetric_and_unbiased():
    x = np.array([[1.0], [2.0], [4.0]])
    mx, _, cxx, cxy, _ = empirical_moments(x, x)
    assert mx[0] == pytest.approx(7 / 3)
    assert cxx[0, 0] == pytest.approx(np.var(x, ddof=1))
    assert cxy[0, 0] == pytest.approx(cxx[0, 0])


def test_empirical_moments_errors():
    with pytest.raises(InsufficientDataError):
        empirical_moments(np.ones((1, 2)), np.ones((1, 2)))
    with pytest.raises(InvalidInputError):
        empirical_moments(np.ones((3, 2)), np.ones((4, 2)))
    with pytest.raises(InvalidInputError):
        empirical_moments(np.ones((3, 2, 2)), np.ones((3, 2)))


def test_gaussian_density():
    assert gaussian_pdf(0.0, 0.0, 1.0) == pytest.approx(1 / np.sqrt(2 * np.pi))
    assert gaussian_logpdf(1.0, 1.0, 4.0) == pytest.approx(-0.5 * np.log(8 * np.pi))
    with pytest.raises(InvalidInputError):
        gaussian_logpdf(0.0, 0.0, 0.0)


@pytest.mark.parametrize("order", [1, 2, 8, 64])
def test_hadamard_dictionary_is_orthonormal(order):
    h = hadamard_dictionary(order)
    np.testing.assert_allclose(h.T @ h, np.eye(order), atol=1e-12)


def test_hadamard_dictionary_requires_power_of_two():
    with pytest.raises(InvalidInputError):
        hadamard_dictionary(12)


@settings(max_examples=50, deadline=None)
@given(
    log_n=st.integers(3, 9),
    levels=st.integers(1, 3),
    seed=st.integers(0, 2**31),
    use_db2=st.booleans(),
)
def test_wavelet_transform_preserves_norm_and_inverts(log_n, levels, seed, use_db2):
    n = 2**log_n
    x = np.random.default_rng(seed).normal(size=n)
    lowpass = DB2 if use_db2 else HAAR
    c = wavelet_transform(x, levels, lowpass=lowpass)
    assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    np.testing.assert_allclose(wavelet_transform(c, levels, inverse=True, lowpass=lowpass), x,
                               atol=1e-12)


def test_haar_transform_of_constant_is_one_coefficient():
    c = haar_transform(np.ones(16), 4)
    assert c[0] == pytest.approx(4.0)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-15)


def test_wavelet_transform_rejects_bad_length():
    with pytest.raises(InvalidInputError):
        wavelet_transform(np.ones(12), 3)


def test_wavelet_level_index_layout():
    idx = wavelet_level_index(16, 2)
    np.testing.assert_array_equal(idx, [0] * 4 + [2] * 4 + [1] * 8)
