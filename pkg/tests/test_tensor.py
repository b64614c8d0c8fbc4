import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densereg.errors import DomainError, ShapeError
from densereg.tensor import Rng, as_matrix, derive_seed, matmul, transpose, uniform


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    assert np.array_equal(matmul(np.eye(2), np.array([[3.0], [5.0]])), [[3.0], [5.0]])


def test_matmul_row_by_column():
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))[0, 0] == 11.0


def test_matmul_matches_triple_loop(rng):
    a, b = rng.uniform((5, 4), -1, 1), rng.uniform((4, 3), -1, 1)
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-13, atol=1e-15)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_matmul_associative(seed, m, k, l, n):
    r = Rng(seed)
    a, b, c = r.uniform((m, k), -1, 1), r.uniform((k, l), -1, 1), r.uniform((l, n), -1, 1)
    left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * max(np.linalg.norm(left), 1e-300)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_transpose_round_trip(m, n, seed):
    a = Rng(seed).uniform((m, n), -5, 5)
    assert np.array_equal(transpose(transpose(a)), a)


def test_uniform_empty():
    assert uniform(Rng(0), 0, 0.0, 4.0).shape == (0,)


def test_uniform_deterministic():
    assert np.array_equal(uniform(Rng(42), 3, 0, 4), uniform(Rng(42), 3, 0, 4))


def test_uniform_rejects_empty_interval():
    with pytest.raises(DomainError):
        uniform(Rng(0), 3, 4.0, 4.0)


def test_uniform_mean_law_of_large_numbers():
    x = uniform(Rng(7), 100_000, 0.0, 4.0)
    assert x.min() >= 0.0 and x.max() < 4.0
    # sd of the mean is 4/sqrt(12)/sqrt(1e5) ~ 0.0037, so 0.05 is > 13 sigma
    assert abs(x.mean() - 2.0) < 0.05


def test_stream_is_pinned():
    # PCG64 stream for seed 0, first three doubles; guards against silent generator changes
    expected = np.random.Generator(np.random.PCG64(0)).random(3)
    assert np.array_equal(Rng(0).random(3), expected)


def test_permutation_is_a_permutation(rng):
    p = rng.permutation(50)
    assert sorted(p.tolist()) == list(range(50))


def test_derived_seeds_differ_by_tag():
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a") == derive_seed(1, "a")


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(DomainError):
        as_matrix([[1.0, np.nan]])
