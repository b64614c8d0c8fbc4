"""Dense float64 matrices and the seeded random stream used across the package.

Matrices are plain C-contiguous ``numpy.float64`` arrays of rank 2.  Vectors are
rank-1 arrays.  Randomness comes from :class:`Rng`, a thin wrapper around
NumPy's PCG64 bit generator.  Only raw doubles from ``Generator.random`` are
consumed, and every derived draw (uniform ranges, permutations) is computed
from those doubles here, so streams stay stable across NumPy releases.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import DomainError, ShapeError

DTYPE = np.float64


def as_matrix(x, name: str = "matrix", check_finite: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 2-D C-contiguous float64 array, rejecting NaN/Inf."""
    a = np.ascontiguousarray(x, dtype=DTYPE)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if check_finite and not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains NaN or Inf")
    return a


def as_vector(x, name: str = "vector", check_finite: bool = True) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=DTYPE)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {a.shape}")
    if check_finite and not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains NaN or Inf")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def derive_seed(seed: int, tag: str) -> int:
    """Child seed for a named sub-stream: SeedSequence([seed, crc32(tag)])."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Rng:
    """Seeded PCG64 stream.  Identical seeds give identical draws everywhere."""

    algorithm = "PCG64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, size) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, size, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise DomainError(f"uniform needs lo < hi, got [{lo}, {hi})")
        u = lo + (hi - lo) * self._gen.random(size)
        # rounding can land exactly on hi
        return np.minimum(u, np.nextafter(hi, lo))

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self._gen.random(n), kind="stable")

    def spawn(self, tag: str) -> "Rng":
        return Rng(derive_seed(self.seed, tag))


def uniform(rng: Rng, n: int, lo: float, hi: float) -> np.ndarray:
    return rng.uniform(int(n), lo, hi)
