"""Dense numeric kernels, activations, and seeded deterministic randomness.

All numerics are float64 numpy arrays.  Matrices are plain 2-D row-major
``np.ndarray``; vectors are 1-D.  ``matrix``/``vector`` are the validating
constructors: they reject NaN/Inf so corruption fails fast instead of
propagating into a backtest.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return a


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validating matrix constructor: float64, 2-D, finite."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"matrix requires 2-D data, got ndim={a.ndim}")
    if rows is not None and a.shape != (rows, cols):
        raise DimensionError(f"expected shape ({rows}, {cols}), got {a.shape}")
    return check_finite(a, "matrix")


def vector(data, length: int | None = None) -> np.ndarray:
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"vector requires 1-D data, got ndim={a.ndim}")
    if length is not None and a.shape != (length,):
        raise DimensionError(f"expected length {length}, got {a.shape[0]}")
    return check_finite(a, "vector")


class Rng:
    """Deterministic random stream with a platform-independent algorithm.

    Backed by numpy's PCG64, whose output stream is fully specified by the
    seed and identical across platforms.  Single-owner: never share one
    instance across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def random(self, size) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, salt: int) -> "Rng":
        """Independent child stream; deterministic in (seed, salt)."""
        return Rng(self.seed ^ (0x9E3779B97F4A7C15 * (salt + 1) & 0xFFFFFFFFFFFFFFFF))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic: branch on sign so exp never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def glorot_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Uniform Glorot/Xavier initialization in +-sqrt(6/(rows+cols))."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"glorot_init needs positive dims, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))
