"""Scalar special functions shared by the manifold kernels and their gradients.

Every helper is elementwise over numpy arrays and switches to a truncated
series near its removable singularity so values and derivatives stay smooth
at zero.
"""

from __future__ import annotations

import numpy as np

_SERIES_CUTOFF = 1e-2


def arcosh1p(u: np.ndarray) -> np.ndarray:
    """cosh⁻¹(1 + u) for u ≥ 0 without forming 1 + u."""
    u = np.maximum(np.asarray(u, dtype=np.float64), 0.0)
    return np.log1p(u + np.sqrt(u * (u + 2.0)))


def arcosh1p_ratio(u: np.ndarray) -> np.ndarray:
    """cosh⁻¹(1 + u) / sqrt(u (u + 2)), which tends to 1 as u → 0."""
    u = np.maximum(np.asarray(u, dtype=np.float64), 0.0)
    small = u < 1e-8
    safe = np.where(small, 1.0, u)
    direct = arcosh1p(safe) / np.sqrt(safe * (safe + 2.0))
    return np.where(small, 1.0 - u / 3.0, direct)


def sinhc(x: np.ndarray) -> np.ndarray:
    """sinh(x) / x."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 + x2 / 6.0 + x2 * x2 / 120.0, np.sinh(safe) / safe)


def sinhc_slope(x: np.ndarray) -> np.ndarray:
    """sinhc'(x) / x = (x cosh x - sinh x) / x³."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    direct = (safe * np.cosh(safe) - np.sinh(safe)) / safe**3
    return np.where(small, 1.0 / 3.0 + x2 / 30.0 + x2 * x2 / 840.0, direct)


def tanhc(x: np.ndarray) -> np.ndarray:
    """tanh(x) / x."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(
        small, 1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0, np.tanh(safe) / safe
    )


def tanhc_slope(x: np.ndarray) -> np.ndarray:
    """tanhc'(x) / x = (x sech² x - tanh x) / x³."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    th = np.tanh(safe)
    direct = (safe * (1.0 - th * th) - th) / safe**3
    series = -2.0 / 3.0 + 8.0 * x2 / 15.0 - 34.0 * x2 * x2 / 105.0
    return np.where(small, series, direct)


def artanhc(x: np.ndarray) -> np.ndarray:
    """artanh(x) / x for |x| < 1."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 0.5, x)
    x2 = x * x
    return np.where(
        small, 1.0 + x2 / 3.0 + x2 * x2 / 5.0, np.arctanh(safe) / safe
    )


def row_norm(v: np.ndarray, keepdims: bool = False) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=keepdims))


def row_dot(a: np.ndarray, b: np.ndarray, keepdims: bool = False) -> np.ndarray:
    return np.sum(a * b, axis=-1, keepdims=keepdims)
