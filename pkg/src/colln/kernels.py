"""Dense float32 kernels for the encoder forward pass.

Everything here is a pure function over numpy arrays: matrix multiply,
numerically stable row softmax, layer normalization and exact-erf GELU.
Activations and weights are float32; BLAS accumulates in at least 32 bits.
All kernels are deterministic for identical inputs on a fixed platform.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ConfigError

_SQRT2 = np.float32(np.sqrt(2.0))


def as_f32(x) -> np.ndarray:
    """Convert to a float32 ndarray without copying when already f32."""
    return np.asarray(x, dtype=np.float32)


def check_finite(x: np.ndarray, what: str = "array") -> np.ndarray:
    """Raise ConfigError if x contains NaN or Inf; returns x unchanged."""
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"{what} contains non-finite entries")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with explicit inner-dimension validation."""
    a = as_f32(a)
    b = as_f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction.

    Output rows sum to 1 within 1e-6 for any finite input, including rows
    with entries of magnitude 1e4 (the max shift prevents overflow; extreme
    gaps may underflow individual entries to exactly 0).
    """
    m = check_finite(as_f32(m), "softmax input")
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-6) -> np.ndarray:
    """Layer normalization over the last axis: gamma * (x - mu) / sqrt(var + eps) + beta.

    Accepts a vector or a matrix of row vectors. Variance is the biased
    (mean-of-squares) estimate.
    """
    x = as_f32(x)
    gamma = as_f32(gamma)
    beta = as_f32(beta)
    if x.shape[-1] == 0:
        raise ConfigError("layer_norm on zero-length vector")
    if gamma.shape[-1] != x.shape[-1] or beta.shape[-1] != x.shape[-1]:
        raise ConfigError("layer_norm parameter length mismatch")
    if eps <= 0:
        raise ConfigError("layer_norm eps must be > 0")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    return gamma * (centered / np.sqrt(var + np.float32(eps))) + beta


def gelu(x):
    """Exact-erf GELU: x * Phi(x). Works on scalars and arrays, float32 math."""
    arr = as_f32(x)
    out = arr * np.float32(0.5) * (np.float32(1.0) + erf(arr / _SQRT2))
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map x @ w.T + b for [out, in]-shaped weights."""
    return matmul(x, as_f32(w).T) + as_f32(b)
