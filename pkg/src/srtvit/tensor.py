"""Dense float32 kernels used by the ViT forward pass.

Tensors are plain ``numpy.ndarray`` values of dtype float32. Every reduction
is carried out in float64 and rounded once to float32 on the way out, so the
results do not depend on how the caller chunked the work.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import DimensionError, NonFiniteError

DEFAULT_LN_EPS = 1e-6


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 array."""
    return np.ascontiguousarray(x, dtype=np.float32)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation.

    Leading dimensions broadcast like ``numpy.matmul``; the two trailing
    dimensions must be ``p x q`` and ``q x r``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.astype(np.float64), b.astype(np.float64)).astype(np.float32)
    return check_finite(out, "matmul output")


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """``x @ weight.T + bias`` with the bias folded in before rounding.

    ``weight`` is stored ``(out_features, in_features)``.
    """
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input has {x.shape[-1]} features, weight expects {weight.shape[1]}")
    acc = np.matmul(x.astype(np.float64), weight.astype(np.float64).T)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
        acc += bias.astype(np.float64)
    return check_finite(acc.astype(np.float32), "linear output")


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = DEFAULT_LN_EPS) -> np.ndarray:
    x = np.asarray(x)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"layer_norm: last dim {c} but gamma {gamma.shape}, beta {beta.shape}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    centered = x64 - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered / np.sqrt(var + eps) * gamma.astype(np.float64) + beta.astype(np.float64)
    return check_finite(out.astype(np.float32), "layer_norm output")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x64 = np.asarray(x, dtype=np.float64)
    if not -x64.ndim <= axis < x64.ndim:
        raise DimensionError(f"axis {axis} out of range for {x64.ndim}-D input")
    z = np.exp(x64 - x64.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)
    return check_finite(out.astype(np.float32), "softmax output")


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF written through erf."""
    x64 = np.asarray(x, dtype=np.float64)
    out = 0.5 * x64 * (1.0 + erf(x64 / np.sqrt(2.0)))
    return check_finite(out.astype(np.float32), "gelu output")
