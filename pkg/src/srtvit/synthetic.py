"""Deterministic test images."""

from __future__ import annotations

import numpy as np

from .prng import draw_uniform


def random_image(seed: int, height: int, width: int, channels: int = 3) -> np.ndarray:
    """Uniform [0, 1) pixels from SplitMix64, quantized to multiples of 1/255."""
    u = draw_uniform(seed, height * width * channels).reshape(height, width, channels)
    return (np.floor(u * 256.0).clip(0, 255) / 255.0).astype(np.float32)


def step_edge_image(height: int, width: int, edge_col: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Vertical step: columns ``< edge_col`` are ``low``, the rest ``high``."""
    img = np.full((height, width, 3), low, dtype=np.float32)
    img[:, edge_col:] = high
    return img


def constant_image(height: int, width: int, value: float = 0.5) -> np.ndarray:
    return np.full((height, width, 3), value, dtype=np.float32)
