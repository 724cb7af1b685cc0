"""One-dimensional stochastic resonance: dithered quantization and averaging.

A quantizer ``f`` maps the real line onto a finite set of levels. Averaging
``f(x + n_i)`` over perturbations ``n_i`` recovers information about ``x`` that
a single measurement ``f(x)`` throws away. With a round-to-nearest quantizer of
step D and uniform dither on (-D/2, D/2) the average is an unbiased estimate of
``x``.

Noise draws come from SplitMix64 (see :mod:`srtvit.prng`). Sample ``i`` of a
sweep uses the stream ``stream_seed(seed, i)``; uniform dither on (-a, a) is
``-a + 2a*u``, Gaussian dither is ``sigma * sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``
from consecutive draws ``u1, u2`` (the sine half is discarded).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .prng import draw_uniform, stream_seed

QUANTIZER_KINDS = ("round", "floor", "levels")
DITHERS = ("uniform", "gaussian", "none")


@dataclass(frozen=True)
class Quantizer:
    kind: str = "round"
    step: float = 1.0
    levels: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in QUANTIZER_KINDS:
            raise ValueError(f"unknown quantizer kind {self.kind!r}")
        if self.kind == "levels":
            if not self.levels or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise ValueError("levels must be non-empty and strictly increasing")
        elif not self.step > 0:
            raise ValueError("step must be positive")

    def __call__(self, x):
        return quantize(self, x)


def quantize(q: Quantizer, x):
    """Nearest level with ties rounding up, or the floor multiple of the step."""
    arr = np.asarray(x, dtype=np.float64)
    if q.kind == "round":
        out = q.step * np.floor(arr / q.step + 0.5)
    elif q.kind == "floor":
        out = q.step * np.floor(arr / q.step)
    else:
        lv = np.asarray(q.levels, dtype=np.float64)
        # Index of the first level strictly above each midpoint crossing; ties go up.
        mids = (lv[1:] + lv[:-1]) / 2.0
        out = lv[np.searchsorted(mids, arr, side="right")]
    return out.item() if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DitherSpec:
    dist: str = "uniform"
    scale: float = 0.5  # half-width a for uniform, sigma for gaussian
    samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dist not in DITHERS:
            raise ValueError(f"unknown dither distribution {self.dist!r}")
        if self.dist != "none" and not self.scale > 0:
            raise ValueError("dither scale must be positive")
        if self.samples < 1:
            raise ValueError("need at least one sample")


def draw_noise(d: DitherSpec, stream: int = 0) -> np.ndarray:
    """The ``d.samples`` perturbations used for sample ``stream``."""
    seed = stream_seed(d.seed, stream)
    if d.dist == "none":
        return np.zeros(d.samples)
    if d.dist == "uniform":
        return -d.scale + 2.0 * d.scale * draw_uniform(seed, d.samples)
    u = draw_uniform(seed, 2 * d.samples)
    u1, u2 = u[0::2], u[1::2]
    return d.scale * np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def dithered_estimate(q: Quantizer, x: float, d: DitherSpec, stream: int = 0) -> float:
    """``mean_i f(x + n_i)`` over ``d.samples`` draws of the dither."""
    return float(np.mean(quantize(q, x + draw_noise(d, stream))))


@dataclass
class SweepResult:
    x: np.ndarray
    f_x: np.ndarray
    x_hat: np.ndarray

    @property
    def sq_err_plain(self) -> np.ndarray:
        return (self.x - self.f_x) ** 2

    @property
    def sq_err_dithered(self) -> np.ndarray:
        return (self.x - self.x_hat) ** 2

    @property
    def mse_plain(self) -> float:
        return float(np.mean(self.sq_err_plain))

    @property
    def mse_dithered(self) -> float:
        return float(np.mean(self.sq_err_dithered))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "f_x", "x_hat", "sq_err_plain", "sq_err_dithered"])
        for row in zip(self.x, self.f_x, self.x_hat, self.sq_err_plain, self.sq_err_dithered):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="ascii") as f:
            f.write(self.to_csv())


def mse_sweep(q: Quantizer, signal: Sequence[float], d: DitherSpec) -> SweepResult:
    """Plain versus dithered-and-averaged quantization error over a signal."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    f_x = np.asarray(quantize(q, x), dtype=np.float64).reshape(x.shape)
    x_hat = np.array([dithered_estimate(q, xi, d, stream=i) for i, xi in enumerate(x)])
    return SweepResult(x, f_x, x_hat)


def ramp(n: int = 100, step: float = 0.01) -> np.ndarray:
    """``0, step, ..., (n-1)*step``, computed as ``i * step``."""
    return np.arange(n) * step
