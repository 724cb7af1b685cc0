"""Pixel-resolution feature fields and their SRTF binary export."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, FormatError

SRTF_MAGIC = b"SRTF"


@dataclass
class DenseField:
    """An H x W x C feature field with a per-pixel validity mass.

    While ``finalized`` is False, ``data`` holds weighted sums; once finalized
    it holds means, defined only where ``weight > 0`` (zero elsewhere).
    """

    data: np.ndarray  # (H, W, C)
    weight: np.ndarray  # (H, W)
    finalized: bool = True

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def valid(self) -> np.ndarray:
        return self.weight > 0

    def copy(self) -> "DenseField":
        return DenseField(self.data.copy(), self.weight.copy(), self.finalized)


class RunningField:
    """Streaming accumulator for the masked mean of aligned fields.

    Implements the observer recursion ``x_hat <- x_hat + aligned`` together with
    ``weight <- weight + mask``; ``finalize`` divides. Sums are kept in float64
    so the result is independent of the order samples arrive in (to ~1e-12).
    """

    def __init__(self, height: int, width: int, channels: int):
        self.sum = np.zeros((height, width, channels), dtype=np.float64)
        self.mass = np.zeros((height, width), dtype=np.float64)
        self.count = 0

    def add(self, field: DenseField) -> None:
        w = field.weight.astype(np.float64)
        self.sum += field.data.astype(np.float64) * w[:, :, None]
        self.mass += w
        self.count += 1

    def estimate(self) -> DenseField:
        """Current running mean; pixels with no valid sample yet are zero."""
        data = np.zeros(self.sum.shape, dtype=np.float32)
        ok = self.mass > 0
        data[ok] = (self.sum[ok] / self.mass[ok][:, None]).astype(np.float32)
        return DenseField(data, self.mass.astype(np.float32), True)

    def finalize(self) -> DenseField:
        if not np.all(self.mass > 0):
            bad = np.argwhere(self.mass <= 0)[0]
            raise CoverageError(f"pixel {tuple(int(i) for i in bad)} has no valid sample")
        return self.estimate()


def write_srtf(field: DenseField, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(encode_srtf(field))


def encode_srtf(field: DenseField) -> bytes:
    h, w, c = field.data.shape
    return (
        SRTF_MAGIC
        + struct.pack("<III", h, w, c)
        + np.ascontiguousarray(field.data, dtype="<f4").tobytes()
        + np.ascontiguousarray(field.weight, dtype="<f4").tobytes()
    )


def decode_srtf(buf: bytes) -> DenseField:
    if len(buf) < 16 or buf[:4] != SRTF_MAGIC:
        raise FormatError("not an SRTF file")
    h, w, c = struct.unpack_from("<III", buf, 4)
    n_data, n_weight = h * w * c * 4, h * w * 4
    if len(buf) != 16 + n_data + n_weight:
        raise FormatError(f"SRTF size mismatch for {h}x{w}x{c}")
    data = np.frombuffer(buf, dtype="<f4", count=h * w * c, offset=16).astype(np.float32).reshape(h, w, c)
    weight = np.frombuffer(buf, dtype="<f4", count=h * w, offset=16 + n_data).astype(np.float32).reshape(h, w)
    return DenseField(data, weight, True)


def read_srtf(path: str | os.PathLike) -> DenseField:
    with open(path, "rb") as f:
        return decode_srtf(f.read())
