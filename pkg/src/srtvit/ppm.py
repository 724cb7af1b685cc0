"""Binary PPM (P6) and PGM (P5) codec, maxval 255 only.

Images are float32 arrays of shape (H, W, K) with K = 3 for PPM and K = 1 for
PGM, values in [0, 1]. Writing quantizes with round-half-up,
``floor(v * 255 + 0.5)``, so any array of multiples of 1/255 survives a
write/read cycle unchanged.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError

_MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the single whitespace byte that ends
    the header.
    """
    tokens: list[bytes] = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(buf[start:pos])
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise FormatError("header must end with a single whitespace byte")
    return tokens, pos


def decode_pnm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in _MAGIC_CHANNELS:
        raise FormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    channels = _MAGIC_CHANNELS[magic]
    (_, w_tok, h_tok, max_tok), end = _header_tokens(buf, 4)
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise FormatError("non-numeric header field") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is supported")
    size = width * height * channels
    raster = buf[end + 1 :]
    if len(raster) < size:
        raise FormatError(f"truncated payload: need {size} bytes, have {len(raster)}")
    if len(raster) > size:
        raise FormatError(f"{len(raster) - size} trailing bytes after raster")
    data = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return (data.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def quantize_u8(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains NaN or Inf")
    if img.min(initial=0.0) < 0.0 or img.max(initial=0.0) > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def encode_pnm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3) or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"cannot encode array of shape {img.shape}")
    h, w, k = img.shape
    magic = b"P6" if k == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + quantize_u8(img).tobytes()


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a P6 or P5 file into a float32 (H, W, K) array."""
    with open(path, "rb") as f:
        return decode_pnm(f.read())


def write_ppm(image: np.ndarray, path: str | os.PathLike) -> None:
    """Write P6 for 3-channel images, P5 for single-channel ones."""
    with open(path, "wb") as f:
        f.write(encode_pnm(image))


read_pgm = read_ppm
write_pgm = write_ppm
