"""VITW weight container and the seeded toy-weight generator.

Layout (all integers little-endian)::

    bytes 0-3    b"VITW"
    bytes 4-7    u32 version (= 1)
    bytes 8-15   u64 header length in bytes
    header       UTF-8 JSON {"config": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    payload      float32 LE; each tensor occupies prod(shape) * 4 bytes at its offset

Offsets are relative to the first payload byte. The writer emits compact JSON
(no spaces) with tensors packed back to back in index order, so a container
produced here round-trips byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContainerError
from .prng import draw_uniform
from .vit import ViTConfig, ViTModel

MAGIC = b"VITW"
VERSION = 1
TOY_HALF_WIDTH = 0.05


def tensor_checksum(arr: np.ndarray) -> str:
    """SHA-256 of the tensor's little-endian float32 bytes."""
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f4").tobytes()).hexdigest()


@dataclass
class WeightContainer:
    config: ViTConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    def checksum(self, name: str) -> str:
        return tensor_checksum(self.tensors[name])

    @property
    def checksums(self) -> dict[str, str]:
        return {name: tensor_checksum(t) for name, t in self.tensors.items()}

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def to_bytes(self) -> bytes:
        index = []
        chunks = []
        offset = 0
        for name, t in self.tensors.items():
            raw = np.ascontiguousarray(t, dtype="<f4").tobytes()
            index.append({"name": name, "shape": list(t.shape), "offset": offset})
            chunks.append(raw)
            offset += len(raw)
        header = json.dumps({"config": self.config.to_dict(), "tensors": index}, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<IQ", self.version, len(header)) + header + b"".join(chunks)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "WeightContainer":
        if len(buf) < 16 or buf[:4] != MAGIC:
            raise ContainerError("bad magic; not a VITW container")
        version, hlen = struct.unpack_from("<IQ", buf, 4)
        if version != VERSION:
            raise ContainerError(f"unsupported VITW version {version}")
        if 16 + hlen > len(buf):
            raise ContainerError("header extends past end of file")
        try:
            header = json.loads(buf[16 : 16 + hlen].decode("utf-8"))
            config = ViTConfig.from_dict(header["config"])
            index = header["tensors"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ContainerError(f"malformed header: {exc}") from None
        except ValueError as exc:  # invalid architecture values
            raise ContainerError(f"invalid config: {exc}") from None
        payload = memoryview(buf)[16 + hlen :]
        tensors: dict[str, np.ndarray] = {}
        extents = []
        for entry in index:
            try:
                name, shape, offset = entry["name"], tuple(int(s) for s in entry["shape"]), int(entry["offset"])
            except (KeyError, TypeError, ValueError):
                raise ContainerError(f"malformed index entry {entry!r}") from None
            if name in tensors:
                raise ContainerError(f"duplicate tensor name {name!r}")
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if offset < 0 or offset + nbytes > len(payload):
                raise ContainerError(f"tensor {name!r} lies outside the payload")
            extents.append((offset, offset + nbytes, name))
            tensors[name] = np.frombuffer(payload[offset : offset + nbytes], dtype="<f4").astype(np.float32).reshape(shape)
        extents.sort()
        for (_, end_a, name_a), (start_b, _, name_b) in zip(extents, extents[1:]):
            if start_b < end_a:
                raise ContainerError(f"tensors {name_a!r} and {name_b!r} overlap")
        return cls(config, tensors, version)


def save_container(container: WeightContainer, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(container.to_bytes())


def read_container(path: str | os.PathLike) -> WeightContainer:
    with open(path, "rb") as f:
        return WeightContainer.from_bytes(f.read())


def model_from_container(container: WeightContainer) -> ViTModel:
    # ViTModel rejects missing, extra and mis-shaped tensors.
    return ViTModel(container.config, dict(container.tensors))


def container_from_model(model: ViTModel) -> WeightContainer:
    return WeightContainer(model.config, dict(model.weights))


def load_weights(path: str | os.PathLike) -> ViTModel:
    return model_from_container(read_container(path))


def save_weights(model: ViTModel, path: str | os.PathLike) -> None:
    save_container(container_from_model(model), path)


def make_toy_weights(seed: int, config: ViTConfig) -> WeightContainer:
    """Reproducible random weights for desk-scale experiments.

    One SplitMix64 stream seeded with ``seed`` is consumed in canonical tensor
    order (``ViTConfig.tensor_specs``), row-major within each tensor. Each draw
    ``u`` becomes ``float32(-0.05 + 0.1 * u)``; LayerNorm gains additionally
    get 1.0 added so that normalised activations keep unit scale.
    """
    tensors: dict[str, np.ndarray] = {}
    cursor = 0
    for name, shape in config.tensor_specs():
        count = int(np.prod(shape))
        u = draw_uniform(seed, count, start=cursor)
        cursor += count
        values = -TOY_HALF_WIDTH + 2.0 * TOY_HALF_WIDTH * u
        if name.endswith(("norm1.weight", "norm2.weight")) or name == "norm.weight":
            values = values + 1.0
        tensors[name] = values.astype(np.float32).reshape(shape)
    return WeightContainer(config, tensors)


def make_toy_model(seed: int, config: ViTConfig) -> ViTModel:
    return model_from_container(make_toy_weights(seed, config))
