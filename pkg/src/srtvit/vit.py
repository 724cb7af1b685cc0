"""A minimal pre-norm Vision Transformer that can be tapped and resumed at any layer.

Layer taps follow one convention throughout the package:

* layer 0 is the token sequence right after patch embedding plus positional
  embedding;
* layer k (1 <= k < depth) is the residual stream after block k;
* layer ``depth`` is the output of the last block passed through the final
  LayerNorm.

``forward_from_layer(forward_to_layer(x, l), l)`` runs the exact same
operations as ``forward_to_layer(x, depth)``, so the two agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContainerError, DimensionError, LayerError
from .tensor import gelu, layer_norm, linear, matmul, softmax

IN_CHANS = 3


@dataclass(frozen=True)
class ViTConfig:
    img_h: int
    img_w: int
    patch_h: int
    patch_w: int
    dim: int
    depth: int
    heads: int
    mlp_ratio: float = 4.0
    use_cls: bool = True

    def __post_init__(self):
        for name in ("img_h", "img_w", "patch_h", "patch_w", "dim", "depth", "heads"):
            if int(getattr(self, name)) < 1:
                raise DimensionError(f"{name} must be >= 1")
        if self.img_h % self.patch_h or self.img_w % self.patch_w:
            raise DimensionError(
                f"image {self.img_h}x{self.img_w} is not divisible into {self.patch_h}x{self.patch_w} patches"
            )
        if self.dim % self.heads:
            raise DimensionError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.mlp_ratio <= 0 or self.hidden < 1:
            raise DimensionError("mlp_ratio must give at least one hidden unit")

    @property
    def grid_h(self) -> int:
        return self.img_h // self.patch_h

    @property
    def grid_w(self) -> int:
        return self.img_w // self.patch_w

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def num_tokens(self) -> int:
        return self.num_patches + int(self.use_cls)

    @property
    def hidden(self) -> int:
        return int(self.dim * self.mlp_ratio)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def to_dict(self) -> dict:
        return {
            "img_h": self.img_h,
            "img_w": self.img_w,
            "patch_h": self.patch_h,
            "patch_w": self.patch_w,
            "dim": self.dim,
            "depth": self.depth,
            "heads": self.heads,
            "mlp_ratio": float(self.mlp_ratio),
            "use_cls": bool(self.use_cls),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViTConfig":
        try:
            return cls(
                img_h=int(d["img_h"]),
                img_w=int(d["img_w"]),
                patch_h=int(d["patch_h"]),
                patch_w=int(d["patch_w"]),
                dim=int(d["dim"]),
                depth=int(d["depth"]),
                heads=int(d["heads"]),
                mlp_ratio=float(d["mlp_ratio"]),
                use_cls=bool(d["use_cls"]),
            )
        except KeyError as exc:
            raise ContainerError(f"config is missing field {exc.args[0]!r}") from None

    def tensor_specs(self) -> list[tuple[str, tuple[int, ...]]]:
        """Every weight tensor the architecture needs, in canonical file order."""
        c, hid = self.dim, self.hidden
        specs: list[tuple[str, tuple[int, ...]]] = [
            ("patch_embed.weight", (c, self.patch_h * self.patch_w * IN_CHANS)),
            ("patch_embed.bias", (c,)),
        ]
        if self.use_cls:
            specs.append(("cls_token", (c,)))
        specs.append(("pos_embed", (self.num_tokens, c)))
        for i in range(self.depth):
            p = f"blocks.{i}."
            specs += [
                (p + "norm1.weight", (c,)),
                (p + "norm1.bias", (c,)),
                (p + "attn.qkv.weight", (3 * c, c)),
                (p + "attn.qkv.bias", (3 * c,)),
                (p + "attn.proj.weight", (c, c)),
                (p + "attn.proj.bias", (c,)),
                (p + "norm2.weight", (c,)),
                (p + "norm2.bias", (c,)),
                (p + "mlp.fc1.weight", (hid, c)),
                (p + "mlp.fc1.bias", (hid,)),
                (p + "mlp.fc2.weight", (c, hid)),
                (p + "mlp.fc2.bias", (c,)),
            ]
        specs += [("norm.weight", (c,)), ("norm.bias", (c,))]
        return specs


@dataclass
class FeatureMap:
    """Spatial tokens at one layer, laid out on the patch grid."""

    data: np.ndarray  # (grid_h, grid_w, C) float32
    layer: int
    cls: np.ndarray | None = None

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class ModelOutput:
    features: FeatureMap
    cls: np.ndarray | None = None
    dense: object | None = None  # DenseField, for the output-ensemble baseline


@dataclass
class ViTModel:
    config: ViTConfig
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = dict(self.config.tensor_specs())
        missing = [n for n in expected if n not in self.weights]
        if missing:
            raise ContainerError(f"missing tensor {missing[0]!r}")
        extra = [n for n in self.weights if n not in expected]
        if extra:
            raise ContainerError(f"unexpected tensor {extra[0]!r}")
        for name, shape in expected.items():
            w = np.ascontiguousarray(self.weights[name], dtype=np.float32)
            if w.shape != shape:
                raise ContainerError(f"tensor {name!r} has shape {w.shape}, config requires {shape}")
            w.setflags(write=False)
            self.weights[name] = w

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]


def _prepare_image(image: np.ndarray, config: ViTConfig) -> np.ndarray:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[:2] != (config.img_h, config.img_w):
        raise DimensionError(f"image is {img.shape[0]}x{img.shape[1]}, model expects {config.img_h}x{config.img_w}")
    if img.shape[2] == 1:
        img = np.repeat(img, IN_CHANS, axis=2)
    if img.shape[2] != IN_CHANS:
        raise DimensionError(f"image has {img.shape[2]} channels, model expects {IN_CHANS}")
    return img


def patchify(image: np.ndarray, config: ViTConfig) -> np.ndarray:
    """Rows are raster-ordered patches, each flattened row-major as (n, m, K)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, k = img.shape
    if (h, w) != (config.img_h, config.img_w):
        raise DimensionError(f"image is {h}x{w}, config expects {config.img_h}x{config.img_w}")
    n, m = config.patch_h, config.patch_w
    gh, gw = h // n, w // m
    return np.ascontiguousarray(img.reshape(gh, n, gw, m, k).transpose(0, 2, 1, 3, 4).reshape(gh * gw, n * m * k))


def _embed(model: ViTModel, image: np.ndarray) -> np.ndarray:
    cfg = model.config
    patches = patchify(_prepare_image(image, cfg), cfg)
    x = linear(patches, model["patch_embed.weight"], model["patch_embed.bias"])
    if cfg.use_cls:
        x = np.concatenate([model["cls_token"][None, :], x], axis=0)
    return x + model["pos_embed"]


def _attention(model: ViTModel, prefix: str, h: np.ndarray) -> np.ndarray:
    cfg = model.config
    t = h.shape[0]
    qkv = linear(h, model[prefix + "qkv.weight"], model[prefix + "qkv.bias"])
    qkv = qkv.reshape(t, 3, cfg.heads, cfg.head_dim).transpose(1, 2, 0, 3)  # (3, heads, T, hd)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = matmul(q, k.transpose(0, 2, 1)) * np.float32(cfg.head_dim**-0.5)
    out = matmul(softmax(scores, axis=-1), v)  # (heads, T, hd)
    out = out.transpose(1, 0, 2).reshape(t, cfg.dim)
    return linear(out, model[prefix + "proj.weight"], model[prefix + "proj.bias"])


def _block(model: ViTModel, i: int, x: np.ndarray) -> np.ndarray:
    p = f"blocks.{i}."
    h = layer_norm(x, model[p + "norm1.weight"], model[p + "norm1.bias"])
    x = x + _attention(model, p + "attn.", h)
    h = layer_norm(x, model[p + "norm2.weight"], model[p + "norm2.bias"])
    h = gelu(linear(h, model[p + "mlp.fc1.weight"], model[p + "mlp.fc1.bias"]))
    return x + linear(h, model[p + "mlp.fc2.weight"], model[p + "mlp.fc2.bias"])


def _split(model: ViTModel, x: np.ndarray, layer: int) -> FeatureMap:
    cfg = model.config
    cls = None
    if cfg.use_cls:
        cls, x = x[0].copy(), x[1:]
    return FeatureMap(np.ascontiguousarray(x.reshape(cfg.grid_h, cfg.grid_w, cfg.dim)), layer, cls)


def _join(model: ViTModel, fmap: FeatureMap) -> np.ndarray:
    cfg = model.config
    x = np.asarray(fmap.data, dtype=np.float32).reshape(cfg.num_patches, cfg.dim)
    if cfg.use_cls:
        if fmap.cls is None:
            raise DimensionError("model uses a CLS token but the feature map carries none")
        x = np.concatenate([np.asarray(fmap.cls, dtype=np.float32)[None, :], x], axis=0)
    return x


def _check_layer(model: ViTModel, layer: int) -> None:
    if not 0 <= layer <= model.config.depth:
        raise LayerError(f"layer {layer} out of range; valid layers are 0..{model.config.depth}")


def forward_to_layer(model: ViTModel, image: np.ndarray, layer: int) -> FeatureMap:
    _check_layer(model, layer)
    x = _embed(model, image)
    for i in range(layer):
        x = _block(model, i, x)
    if layer == model.config.depth:
        x = layer_norm(x, model["norm.weight"], model["norm.bias"])
    return _split(model, x, layer)


def forward_from_layer(model: ViTModel, fmap: FeatureMap, layer: int) -> ModelOutput:
    """Resume the forward pass from tokens tapped (or injected) at ``layer``."""
    _check_layer(model, layer)
    cfg = model.config
    if fmap.layer != layer:
        raise LayerError(f"feature map is tagged layer {fmap.layer}, asked to resume from {layer}")
    if fmap.data.shape != (cfg.grid_h, cfg.grid_w, cfg.dim):
        raise DimensionError(f"feature map shape {fmap.data.shape} != {(cfg.grid_h, cfg.grid_w, cfg.dim)}")
    x = _join(model, fmap)
    for i in range(layer, cfg.depth):
        x = _block(model, i, x)
    if layer < cfg.depth:
        x = layer_norm(x, model["norm.weight"], model["norm.bias"])
    out = _split(model, x, cfg.depth)
    return ModelOutput(out, out.cls)


def forward(model: ViTModel, image: np.ndarray) -> ModelOutput:
    out = forward_to_layer(model, image, model.config.depth)
    return ModelOutput(out, out.cls)
