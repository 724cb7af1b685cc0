"""Sub-token translation ensembling over ViT features.

Every shift ``s`` of a perturbation set produces token features
``y_s = forward_to_layer(translate(image, s), layer)``. The naive route turns
each ``y_s`` into a piecewise-constant pixel field, warps it back by ``-s`` and
aggregates per pixel; re-tokenizing that field by weighted average pooling
gives features the network can consume again. The efficient route gets the
same pooled tokens straight from the ``y_s`` via overlap counts, never
materialising an H x W x C buffer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoverageError, DimensionError, UnsupportedStatisticError
from .fields import DenseField, RunningField
from .parallel import ForwardPool, run_forwards
from .perturb import PerturbationSet, Shift, check_shift_bound, translate, warp_field, warp_field_replicate
from .vit import FeatureMap, ModelOutput, ViTConfig, ViTModel, forward_from_layer, forward_to_layer

STATS = ("mean", "median", "variance")


@dataclass(frozen=True)
class AggregationSpec:
    stat: str = "mean"
    masked: bool = True

    def __post_init__(self):
        if self.stat not in STATS:
            raise UnsupportedStatisticError(f"unknown statistic {self.stat!r}; choose from {STATS}")


MEAN = AggregationSpec()


def _check_grid(fmap: FeatureMap, config: ViTConfig) -> None:
    if fmap.data.ndim != 3 or fmap.data.shape[:2] != (config.grid_h, config.grid_w):
        raise DimensionError(f"feature map grid {fmap.data.shape[:2]} != {(config.grid_h, config.grid_w)}")


def upsample_pc(fmap: FeatureMap, config: ViTConfig) -> DenseField:
    """Replicate each token over its patch; weight 1 everywhere."""
    _check_grid(fmap, config)
    data = np.repeat(np.repeat(fmap.data, config.patch_h, axis=0), config.patch_w, axis=1)
    return DenseField(data.astype(np.float32, copy=False), np.ones(data.shape[:2], dtype=np.float32), True)


def retokenize(field: DenseField, config: ViTConfig, layer: int = 0, cls: np.ndarray | None = None) -> FeatureMap:
    """Weight-weighted average pooling of a finalized field back onto the token grid."""
    if not field.finalized:
        raise ValueError("retokenize needs a finalized field")
    h, w, c = field.data.shape
    n, m = config.patch_h, config.patch_w
    if h % n or w % m:
        raise DimensionError(f"field {h}x{w} not divisible into {n}x{m} patches")
    wt = field.weight.astype(np.float64)
    num = (field.data.astype(np.float64) * wt[:, :, None]).reshape(h // n, n, w // m, m, c).sum(axis=(1, 3))
    den = wt.reshape(h // n, n, w // m, m).sum(axis=(1, 3))
    if np.any(den <= 0):
        i, j = np.argwhere(den <= 0)[0]
        raise CoverageError(f"token ({i}, {j}) has zero valid mass; the shift magnitude is too large")
    return FeatureMap((num / den[:, :, None]).astype(np.float32), layer, cls)


def align(fmap: FeatureMap, s: Shift, config: ViTConfig, masked: bool = True) -> DenseField:
    """Bring the features of the image translated by ``s`` back to the input frame."""
    dense = upsample_pc(fmap, config)
    return warp_field(dense, s.inverse()) if masked else warp_field_replicate(dense, s.inverse())


def _as_pset(pset) -> PerturbationSet:
    return pset if isinstance(pset, PerturbationSet) else PerturbationSet(pset)


def immerse(
    model: ViTModel,
    image: np.ndarray,
    layer: int,
    pset: PerturbationSet,
    *,
    override_bound: bool = False,
    jobs: int = 1,
    pool: ForwardPool | None = None,
) -> list[FeatureMap]:
    """Token features of every translated copy of ``image``, in shift order."""
    cfg = model.config
    check_shift_bound(pset, cfg.patch_h, cfg.patch_w, override_bound)
    return run_forwards(model, image, layer, list(pset), jobs=jobs, pool=pool)


def aggregate_dense(
    fmaps: Sequence[FeatureMap], shifts: Sequence[Shift], config: ViTConfig, agg: AggregationSpec = MEAN, slab: int = 16
) -> DenseField:
    if agg.stat == "mean":
        acc = RunningField(config.img_h, config.img_w, fmaps[0].channels)
        for fm, s in zip(fmaps, shifts):
            acc.add(align(fm, s, config, agg.masked))
        return acc.finalize()
    return _aggregate_buffered(fmaps, shifts, config, agg, slab)


def _aggregate_buffered(fmaps, shifts, config: ViTConfig, agg: AggregationSpec, slab: int) -> DenseField:
    h, w, c = config.img_h, config.img_w, fmaps[0].channels
    mass = np.zeros((h, w), dtype=np.float64)
    for fm, s in zip(fmaps, shifts):
        mass += align(FeatureMap(fm.data[:, :, :1], fm.layer), s, config, agg.masked).weight
    if np.any(mass <= 0):
        bad = np.argwhere(mass <= 0)[0]
        raise CoverageError(f"pixel {tuple(int(i) for i in bad)} has no valid sample")
    out = np.empty((h, w, c), dtype=np.float32)
    # Channel slabs bound the (T, H, W, slab) sample buffer.
    for c0 in range(0, c, slab):
        c1 = min(c, c0 + slab)
        samples = np.empty((len(fmaps), h, w, c1 - c0), dtype=np.float64)
        for t, (fm, s) in enumerate(zip(fmaps, shifts)):
            al = align(FeatureMap(fm.data[:, :, c0:c1], fm.layer), s, config, agg.masked)
            samples[t] = np.where(al.weight[:, :, None] > 0, al.data, np.nan)
        if agg.stat == "median":
            out[:, :, c0:c1] = np.nanmedian(samples, axis=0)
        else:
            out[:, :, c0:c1] = np.nanvar(samples, axis=0)
    return DenseField(out, mass.astype(np.float32), True)


def srt_dense(
    model: ViTModel,
    image: np.ndarray,
    layer: int,
    pset,
    agg: AggregationSpec = MEAN,
    *,
    override_bound: bool = False,
    jobs: int = 1,
    pool: ForwardPool | None = None,
) -> DenseField:
    """Pixel-resolution ensemble of layer-``layer`` features over ``pset``."""
    pset = _as_pset(pset)
    fmaps = immerse(model, image, layer, pset, override_bound=override_bound, jobs=jobs, pool=pool)
    return aggregate_dense(fmaps, list(pset), model.config, agg)


def srt_tokens(
    model: ViTModel,
    image: np.ndarray,
    layer: int,
    pset,
    agg: AggregationSpec = MEAN,
    *,
    override_bound: bool = False,
    jobs: int = 1,
    pool: ForwardPool | None = None,
) -> FeatureMap:
    """Naive route: dense ensemble, then weighted average pooling.

    The returned map carries the unperturbed image's CLS token at ``layer``.
    """
    pset = _as_pset(pset)
    if _is_identity(pset, agg):
        return forward_to_layer(model, image, layer)
    fmaps = immerse(model, image, layer, pset, override_bound=override_bound, jobs=jobs, pool=pool)
    field = aggregate_dense(fmaps, list(pset), model.config, agg)
    return retokenize(field, model.config, layer, fmaps[0].cls)


def _is_identity(pset: PerturbationSet, agg: AggregationSpec) -> bool:
    # One unshifted sample: mean and median reproduce it exactly, so skip the pooling.
    return len(pset) == 1 and agg.stat in ("mean", "median")


def overlap_counts(n_tokens: int, patch: int, extent: int, shift: int) -> np.ndarray:
    """Per-axis overlap table for the efficient route.

    ``counts[i, k]`` is the number of pixels ``p`` of output cell ``i`` whose
    aligned source ``p - shift`` lies on the canvas and inside token ``k``.
    Away from the borders row ``i`` holds ``patch - a`` and ``a`` with
    ``a = shift mod patch``.
    """
    counts = np.zeros((n_tokens, n_tokens), dtype=np.float64)
    for i in range(n_tokens):
        lo = max(i * patch - shift, 0)
        hi = min((i + 1) * patch - shift, extent)
        while lo < hi:
            k = lo // patch
            end = min((k + 1) * patch, hi)
            counts[i, k] += end - lo
            lo = end
    return counts


class TokenAccumulator:
    """Streaming masked-mean of pooled tokens without any pixel-resolution buffer."""

    def __init__(self, config: ViTConfig, channels: int | None = None):
        self.config = config
        c = channels or config.dim
        self.num = np.zeros((config.grid_h, config.grid_w, c), dtype=np.float64)
        self.mass = np.zeros((config.grid_h, config.grid_w), dtype=np.float64)
        self.count = 0

    def add(self, fmap: FeatureMap, s: Shift) -> None:
        cfg = self.config
        _check_grid(fmap, cfg)
        rows = overlap_counts(cfg.grid_h, cfg.patch_h, cfg.img_h, s.du)
        cols = overlap_counts(cfg.grid_w, cfg.patch_w, cfg.img_w, s.dv)
        y = fmap.data.astype(np.float64)
        gh, gw, c = y.shape
        tmp = (rows @ y.reshape(gh, gw * c)).reshape(gh, gw, c)
        self.num += np.einsum("jl,ilc->ijc", cols, tmp)
        self.mass += np.outer(rows.sum(axis=1), cols.sum(axis=1))
        self.count += 1

    def finalize(self, layer: int, cls: np.ndarray | None = None) -> FeatureMap:
        if np.any(self.mass <= 0):
            i, j = np.argwhere(self.mass <= 0)[0]
            raise CoverageError(f"token ({i}, {j}) has zero valid mass; the shift magnitude is too large")
        return FeatureMap((self.num / self.mass[:, :, None]).astype(np.float32), layer, cls)


def srt_tokens_efficient(
    model: ViTModel,
    image: np.ndarray,
    layer: int,
    pset,
    agg: AggregationSpec = MEAN,
    *,
    override_bound: bool = False,
    jobs: int = 1,
    pool: ForwardPool | None = None,
) -> FeatureMap:
    """Same result as ``srt_tokens`` with the masked mean, from overlap counts alone."""
    if agg.stat != "mean" or not agg.masked:
        raise UnsupportedStatisticError(f"the efficient route supports the masked mean only, not {agg}")
    pset = _as_pset(pset)
    if _is_identity(pset, agg):
        return forward_to_layer(model, image, layer)
    cfg = model.config
    acc = TokenAccumulator(cfg)
    if pool is None and jobs == 1:
        # Serial: fold each forward in as it completes, holding one token map at a time.
        check_shift_bound(pset, cfg.patch_h, cfg.patch_w, override_bound)
        cls = None
        for s in pset:
            fm = forward_to_layer(model, translate(image, s), layer)
            if cls is None:
                cls = fm.cls
            acc.add(fm, s)
        return acc.finalize(layer, cls)
    fmaps = immerse(model, image, layer, pset, override_bound=override_bound, jobs=jobs, pool=pool)
    for fm, s in zip(fmaps, pset):
        acc.add(fm, s)
    return acc.finalize(layer, fmaps[0].cls)


def ensemble_tokens(model, image, layer, pset, agg: AggregationSpec = MEAN, path: str = "efficient", **kw) -> FeatureMap:
    """Dispatch to a route; statistics other than the masked mean fall back to the naive one."""
    if path == "efficient" and (agg.stat != "mean" or not agg.masked):
        warnings.warn(f"{agg} is not supported by the efficient route; using the naive route", stacklevel=2)
        path = "naive"
    if path == "efficient":
        return srt_tokens_efficient(model, image, layer, pset, agg, **kw)
    if path == "naive":
        return srt_tokens(model, image, layer, pset, agg, **kw)
    raise ValueError(f"unknown path {path!r}")


def forward_with_srt(model: ViTModel, image: np.ndarray, layer: int, pset, **kw) -> ModelOutput:
    """Replace layer-``layer`` tokens by their ensemble and finish the forward pass.

    The CLS token entering the resumed blocks is the unperturbed one; it then
    attends to the ensembled spatial tokens in every later block.
    """
    tokens = srt_tokens_efficient(model, image, layer, pset, **kw)
    return forward_from_layer(model, tokens, layer)


def output_ensemble(model: ViTModel, image: np.ndarray, pset, **kw) -> ModelOutput:
    """Baseline that averages final-layer outputs instead of intermediate features."""
    pset = _as_pset(pset)
    cfg = model.config
    fmaps = immerse(model, image, cfg.depth, pset, **kw)
    dense = aggregate_dense(fmaps, list(pset), cfg, MEAN)
    cls = None
    if cfg.use_cls:
        cls = (np.sum([fm.cls.astype(np.float64) for fm in fmaps], axis=0) / len(fmaps)).astype(np.float32)
    return ModelOutput(retokenize(dense, cfg, cfg.depth, cls), cls, dense)


@dataclass
class NoiseMap:
    values: np.ndarray  # (H, W) float32
    counts: np.ndarray  # (bins,) int
    edges: np.ndarray  # (bins + 1,)


def _histogram(values: np.ndarray, bins: int = 64) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(values.astype(np.float64).ravel(), bins=bins)
    return counts, edges


def noise_map(model: ViTModel, image: np.ndarray, layer: int, pset, bins: int = 64, **kw) -> NoiseMap:
    """Per-pixel L2 distance between the dense ensemble and the single-pass field."""
    pset = _as_pset(pset)
    fmaps = immerse(model, image, layer, pset, **kw)
    dense = aggregate_dense(fmaps, list(pset), model.config, MEAN)
    single = upsample_pc(fmaps[0], model.config)
    diff = dense.data.astype(np.float64) - single.data.astype(np.float64)
    values = np.sqrt(np.sum(diff * diff, axis=-1)).astype(np.float32)
    return NoiseMap(values, *_histogram(values, bins))


def interp_weights(src: np.ndarray, in_len: int, mode: str) -> np.ndarray:
    """Row ``i`` holds the weights over the ``in_len`` grid samples at coordinate ``src[i]``.

    Bilinear clamps coordinates to ``[0, in_len - 1]``; bicubic uses the
    cubic-convolution kernel with a = -0.75 and clamps tap indices. Both match
    the half-pixel conventions of common deep-learning resizers.
    """
    src = np.asarray(src, dtype=np.float64)
    out = np.zeros((src.size, in_len), dtype=np.float64)
    rows = np.arange(src.size)
    if mode == "bilinear":
        x = np.clip(src, 0.0, in_len - 1)
        i0 = np.floor(x).astype(int)
        i1 = np.minimum(i0 + 1, in_len - 1)
        frac = x - i0
        np.add.at(out, (rows, i0), 1.0 - frac)
        np.add.at(out, (rows, i1), frac)
    elif mode == "bicubic":
        a = -0.75
        i0 = np.floor(src).astype(int)
        t = src - i0

        def near(x):  # |x| <= 1
            return ((a + 2) * x - (a + 3)) * x * x + 1

        def far(x):  # 1 < |x| < 2
            return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a

        taps = [far(t + 1), near(t), near(1 - t), far(2 - t)]
        for off, wt in zip((-1, 0, 1, 2), taps):
            np.add.at(out, (rows, np.clip(i0 + off, 0, in_len - 1)), wt)
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    return out


def interp_matrix(out_len: int, in_len: int, mode: str) -> np.ndarray:
    scale = in_len / out_len
    src = (np.arange(out_len) + 0.5) * scale - 0.5
    return interp_weights(src, in_len, mode)


def interp_dense(fmap: FeatureMap, config: ViTConfig, mode: str = "bilinear") -> DenseField:
    """Interpolate the token grid up to image resolution."""
    _check_grid(fmap, config)
    r = interp_matrix(config.img_h, config.grid_h, mode)
    c = interp_matrix(config.img_w, config.grid_w, mode)
    y = fmap.data.astype(np.float64)
    gh, gw, ch = y.shape
    tmp = (r @ y.reshape(gh, gw * ch)).reshape(config.img_h, gw, ch)
    data = np.einsum("jl,ilc->ijc", c, tmp).astype(np.float32)
    return DenseField(data, np.ones(data.shape[:2], dtype=np.float32), True)


def interp_baseline(model: ViTModel, image: np.ndarray, layer: int, mode: str = "bilinear") -> FeatureMap:
    """Single pass, interpolate tokens to pixels, average-pool back to tokens."""
    fmap = forward_to_layer(model, image, layer)
    return retokenize(interp_dense(fmap, model.config, mode), model.config, layer, fmap.cls)


def interp_noise_map(model: ViTModel, image: np.ndarray, layer: int, mode: str = "bilinear", bins: int = 64) -> NoiseMap:
    """Difference map of the interpolation baseline against the single pass.

    Both token maps are spread back over their patches before taking the
    per-pixel L2 norm, mirroring how ``noise_map`` compares pixel fields.
    """
    cfg = model.config
    single = forward_to_layer(model, image, layer)
    pooled = retokenize(interp_dense(single, cfg, mode), cfg, layer)
    diff = upsample_pc(pooled, cfg).data.astype(np.float64) - upsample_pc(single, cfg).data.astype(np.float64)
    values = np.sqrt(np.sum(diff * diff, axis=-1)).astype(np.float32)
    return NoiseMap(values, *_histogram(values, bins))


def distill_loss(model_w: ViTModel, model_w0: ViTModel, image: np.ndarray, pset, **kw) -> float:
    """Frobenius distance between the student's last-layer tokens and the SRT teacher's."""
    if model_w.config != model_w0.config:
        raise DimensionError("student and teacher configs differ")
    depth = model_w.config.depth
    student = forward_to_layer(model_w, image, depth).data.astype(np.float64)
    teacher = srt_tokens_efficient(model_w0, image, depth, pset, **kw).data.astype(np.float64)
    return float(np.sqrt(np.sum((student - teacher) ** 2)))
