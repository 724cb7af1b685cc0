"""Sub-token ViT feature ensembling by translation (stochastic resonance)."""

from .errors import (
    ContainerError,
    CoverageError,
    DegenerateBasisError,
    DimensionError,
    FormatError,
    LayerError,
    ShiftBoundError,
    SRTError,
    UnsupportedStatisticError,
)
from .fields import DenseField, RunningField, read_srtf, write_srtf
from .perturb import PerturbationSet, Shift, build_grid, inverse, translate, warp_field
from .pipeline import (
    AggregationSpec,
    distill_loss,
    forward_with_srt,
    interp_baseline,
    noise_map,
    output_ensemble,
    retokenize,
    srt_dense,
    srt_tokens,
    srt_tokens_efficient,
    upsample_pc,
)
from .ppm import read_ppm, write_ppm
from .vit import FeatureMap, ModelOutput, ViTConfig, ViTModel, forward, forward_from_layer, forward_to_layer, patchify
from .weights import WeightContainer, load_weights, make_toy_model, make_toy_weights, save_weights

__version__ = "0.1.0"
