"""Tile-based diffusion video upscaling with cross-tile attention propagation."""

from .attention import (
    AttentionTensors,
    InjectedKV,
    aggregate_frame_kv,
    dssag_attention,
    extend_kv,
    extended_self_attention,
    pag_attention,
    scaled_scores,
    select_tap_frames,
    self_attention,
    softmax_rows,
    subsample_spatial_kv,
)
from .config import RunConfig, echo_lines, resolve_config
from .guidance import (
    GUIDANCE_MODES,
    GuidanceConfig,
    cfg,
    combine,
    dssag_combine,
    gamma_schedule,
    pag_combine,
    sag,
)
from .models import (
    AnalyticGaussianDenoiser,
    DenoiseResult,
    LayerHook,
    ToyAttentionDenoiser,
    ToyCodec,
)
from .quality import (
    DegradationConfig,
    bicubic_resize,
    block_match_flow,
    degrade,
    gaussian_blur,
    psnr,
    quantize,
    ssim,
    tlp,
    tof,
    warp_frame,
    warping_error,
)
from .sampler import (
    NumericError,
    PipelineConfig,
    Precondition,
    RunResult,
    RunStats,
    SigmaSchedule,
    build_sigma_schedule,
    ode_step,
    precondition,
    sample_video,
)
from .tiles import (
    Tile,
    TileGrid,
    deinterleave,
    gaussian_mask,
    interleave,
    merge,
    plan_tiles,
    split,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianDenoiser",
    "AttentionTensors",
    "DegradationConfig",
    "DenoiseResult",
    "GUIDANCE_MODES",
    "GuidanceConfig",
    "InjectedKV",
    "LayerHook",
    "NumericError",
    "PipelineConfig",
    "Precondition",
    "RunConfig",
    "RunResult",
    "RunStats",
    "SigmaSchedule",
    "Tile",
    "TileGrid",
    "ToyAttentionDenoiser",
    "ToyCodec",
    "aggregate_frame_kv",
    "bicubic_resize",
    "block_match_flow",
    "build_sigma_schedule",
    "cfg",
    "combine",
    "degrade",
    "deinterleave",
    "dssag_attention",
    "dssag_combine",
    "echo_lines",
    "extend_kv",
    "extended_self_attention",
    "gamma_schedule",
    "gaussian_blur",
    "gaussian_mask",
    "interleave",
    "merge",
    "ode_step",
    "pag_attention",
    "pag_combine",
    "plan_tiles",
    "precondition",
    "psnr",
    "quantize",
    "resolve_config",
    "sag",
    "sample_video",
    "scaled_scores",
    "select_tap_frames",
    "self_attention",
    "softmax_rows",
    "split",
    "ssim",
    "subsample_spatial_kv",
    "tlp",
    "tof",
    "warp_frame",
    "warping_error",
]
