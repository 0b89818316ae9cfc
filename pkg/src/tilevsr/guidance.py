"""Guidance combinators, the suppression-strength schedule, and blur-based
self-attention guidance.

Every combinator is the same affine update, base + (1 + s) * (target - base),
applied to different (base, target) noise-estimate pairs:

  classifier-free:     base = unconditional,        target = conditional
  perturbed-attention: base = identity-perturbed,   target = normal
  detail-suppressed:   base = gamma-tempered,       target = normal or cond
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quality import gaussian_blur

GUIDANCE_MODES = ("none", "cfg", "sag", "pag", "dssag", "cfg_dssag")


@dataclass
class GuidanceConfig:
    mode: str = "cfg_dssag"
    scale: float = 1.0
    rho: float = 0.5
    sag_blur_sigma: float = 2.0
    sag_mask_quantile: float = 0.5

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}, expected one of {GUIDANCE_MODES}")
        if not np.isfinite(self.scale):
            raise ValueError("guidance scale must be finite")
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.sag_blur_sigma < 0:
            raise ValueError(f"sag_blur_sigma must be >= 0, got {self.sag_blur_sigma}")
        if not 0.0 < self.sag_mask_quantile <= 1.0:
            raise ValueError(
                f"sag_mask_quantile must be in (0, 1], got {self.sag_mask_quantile}"
            )


def combine(eps_base: np.ndarray, eps_target: np.ndarray, scale: float) -> np.ndarray:
    """base + (1 + scale) * (target - base). scale = -1 gives base, 0 target."""
    eps_base = np.asarray(eps_base, dtype=np.float64)
    eps_target = np.asarray(eps_target, dtype=np.float64)
    if eps_base.shape != eps_target.shape:
        raise ValueError(f"shape mismatch: {eps_base.shape} vs {eps_target.shape}")
    # limiting scales return the operand itself so callers can rely on
    # bit-exact reductions instead of base + (target - base) rounding
    if scale == -1.0:
        return eps_base.copy()
    if scale == 0.0:
        return eps_target.copy()
    return eps_base + (1.0 + scale) * (eps_target - eps_base)


def cfg(eps_uncond: np.ndarray, eps_cond: np.ndarray, scale: float) -> np.ndarray:
    return combine(eps_uncond, eps_cond, scale)


def pag_combine(eps_perturbed: np.ndarray, eps_normal: np.ndarray, scale: float) -> np.ndarray:
    return combine(eps_perturbed, eps_normal, scale)


def dssag_combine(eps_suppressed: np.ndarray, eps_target: np.ndarray, scale: float) -> np.ndarray:
    return combine(eps_suppressed, eps_target, scale)


def gamma_schedule(sigma_t: float, sigma_start: float, sigma_end: float, rho: float = 0.5) -> float:
    """Suppression strength ((ln s_t - ln s_end) / (ln s_start - ln s_end)) ** rho.

    1 at sigma_start, 0 at sigma_end, monotone in between; rho < 1 front-loads
    the suppression toward the high-noise end.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if not (sigma_start > sigma_end > 0):
        raise ValueError(
            f"need sigma_start > sigma_end > 0, got start={sigma_start} end={sigma_end}"
        )
    if not (sigma_end <= sigma_t <= sigma_start):
        raise ValueError(
            f"sigma_t={sigma_t} outside [{sigma_end}, {sigma_start}]"
        )
    ratio = (np.log(sigma_t) - np.log(sigma_end)) / (np.log(sigma_start) - np.log(sigma_end))
    return float(ratio ** rho)


def sag(run_eps, x_t: np.ndarray, sigma: float, cfg_: GuidanceConfig, conditional: bool = False) -> np.ndarray:
    """Self-attention guidance via masked blurring of the denoised estimate.

    run_eps(x, collect_attention, conditional) is the denoiser adapter: it
    returns the noise estimate for x, and when collect_attention is true also
    an attention-score map of shape (frames, h, w) aligned with x. Steps:
    detect salient tokens on the unconditional pass, blur the denoised
    estimate x0 = x_t - sigma * eps inside the salient mask, re-noise, and
    guide from the estimate of that degraded input toward the normal one.
    With conditional=True the target comes from a third, conditional pass.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    eps0, scores = run_eps(x_t, collect_attention=True, conditional=False)
    eps0 = np.asarray(eps0, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (x_t.shape[0],) + x_t.shape[2:]:
        raise ValueError(
            f"attention map shape {scores.shape} does not match frames/space of {x_t.shape}"
        )
    threshold = np.quantile(scores, cfg_.sag_mask_quantile)
    mask = (scores > threshold)[:, None, :, :]

    x0 = x_t - sigma * eps0
    # b = x_t + mask * (blur(x0) - x0): identical to blurring x0 under the
    # mask and re-noising, but degenerate blur/mask leave x_t bit-exact
    delta = mask * (gaussian_blur(x0, cfg_.sag_blur_sigma) - x0)
    b = x_t + delta

    eps_base = np.asarray(run_eps(b, collect_attention=False, conditional=False), dtype=np.float64)
    if conditional:
        eps_target = np.asarray(
            run_eps(x_t, collect_attention=False, conditional=True), dtype=np.float64
        )
    else:
        eps_target = eps0
    return combine(eps_base, eps_target, cfg_.scale)
