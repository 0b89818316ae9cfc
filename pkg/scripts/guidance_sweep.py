#!/usr/bin/env python3
"""Compare guidance modes on one input: pass budget and output statistics.

Runs the tiled sampler once per guidance mode over the same seeded input and
toy denoiser, then tabulates forward passes per tile-step, gather passes,
and how far each mode's output strays from the unguided baseline.

Example:
    python3 scripts/guidance_sweep.py --steps 8 --scale 1.5
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from tilevsr.guidance import GUIDANCE_MODES, GuidanceConfig
from tilevsr.models import ToyAttentionDenoiser, ToyCodec
from tilevsr.sampler import PipelineConfig, sample_video


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--modes", nargs="+", default=list(GUIDANCE_MODES))
    parser.add_argument("--frames", type=int, default=4)
    parser.add_argument("--size", type=int, default=16, help="input edge length")
    parser.add_argument("--steps", type=int, default=6)
    parser.add_argument("--scale", type=float, default=1.0)
    parser.add_argument("--rho", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-propagation", action="store_true",
                        help="disable cross-tile attention propagation")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    lr = rng.uniform(0.0, 1.0, size=(args.frames, 1, args.size, args.size))
    codec = ToyCodec(2)

    def run(mode: str):
        denoiser = ToyAttentionDenoiser(
            seed=1234, channels=1, patch_size=2, embed_dim=16,
            spatial_layers=4, cond_dim=8,
        )
        cfg = PipelineConfig(
            steps=args.steps,
            tile_frames=2 * args.frames,
            tile_h=args.size,
            tile_w=args.size,
            sap=not args.no_propagation,
            tap=not args.no_propagation,
            guidance=GuidanceConfig(mode=mode, scale=args.scale, rho=args.rho),
            seed=args.seed,
            upscale_factor=2,
        )
        started = time.perf_counter()
        result = sample_video(lr, denoiser, codec, cfg)
        return result, time.perf_counter() - started

    print(f"# {args.frames} frames at {args.size}x{args.size}, x2 upscale, "
          f"{args.steps} steps, scale {args.scale}")
    print(f"{'mode':>10}  {'ff/iter':>7}  {'eps':>5}  {'gather':>6}  "
          f"{'mean':>8}  {'std':>8}  {'vs none':>9}  {'time':>7}")
    baseline = None
    for mode in args.modes:
        result, elapsed = run(mode)
        if mode == "none":
            baseline = result.video
        drift = "-"
        if baseline is not None and mode != "none":
            drift = f"{float(np.abs(result.video - baseline).mean()):.3e}"
        stats = result.stats
        print(f"{mode:>10}  {stats.ff_per_iter:>7.3g}  {stats.eps_calls:>5}  "
              f"{stats.gather_calls:>6}  {float(result.video.mean()):>8.4f}  "
              f"{float(result.video.std()):>8.4f}  {drift:>9}  {elapsed:>6.2f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
