"""Command-line front end.

Verbs: upscale | degrade | metrics | ablate | fixture.  Every command echoes
the fully resolved configuration (defaults included) to stdout before doing
any work, so a run log always pins down what actually ran.

Exit codes: 0 success, 2 usage or config or I/O error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import io as tio
from .config import RunConfig, echo_lines, parse_config_text, resolve_config
from .quality import block_match_flow, degrade, psnr, ssim, tlp, tof, warping_error
from .sampler import NumericError, sample_video

GUIDANCE_TOGGLES = ("dssag", "sag", "pag")
ABLATE_TOGGLES = ("sap", "tap") + GUIDANCE_TOGGLES
FIXTURE_KINDS = ("constant", "translate", "texture")


# ---------------------------------------------------------------------------
# synthetic fixtures

def synthetic_video(
    kind: str,
    frames: int,
    channels: int,
    height: int,
    width: int,
    shift: tuple[int, int] = (1, 2),
    value: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Seeded test video in [0, 1), shape (frames, channels, height, width).

    constant: every sample equals `value`.
    texture: one seeded random plane repeated across frames (zero motion).
    translate: the same plane cyclically shifted by `shift` per frame, so the
    frame-to-frame displacement field is exactly `shift` away from the wrap.
    """
    if min(frames, channels, height, width) < 1:
        raise ValueError("fixture dims must all be >= 1")
    if kind == "constant":
        return np.full((frames, channels, height, width), float(value))
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0, size=(channels, height, width))
    if kind == "texture":
        return np.stack([base] * frames)
    if kind == "translate":
        dy, dx = int(shift[0]), int(shift[1])
        return np.stack(
            [np.roll(base, (i * dy, i * dx), axis=(1, 2)) for i in range(frames)]
        )
    raise ValueError(f"unknown fixture kind {kind!r}, expected one of {FIXTURE_KINDS}")


def parse_size(value: str) -> tuple[int, int]:
    parts = value.lower().replace("×", "x").split("x")
    if len(parts) != 2:
        raise ValueError(f"size must look like HxW, got {value!r}")
    h, w = int(parts[0]), int(parts[1])
    if h < 1 or w < 1:
        raise ValueError(f"size extents must be >= 1, got {value!r}")
    return h, w


def parse_shift(value: str) -> tuple[int, int]:
    parts = value.split(",")
    if len(parts) != 2:
        raise ValueError(f"shift must look like DY,DX, got {value!r}")
    return int(parts[0]), int(parts[1])


# ---------------------------------------------------------------------------
# shared plumbing

def _echo_config(cfg: RunConfig) -> None:
    print("# resolved config")
    for line in echo_lines(cfg):
        print(line)


def _common_overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "steps": args.steps,
        "tile": args.tile,
        "guidance": args.guidance,
        "scale": args.scale,
        "rho": args.rho,
        "sap_rate": args.sap_rate,
        "tap_l": args.tap_l,
    }


def _write_trace(path: str, lines: list[str]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tio.atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def _write_video(out: str, video: np.ndarray, pfm: bool) -> None:
    """Container if `out` names a .dcvt file, otherwise a frame directory
    (8-bit PPM plus a lossless .dcvt alongside, PFM on request)."""
    if out.endswith(".dcvt"):
        tio.write_tensor(out, video)
        return
    os.makedirs(out, exist_ok=True)
    tio.save_frames(out, np.clip(video, 0.0, 1.0), fmt="ppm")
    if pfm:
        tio.save_frames(out, video, fmt="pfm")
    tio.write_tensor(os.path.join(out, "video.dcvt"), video)


def _print_stats(stats) -> None:
    print(f"eps_calls={stats.eps_calls}")
    print(f"gather_calls={stats.gather_calls}")
    print(f"tile_units={stats.tile_units}")
    print(f"ff_per_iter={stats.ff_per_iter:.6g}")


# ---------------------------------------------------------------------------
# commands

def cmd_upscale(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _common_overrides(args))
    _echo_config(cfg)
    video = tio.load_video(args.input)
    denoiser = cfg.build_denoiser(channels=video.shape[1])
    result = sample_video(video, denoiser, cfg.build_codec(), cfg.pipeline_config())
    _write_video(args.out, result.video, args.pfm)
    trace_path = args.trace
    if trace_path is None:
        base = args.out[: -len(".dcvt")] if args.out.endswith(".dcvt") else args.out
        trace_path = base + ".trace" if args.out.endswith(".dcvt") else os.path.join(base, "trace.log")
    _write_trace(trace_path, result.trace)
    _print_stats(result.stats)
    print(f"trace={trace_path}")
    return 0


def cmd_degrade(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _common_overrides(args))
    _echo_config(cfg)
    video = tio.load_video(args.input)
    lr = degrade(video, cfg.degradation_config())
    _write_video(args.out, lr, args.pfm)
    print(f"frames={lr.shape[0]} height={lr.shape[2]} width={lr.shape[3]}")
    return 0


def _metric_rows(cfg: RunConfig, restored: np.ndarray, gt: np.ndarray | None) -> dict:
    def flow(a, b):
        return block_match_flow(a, b, block=cfg.flow_block, radius=cfg.flow_radius)

    multi = restored.shape[0] >= 2
    rows: dict = {}
    if gt is not None:
        rows["psnr"] = psnr(gt, restored)
        rows["ssim"] = ssim(gt, restored)
        rows["tof"] = tof(gt, restored, flow_fn=flow) if multi else "n/a"
        rows["tlp"] = tlp(gt, restored) if multi else "n/a"
    rows["we"] = warping_error(restored, flow_fn=flow) if multi else "n/a"
    return rows


def _format_value(value) -> str:
    return value if isinstance(value, str) else f"{value:.6g}"


def cmd_metrics(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _common_overrides(args))
    _echo_config(cfg)
    gt = tio.load_video(args.gt)
    restored = tio.load_video(args.restored)
    if gt.shape != restored.shape:
        raise ValueError(f"shape mismatch: gt {gt.shape} vs restored {restored.shape}")
    for key, value in _metric_rows(cfg, restored, gt).items():
        print(f"{key}={_format_value(value)}")
    return 0


def parse_variant(spec: str) -> tuple[str, dict]:
    """One ablation variant: '+'-joined toggles, or 'none' for everything off.

    Returns (canonical name, RunConfig field overrides).  At most one guidance
    toggle may appear; sap/tap toggles switch the propagation schemes.
    """
    name = spec.strip()
    toggles = [] if name in ("", "none") else name.split("+")
    seen: list[str] = []
    for toggle in toggles:
        if toggle not in ABLATE_TOGGLES:
            raise ValueError(f"unknown ablation toggle {toggle!r}, expected among {ABLATE_TOGGLES}")
        if toggle in seen:
            raise ValueError(f"duplicate ablation toggle {toggle!r} in {spec!r}")
        seen.append(toggle)
    modes = [t for t in seen if t in GUIDANCE_TOGGLES]
    if len(modes) > 1:
        raise ValueError(f"conflicting guidance toggles in {spec!r}: {'+'.join(modes)}")
    overrides = {
        "sap": "sap" in seen,
        "tap": "tap" in seen,
        "guidance": modes[0] if modes else "none",
    }
    return (name or "none"), overrides


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _common_overrides(args))
    _echo_config(cfg)
    video = tio.load_video(args.input)
    gt = tio.load_video(args.gt) if args.gt else None
    if gt is not None and gt.shape[0] != video.shape[0]:
        raise ValueError(f"gt has {gt.shape[0]} frames, input has {video.shape[0]}")
    denoiser = cfg.build_denoiser(channels=video.shape[1])
    codec = cfg.build_codec()
    variants = [v for v in (s.strip() for s in args.variants.split(",")) if v]
    if not variants:
        raise ValueError("no ablation variants given")
    for spec in variants:
        name, overrides = parse_variant(spec)
        vcfg = dataclasses.replace(cfg, **overrides)
        result = sample_video(video, denoiser, codec, vcfg.pipeline_config())
        if args.trace:
            _write_trace(f"{args.trace}.{name}", result.trace)
        stats = result.stats
        cells = [
            f"variant={name}",
            f"eps_calls={stats.eps_calls}",
            f"gather_calls={stats.gather_calls}",
            f"ff_per_iter={stats.ff_per_iter:.6g}",
        ]
        if gt is not None and gt.shape != result.video.shape:
            raise ValueError(f"gt shape {gt.shape} does not match output {result.video.shape}")
        cells += [f"{k}={_format_value(v)}" for k, v in _metric_rows(cfg, result.video, gt).items()]
        print(" ".join(cells))
    return 0


_FIXTURE_KEYS = {"kind", "size", "frames", "channels", "shift", "value"}


def cmd_fixture(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _common_overrides(args))
    _echo_config(cfg)
    spec = {
        "kind": "translate",
        "size": (32, 32),
        "frames": 8,
        "channels": 3,
        "shift": (1, 2),
        "value": 0.5,
    }
    if args.spec:
        with open(args.spec, "r", encoding="ascii") as fh:
            raw = parse_config_text(fh.read(), source=args.spec, allowed=_FIXTURE_KEYS)
        if "kind" in raw:
            spec["kind"] = raw["kind"]
        if "size" in raw:
            spec["size"] = parse_size(raw["size"])
        if "frames" in raw:
            spec["frames"] = int(raw["frames"])
        if "channels" in raw:
            spec["channels"] = int(raw["channels"])
        if "shift" in raw:
            spec["shift"] = parse_shift(raw["shift"])
        if "value" in raw:
            spec["value"] = float(raw["value"])
    for key in ("kind", "frames", "channels", "value"):
        flag = getattr(args, key)
        if flag is not None:
            spec[key] = flag
    if args.size is not None:
        spec["size"] = args.size
    if args.shift is not None:
        spec["shift"] = args.shift
    if spec["kind"] not in FIXTURE_KINDS:
        raise ValueError(f"unknown fixture kind {spec['kind']!r}, expected one of {FIXTURE_KINDS}")

    height, width = spec["size"]
    hr = synthetic_video(
        spec["kind"], spec["frames"], spec["channels"], height, width,
        shift=spec["shift"], value=spec["value"], seed=cfg.seed,
    )
    lr = degrade(hr, cfg.degradation_config())
    os.makedirs(args.out, exist_ok=True)
    tio.write_tensor(os.path.join(args.out, "hr.dcvt"), hr)
    tio.write_tensor(os.path.join(args.out, "lr.dcvt"), lr)
    for sub, vid in (("hr", hr), ("lr", lr)):
        frame_dir = os.path.join(args.out, sub)
        os.makedirs(frame_dir, exist_ok=True)
        tio.save_frames(frame_dir, np.clip(vid, 0.0, 1.0), fmt="ppm")
        if args.pfm:
            tio.save_frames(frame_dir, vid, fmt="pfm")
    spec_lines = [
        f"kind={spec['kind']}",
        f"size={height}x{width}",
        f"frames={spec['frames']}",
        f"channels={spec['channels']}",
        f"shift={spec['shift'][0]},{spec['shift'][1]}",
        f"value={spec['value']}",
    ]
    tio.atomic_write_bytes(
        os.path.join(args.out, "fixture.cfg"), ("\n".join(spec_lines) + "\n").encode("ascii")
    )
    tio.atomic_write_bytes(
        os.path.join(args.out, "run.cfg"), ("\n".join(echo_lines(cfg)) + "\n").encode("ascii")
    )
    print(f"hr={os.path.join(args.out, 'hr.dcvt')}")
    print(f"lr={os.path.join(args.out, 'lr.dcvt')}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key=value config file")
    sub.add_argument("--seed", type=int, metavar="N")
    sub.add_argument("--steps", type=int, metavar="N")
    sub.add_argument("--tile", metavar="HxWxF", help="tile extents, e.g. 64x64x14")
    sub.add_argument("--guidance", metavar="MODE", help="none|cfg|sag|pag|dssag|cfg_dssag")
    sub.add_argument("--scale", type=float, metavar="S", help="guidance scale")
    sub.add_argument("--rho", type=float, metavar="R", help="suppression schedule exponent")
    sub.add_argument("--sap-rate", dest="sap_rate", type=int, metavar="N")
    sub.add_argument("--tap-l", dest="tap_l", type=int, metavar="N")
    sub.add_argument("--trace", metavar="PATH", help="step-trace output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilevsr", description="Tile-based diffusion video upscaler and toolkit."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    upscale = commands.add_parser("upscale", help="upscale a low-res video")
    upscale.add_argument("input", help="frame directory or .dcvt container")
    upscale.add_argument("--out", required=True, help="output directory or .dcvt path")
    upscale.add_argument("--pfm", action="store_true", help="also write float PFM frames")
    _add_common(upscale)
    upscale.set_defaults(func=cmd_upscale)

    degrade_p = commands.add_parser("degrade", help="apply the degradation pipeline")
    degrade_p.add_argument("input", help="frame directory or .dcvt container")
    degrade_p.add_argument("--out", required=True, help="output directory or .dcvt path")
    degrade_p.add_argument("--pfm", action="store_true", help="also write float PFM frames")
    _add_common(degrade_p)
    degrade_p.set_defaults(func=cmd_degrade)

    metrics_p = commands.add_parser("metrics", help="compare restored video against ground truth")
    metrics_p.add_argument("gt", help="ground-truth frames or container")
    metrics_p.add_argument("restored", help="restored frames or container")
    _add_common(metrics_p)
    metrics_p.set_defaults(func=cmd_metrics)

    ablate = commands.add_parser("ablate", help="run toggle variants and report metrics")
    ablate.add_argument("input", help="low-res frames or container")
    ablate.add_argument("--gt", metavar="PATH", help="ground truth for fidelity metrics")
    ablate.add_argument(
        "--variants",
        default="sap+tap+dssag,sap+tap,none",
        metavar="CSV",
        help="comma-separated '+'-joined toggles among sap,tap,dssag,sag,pag; 'none' = all off",
    )
    _add_common(ablate)
    ablate.set_defaults(func=cmd_ablate)

    fixture = commands.add_parser("fixture", help="generate synthetic test videos")
    fixture.add_argument("--out", required=True, help="output directory")
    fixture.add_argument("--spec", metavar="PATH", help="fixture spec file (key=value)")
    fixture.add_argument("--kind", choices=FIXTURE_KINDS)
    fixture.add_argument("--size", type=parse_size, metavar="HxW")
    fixture.add_argument("--frames", type=int, metavar="N")
    fixture.add_argument("--channels", type=int, metavar="N")
    fixture.add_argument("--shift", type=parse_shift, metavar="DY,DX")
    fixture.add_argument("--value", type=float, metavar="V")
    fixture.add_argument("--pfm", action="store_true", help="also write float PFM frames")
    _add_common(fixture)
    fixture.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
