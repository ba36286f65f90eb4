"""Command-line front end: render frame sequences from a job config."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, EffectConfig, parse_config
from .fog import STATIC_PRESETS, StaticWeatherParams
from .pipeline import run_job
from .scene import SceneDataError, SceneFormatError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatweather",
        description="Render Gaussian splat scenes under synthesized weather.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    render = sub.add_parser("render", help="render a frame sequence from a job config")
    render.add_argument("config", type=Path, help="YAML job config")
    render.add_argument("--frames", type=int, help="override frame count")
    render.add_argument("--output", type=Path, help="override output directory")
    render.add_argument("--seed", type=int, help="override the job seed")
    render.add_argument("--threads", type=int, help="worker thread hint")
    render.add_argument(
        "--rain", action="store_true", help="append a preset rainfall effect"
    )
    render.add_argument(
        "--snowfall", action="store_true", help="append a preset snowfall effect"
    )
    render.add_argument(
        "--snow-cover", action="store_true", help="append a preset snow cover effect"
    )
    render.add_argument(
        "--fog-color", type=float, nargs=3, metavar=("R", "G", "B"),
        help="append a static effect with this color",
    )
    render.add_argument(
        "--fog-intensity", type=float, help="intensity for the appended static effect"
    )
    return parser


def _apply_overrides(cfg, args):
    if args.frames is not None:
        if args.frames < 1:
            raise ConfigError("--frames: must be >= 1")
        cfg = replace(cfg, camera=replace(cfg.camera, frames=args.frames))
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg = replace(cfg, thread_count=args.threads)

    extra = list(cfg.weather)
    if args.snow_cover:
        from .snowcover import SnowCoverParams

        extra.append(EffectConfig("snow_cover", SnowCoverParams()))
    if args.rain:
        extra.append(EffectConfig("rainfall", {"kind": "rain"}))
    if args.snowfall:
        extra.append(EffectConfig("snowfall", {"kind": "snow"}))
    if args.fog_color is not None or args.fog_intensity is not None:
        base = STATIC_PRESETS["fog"]
        color = tuple(args.fog_color) if args.fog_color is not None else base.fog_color
        intensity = (
            args.fog_intensity if args.fog_intensity is not None else base.intensity
        )
        try:
            extra.append(EffectConfig("static", StaticWeatherParams(color, intensity)))
        except ValueError as exc:
            raise ConfigError(f"--fog-color/--fog-intensity: {exc}") from exc
    if len(extra) != len(cfg.weather):
        cfg = replace(cfg, weather=tuple(extra))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        manifest = run_job(cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (SceneFormatError, SceneDataError, FileNotFoundError, OSError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: render: {exc}", file=sys.stderr)
        return 1
    total_ms = sum(entry["wall_ms"] for entry in manifest.frames)
    print(
        f"rendered {len(manifest.frames)} frame(s) to {cfg.output_dir} "
        f"({total_ms:.0f} ms total)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
