"""Command-line entry point: ``tileshift run`` and ``tileshift verify``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 I/O error, 4 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .denoise import MockCodec, MockDenoiser
from .engine import (
    DEFAULT_MAINLINE_STEPS,
    DEFAULT_MIXING_RATIO,
    EngineConfig,
    run as engine_run,
)
from .errors import BackendError, ConfigError, IOFailure, TileshiftError
from .imageio import contact_sheet, load_png, quantize, save_png
from .manifest import build_manifest, verify_artifacts, write_manifest
from .remote import RemoteBackend
from .transforms import Identity, TileSelection, apply, invert

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_BACKEND = 4


def _parse_mock_spec(spec: str) -> dict:
    """Options after ``mock:`` as key=value pairs (target, strength, scale)."""
    opts = {}
    body = spec[len("mock:"):]
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise ConfigError(f"bad mock backend option {part!r}; expected key=value")
        k, v = part.split("=", 1)
        opts[k.strip()] = v.strip()
    return opts


def _build_backend(args, cfg: EngineConfig):
    """Return (sessions, codec) for the chosen backend."""
    spec = args.backend
    if spec.startswith("mock:") or spec == "mock":
        opts = _parse_mock_spec(spec if ":" in spec else "mock:")
        target = load_png(opts["target"]) if "target" in opts else None
        strength = float(opts.get("strength", 1.0))
        codec = None
        if cfg.is_latent:
            codec = MockCodec(
                scale_factor=int(opts.get("scale", 2)),
                pixel_channels=cfg.resolved_image_shape()[2],
            )
        sessions = [
            MockDenoiser(p, target=target, strength=strength, codec=codec)
            for p in cfg.prompts
        ]
        return sessions, codec
    if spec.startswith("http://") or spec.startswith("https://"):
        backend = RemoteBackend(spec)
        sessions = [backend.session(p) for p in cfg.prompts]
        return sessions, backend.codec() if cfg.is_latent else None
    raise ConfigError(f"backend must be 'mock:…' or an http(s) URL, got {spec!r}")


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise IOFailure(f"config file {path} not found")
    if p.suffix == ".toml":
        import tomllib

        return tomllib.loads(p.read_text())
    return json.loads(p.read_text())


def _engine_config(args) -> tuple:
    sources = []
    for s in args.source or []:
        sources.append(load_png(s))
    copies = args.copies
    if args.copies_map:
        copies = np.asarray(
            json.loads(Path(args.copies_map).read_text()), dtype=np.int64
        )
    kind = "permutation"
    if args.rings is not None:
        kind = "rings"
    if args.flip_divisions is not None:
        kind = "flips"
    cfg = EngineConfig(
        mode=args.mode,
        prompts=tuple(args.prompt),
        transform_kind=kind,
        tiles=args.tiles,
        ring_count=args.rings if args.rings is not None else 8,
        ring_step=args.ring_step,
        flip_divisions=tuple(
            int(d) for d in (args.flip_divisions or "1,4").split(",")
        ),
        mainline_steps=args.mainline_steps,
        rollout_steps=args.rollout_steps,
        mixing_ratio=args.mixing_ratio,
        copies=copies,
        source_images=tuple(sources),
        image_size=tuple(args.image_size) if args.image_size else None,
        seed=args.seed,
        output_combination=args.output_combination,
        workers=args.workers,
    )
    cfg.validate()
    return cfg, list(args.source or [])


def _config_dict(cfg: EngineConfig, source_paths, backend: str) -> dict:
    """Fully-resolved, JSON-safe configuration for the manifest."""
    return {
        "mode": cfg.mode,
        "prompts": list(cfg.prompts),
        "transform_kind": cfg.transform_kind,
        "tiles": cfg.tiles,
        "ring_count": cfg.ring_count,
        "ring_step": cfg.ring_step,
        "flip_divisions": list(cfg.flip_divisions),
        "mainline_steps": cfg.mainline_steps,
        "rollout_steps": cfg.resolved_rollout_steps,
        "mixing_ratio": cfg.mixing_ratio,
        "copies": (
            None
            if cfg.copies is None
            else int(cfg.copies)
            if np.isscalar(cfg.copies)
            else np.asarray(cfg.copies).tolist()
        ),
        "sources": [str(p) for p in source_paths],
        "image_size": list(cfg.resolved_image_shape()),
        "seed": cfg.seed,
        "output_combination": cfg.output_combination,
        "guidance_scale": cfg.guidance_scale,
        "schedule_kind": cfg.schedule_kind,
        "backend": backend,
    }


def _cmd_run(args) -> int:
    cfg, source_paths = _engine_config(args)
    sessions, codec = _build_backend(args, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    frames = {}
    hook = None
    if args.emit_contact_sheet:
        T = cfg.mainline_steps

        def hook(t, i, q):
            frames[(T - 1 - t, i)] = np.clip(q, 0.0, 1.0)

    t0 = time.monotonic()
    result = engine_run(cfg, sessions, codec=codec, trace_hook=hook)
    elapsed = time.monotonic() - t0

    outputs = []
    for i, img in enumerate(result.images):
        rel = f"output_{i:02d}.png"
        save_png(out_dir / rel, img)
        outputs.append((rel, cfg.prompts[i]))
        t = result.transforms[i]
        if not isinstance(t, (Identity, TileSelection)):
            rel_inv = f"output_{i:02d}_inverse.png"
            save_png(out_dir / rel_inv, np.clip(apply(invert(t), img), 0.0, 1.0))
    if args.emit_contact_sheet and frames:
        sheet = contact_sheet(frames, cfg.mainline_steps, len(cfg.prompts))
        save_png(out_dir / "contact_sheet.png", sheet)

    m = build_manifest(
        _config_dict(cfg, source_paths, args.backend),
        result,
        outputs,
        out_dir,
        source_paths=source_paths,
    )
    write_manifest(out_dir, m)
    # timing lives outside the manifest so reruns stay byte-identical
    (out_dir / "timing.json").write_text(
        json.dumps({"wall_clock_seconds": elapsed}) + "\n"
    )
    print(f"wrote {len(outputs)} image(s) and {out_dir / 'manifest.json'}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    failures = verify_artifacts(args.dir)
    if failures:
        for f in failures:
            print(f"FAIL: {f}")
        return EXIT_VERIFY
    print("ok: hashes, pixel conservation, and transform consistency verified")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tileshift",
        description="Create images by interleaving diffusion denoising with "
        "energy-minimizing transform re-fitting.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="run the engine and emit artifacts")
    rp.add_argument("--config", help="JSON or TOML config file; flags override it")
    rp.add_argument("--mode", choices=("free_pixel", "fixed_pixel", "free_latent", "fixed_latent"))
    rp.add_argument("--prompt", action="append", default=None, help="repeatable")
    rp.add_argument("--source", action="append", default=None, help="source image PNG (repeatable)")
    rp.add_argument("--tiles", type=int, default=8, metavar="M")
    rp.add_argument("--rings", type=int, default=None, metavar="C")
    rp.add_argument("--ring-step", type=float, default=5.0, metavar="DEG")
    rp.add_argument("--flip-divisions", default=None, metavar="d,d")
    rp.add_argument("--copies", type=int, default=None, metavar="c")
    rp.add_argument("--copies-map", default=None, metavar="FILE",
                    help="JSON array of per-tile copy counts")
    rp.add_argument("--mainline-steps", type=int, default=DEFAULT_MAINLINE_STEPS)
    rp.add_argument("--rollout-steps", type=int, default=None)
    rp.add_argument("--mixing-ratio", type=float, default=DEFAULT_MIXING_RATIO)
    rp.add_argument("--backend", default="mock:")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", default="out")
    rp.add_argument("--image-size", type=int, nargs="+", default=None,
                    metavar="N", help="H W [C] for free modes")
    rp.add_argument("--output-combination", choices=("first_rollout", "averaged"),
                    default="averaged")
    rp.add_argument("--workers", type=int, default=1)
    rp.add_argument("--emit-contact-sheet", action="store_true")
    rp.set_defaults(fn=_cmd_run)

    vp = sub.add_parser("verify", help="re-check an emitted artifact directory")
    vp.add_argument("dir")
    vp.set_defaults(fn=_cmd_verify)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv):
    """Pre-scan for --config and fold file values in as parser defaults."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    data = _load_config_file(argv[idx + 1])
    run_parser = None
    for action in ap._subparsers._group_actions:
        run_parser = action.choices.get("run")
    defaults = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        if key in ("prompt", "source") and not isinstance(v, list):
            v = [v]
        defaults[key] = v
    run_parser.set_defaults(**defaults)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        if argv and argv[0] == "run":
            _apply_config_file(ap, argv)
        args = ap.parse_args(argv)
        if args.command == "run" and (not args.mode or not args.prompt):
            raise ConfigError("run requires --mode and at least one --prompt")
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IOFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except TileshiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
