"""Run manifests: deterministic JSON records of a run plus a verifier.

The manifest holds the resolved configuration, per-step energies, the change
trace, the fitted transforms, and content hashes of every emitted file.  It is
byte-identical across reruns of the same config and seed; wall-clock timing
goes to a separate ``timing.json`` so it never breaks that property.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import IOFailure
from .grids import Tiling
from .imageio import load_png, quantize
from .transforms import (
    FlipConfig,
    Identity,
    RingRotation,
    TilePermutation,
    TileSelection,
    apply,
)

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def transform_to_dict(t) -> dict:
    if isinstance(t, Identity):
        return {"kind": "identity"}
    if isinstance(t, TilePermutation):
        return {
            "kind": "permutation",
            "grid_m": t.tiling.grid_m,
            "tile_h": t.tiling.tile_h,
            "tile_w": t.tiling.tile_w,
            "mapping": t.mapping.tolist(),
        }
    if isinstance(t, TileSelection):
        return {
            "kind": "selection",
            "grid_m": t.tiling.grid_m,
            "tile_h": t.tiling.tile_h,
            "tile_w": t.tiling.tile_w,
            "bank_size": t.bank_size,
            "mapping": t.mapping.tolist(),
        }
    if isinstance(t, RingRotation):
        return {
            "kind": "rings",
            "ring_count": t.ring_count,
            "angular_step": t.angular_step,
            "rotations": t.rotations.tolist(),
        }
    if isinstance(t, FlipConfig):
        return {
            "kind": "flips",
            "divisions": list(t.divisions),
            "ops": [g.tolist() for g in t.ops],
        }
    raise TypeError(type(t).__name__)


def transform_from_dict(d: dict):
    kind = d["kind"]
    if kind == "identity":
        return Identity()
    tiling = None
    if "grid_m" in d:
        tiling = Tiling(grid_m=d["grid_m"], tile_h=d["tile_h"], tile_w=d["tile_w"])
    if kind == "permutation":
        return TilePermutation(tiling=tiling, mapping=np.asarray(d["mapping"], np.int64))
    if kind == "selection":
        return TileSelection(
            tiling=tiling,
            mapping=np.asarray(d["mapping"], np.int64),
            bank_size=d["bank_size"],
        )
    if kind == "rings":
        return RingRotation(
            ring_count=d["ring_count"],
            rotations=np.asarray(d["rotations"], np.float64),
            angular_step=d["angular_step"],
        )
    if kind == "flips":
        return FlipConfig(
            divisions=tuple(d["divisions"]),
            ops=tuple(np.asarray(g, np.int8) for g in d["ops"]),
        )
    raise ValueError(f"unknown transform kind {kind!r}")


def build_manifest(config_dict: dict, result, outputs, out_dir, source_paths=()) -> dict:
    """Assemble the manifest dict. ``outputs`` is [(relative path, prompt)]."""
    out_dir = Path(out_dir)
    return {
        "format": "tileshift-run/1",
        "config": config_dict,
        "seed": config_dict.get("seed", 0),
        "energies": [float(e) for e in result.energies],
        "change_trace": [int(c) for c in result.change_trace],
        "per_prompt_trace": [[int(c) for c in tr] for tr in result.per_prompt_trace],
        "transforms": [transform_to_dict(t) for t in result.transforms],
        "sources": [
            {"path": str(p), "sha256": sha256_file(p)} for p in source_paths
        ],
        "outputs": [
            {
                "path": rel,
                "prompt": prompt,
                "sha256": sha256_file(out_dir / rel),
            }
            for rel, prompt in outputs
        ],
    }


def write_manifest(out_dir, manifest: dict) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(out_dir) -> dict:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        raise IOFailure(f"no {MANIFEST_NAME} in {out_dir}")
    return json.loads(path.read_text())


def verify_artifacts(out_dir) -> list:
    """Re-check hashes, pixel conservation, and transform consistency.

    Returns a list of human-readable failure strings; empty means all checks
    passed.
    """
    out_dir = Path(out_dir)
    m = load_manifest(out_dir)
    failures = []
    images = {}
    for rec in m["outputs"]:
        path = out_dir / rec["path"]
        if not path.is_file():
            failures.append(f"missing output file {rec['path']}")
            continue
        digest = sha256_file(path)
        if digest != rec["sha256"]:
            failures.append(
                f"hash mismatch for {rec['path']}: manifest {rec['sha256'][:12]}…, "
                f"file {digest[:12]}…"
            )
        images[rec["path"]] = quantize(load_png(path))

    cfg = m.get("config", {})
    mode = cfg.get("mode", "")
    transforms = [transform_from_dict(d) for d in m.get("transforms", [])]

    # pixel conservation: fixed-mode outputs rearrange the source's pixels
    # exactly (only checkable for single-source, single-copy permutations)
    if mode.startswith("fixed") and cfg.get("transform_kind") == "permutation":
        plain = len(m.get("sources", [])) == 1 and all(
            t.get("kind") == "permutation" for t in m.get("transforms", [])
        )
        if plain:
            src_path = Path(m["sources"][0]["path"])
            if not src_path.is_absolute():
                src_path = out_dir / src_path
            if src_path.is_file():
                src_sorted = np.sort(quantize(load_png(src_path)), axis=None)
                for rec in m["outputs"]:
                    img = images.get(rec["path"])
                    if img is None:
                        continue
                    if not np.array_equal(np.sort(img, axis=None), src_sorted):
                        failures.append(
                            f"pixel conservation violated for {rec['path']}"
                        )
            else:
                failures.append(f"source image {src_path} not found")

    # transform consistency: each free-mode output is exactly the recorded
    # transform of the first output (holds post-quantization because the
    # transforms only move pixels)
    if mode.startswith("free") and transforms and m["outputs"]:
        first = images.get(m["outputs"][0]["path"])
        if first is not None:
            for rec, t in zip(m["outputs"][1:], transforms[1:]):
                img = images.get(rec["path"])
                if img is None:
                    continue
                expected = apply(t, first.astype(np.float32))
                if not np.array_equal(expected.astype(np.uint8), img):
                    failures.append(
                        f"transform consistency violated for {rec['path']}"
                    )
    return failures
