"""Deterministic generator for the wire-protocol test vectors.

The vectors are committed under ``protocol_vectors/`` and serve two purposes:
the primary suite regenerates them and asserts byte equality (so the wire
format cannot drift silently), and any backend implementation replays them
against its live HTTP surface to prove conformance (shapes, base64 payloads,
error codes).
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from tileshift.wire import encode_array

VECTORS_DIR = Path(__file__).resolve().parent.parent / "protocol_vectors"


def _pattern_array(shape, scale=1.0, offset=0.0):
    """A fixed, platform-independent float32 array."""
    n = int(np.prod(shape))
    vals = (np.arange(n, dtype=np.float32) * np.float32(scale) + np.float32(offset))
    return (np.sin(vals) * 0.5 + 0.5).astype(np.float32).reshape(shape)


def _array_record(name, a):
    raw = np.ascontiguousarray(a, dtype="<f4").tobytes()
    return {
        "name": name,
        "shape": list(a.shape),
        "data": encode_array(a),
        "raw_sha256": hashlib.sha256(raw).hexdigest(),
    }


def build_vectors() -> dict:
    img = _pattern_array((8, 8, 3), scale=0.37)
    latent = _pattern_array((4, 4, 12), scale=0.11, offset=1.0)
    arrays = [
        _array_record("pixel_8x8x3", img),
        _array_record("latent_4x4x12", latent),
        _array_record("scalar_row", _pattern_array((1, 1, 1), offset=2.0)),
    ]

    good_denoise = {
        "prompt": "a red fox in snow",
        "step": 3,
        "total_steps": 15,
        "guidance_scale": 7.5,
        "seed": 42,
        "shape": [8, 8, 3],
        "data": encode_array(img),
    }
    requests = [
        {
            "name": "denoise_ok",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": good_denoise,
            "expect": {
                "status": 200,
                "shape": [8, 8, 3],
                "roundtrip_keys": ["guidance", "next_image"],
            },
        },
        {
            "name": "denoise_repeat_deterministic",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": good_denoise,
            "expect": {"status": 200, "identical_to": "denoise_ok"},
        },
        {
            "name": "denoise_bad_base64",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": {**good_denoise, "data": "!!!not-base64!!!"},
            "expect": {"status": 400},
        },
        {
            "name": "denoise_shape_data_mismatch",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": {**good_denoise, "shape": [16, 16, 3]},
            "expect": {"status": 400},
        },
        {
            "name": "denoise_missing_field",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": {k: v for k, v in good_denoise.items() if k != "data"},
            "expect": {"status": 400},
        },
        {
            "name": "denoise_step_out_of_range",
            "endpoint": "/v1/denoise",
            "method": "POST",
            "payload": {**good_denoise, "step": 15},
            "expect": {"status": 400},
        },
        {
            "name": "encode_ok",
            "endpoint": "/v1/encode",
            "method": "POST",
            "payload": {"shape": [8, 8, 3], "data": encode_array(img)},
            "expect": {"status": 200, "shape": [4, 4, 12], "roundtrip_keys": ["data"]},
        },
        {
            "name": "encode_bad_payload",
            "endpoint": "/v1/encode",
            "method": "POST",
            "payload": {"shape": [8, 8, 3], "data": encode_array(img[:4])},
            "expect": {"status": 400},
        },
        {
            "name": "decode_ok",
            "endpoint": "/v1/decode",
            "method": "POST",
            "payload": {"shape": [4, 4, 12], "data": encode_array(latent)},
            "expect": {"status": 200, "shape": [8, 8, 3], "roundtrip_keys": ["data"]},
        },
        {
            "name": "codec_descriptor",
            "endpoint": "/v1/codec",
            "method": "GET",
            "payload": None,
            "expect": {
                "status": 200,
                "keys": ["latent_shape", "pixel_shape", "scale_factor"],
                "integer_scale": True,
            },
        },
        {
            "name": "encode_decode_roundtrip",
            "endpoint": "/v1/encode",
            "method": "ROUNDTRIP",
            "payload": {"shape": [8, 8, 3], "data": encode_array(img)},
            "expect": {"status": 200, "bit_exact": True},
        },
    ]
    return {"format": "tileshift-protocol-vectors/1", "arrays": arrays, "requests": requests}


def write_vectors(path=None) -> Path:
    path = Path(path) if path else VECTORS_DIR / "vectors.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(build_vectors(), indent=2, sort_keys=True) + "\n")
    return path


if __name__ == "__main__":
    print(write_vectors())
