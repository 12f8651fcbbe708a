"""Wire encoding for the denoiser protocol.

Arrays travel as base64 of little-endian 32-bit floats inside a JSON
envelope; the encoding round-trips bit-exactly.
"""

from __future__ import annotations

import base64

import numpy as np

from .errors import ProtocolError


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f4").tobytes()).decode("ascii")


def decode_array(data: str, shape) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 payload: {exc}") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ProtocolError(f"payload is {len(raw)} bytes, shape {tuple(shape)} needs {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(tuple(shape)).copy()


def image_payload(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": encode_array(a)}


def image_from_payload(obj: dict, key: str = "data") -> np.ndarray:
    if "shape" not in obj or key not in obj:
        raise ProtocolError(f"payload missing 'shape' or {key!r}")
    return decode_array(obj[key], obj["shape"])
