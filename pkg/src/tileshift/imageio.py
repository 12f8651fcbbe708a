"""PNG input/output.

All internal processing is float32 in [0, 1]; quantization to 8-bit happens
only here, at emission, using round-half-away-from-zero so that quantization
commutes with pixel-moving transforms.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import IOFailure


def quantize(a: np.ndarray) -> np.ndarray:
    """Float [0, 1] image to uint8, rounding half away from zero."""
    a = np.clip(np.asarray(a, dtype=np.float32), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def load_png(path) -> np.ndarray:
    """Load a PNG as a float32 (H, W, C) array in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGBA" if im.mode == "RGBA" else "RGB"))
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read image {path}: {exc}") from exc
    return arr.astype(np.float32) / 255.0


def save_png(path, a: np.ndarray):
    """Write a float image (or a ready uint8 array) as an 8-bit PNG."""
    q = a if a.dtype == np.uint8 else quantize(a)
    if q.ndim == 3 and q.shape[2] == 1:
        q = q[:, :, 0]
    try:
        Image.fromarray(q).save(path, format="PNG")
    except OSError as exc:
        raise IOFailure(f"cannot write image {path}: {exc}") from exc


def contact_sheet(frames, n_rows: int, n_cols: int, pad: int = 2) -> np.ndarray:
    """Assemble a {(row, col): image} dict into one uint8 sheet with padding."""
    sample = next(iter(frames.values()))
    h, w = sample.shape[:2]
    c = sample.shape[2] if sample.ndim == 3 else 1
    sheet = np.full(
        (n_rows * (h + pad) - pad, n_cols * (w + pad) - pad, c), 255, np.uint8
    )
    for (r, k), img in frames.items():
        q = quantize(img).reshape(h, w, c)
        y, x = r * (h + pad), k * (w + pad)
        sheet[y : y + h, x : x + w] = q
    return sheet
