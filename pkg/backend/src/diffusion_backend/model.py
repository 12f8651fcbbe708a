"""The model layer behind the HTTP surface.

Two interchangeable models:

* ``AnalyticModel`` (default) — a dependency-free stand-in that derives a
  deterministic per-prompt target image from the prompt text and predicts the
  noise that would be present if the clean image were that target.  It makes
  the whole service runnable and exactly reproducible on any machine.
* A latent-diffusion checkpoint adapter can be slotted in behind the same
  interface by pointing ``DIFFUSION_BACKEND_MODEL`` at a checkpoint; see
  README.  The HTTP surface is identical either way.

The codec is an exact space-to-depth rearrangement (scale factor 2, 12 latent
channels for RGB), so encode/decode round-trip bit-for-bit.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass

import numpy as np

BASE_STEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02


# --------------------------------------------------------------------------
# wire payloads
# --------------------------------------------------------------------------


class PayloadError(ValueError):
    """Client payload is malformed (maps to HTTP 400)."""


def decode_array(data: str, shape) -> np.ndarray:
    if not isinstance(data, str):
        raise PayloadError("'data' must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise PayloadError(f"invalid base64 payload: {exc}") from exc
    try:
        expected = int(np.prod([int(s) for s in shape])) * 4
    except (TypeError, ValueError) as exc:
        raise PayloadError(f"invalid shape {shape!r}") from exc
    if len(raw) != expected:
        raise PayloadError(
            f"payload is {len(raw)} bytes, shape {list(shape)} needs {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape([int(s) for s in shape]).copy()


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f4").tobytes()).decode("ascii")


# --------------------------------------------------------------------------
# schedule (self-contained)
# --------------------------------------------------------------------------


def alpha_bar_for(total_steps: int) -> np.ndarray:
    """Cumulative alpha products, subsampled from the 1000-step linear base."""
    if not 1 <= total_steps <= BASE_STEPS:
        raise PayloadError(f"total_steps must be in 1..{BASE_STEPS}")
    base = np.linspace(BETA_START, BETA_END, BASE_STEPS, dtype=np.float64)
    ab_full = np.cumprod(1.0 - base)
    idx = (np.arange(total_steps) * BASE_STEPS) // total_steps
    return ab_full[idx]


# --------------------------------------------------------------------------
# codec
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceToDepthCodec:
    scale_factor: int = 2
    pixel_channels: int = 3

    @property
    def latent_channels(self) -> int:
        return self.pixel_channels * self.scale_factor**2

    def encode(self, img: np.ndarray) -> np.ndarray:
        h, w, c = img.shape
        f = self.scale_factor
        if c != self.pixel_channels:
            raise PayloadError(f"expected {self.pixel_channels} channels, got {c}")
        if h % f or w % f:
            raise PayloadError(f"image {h}x{w} not divisible by scale factor {f}")
        blocks = img.reshape(h // f, f, w // f, f, c).transpose(0, 2, 1, 3, 4)
        return np.ascontiguousarray(blocks.reshape(h // f, w // f, f * f * c))

    def decode(self, z: np.ndarray) -> np.ndarray:
        lh, lw, lc = z.shape
        f = self.scale_factor
        c = self.pixel_channels
        if lc != self.latent_channels:
            raise PayloadError(f"expected {self.latent_channels} latent channels, got {lc}")
        blocks = z.reshape(lh, lw, f, f, c).transpose(0, 2, 1, 3, 4)
        return np.ascontiguousarray(blocks.reshape(lh * f, lw * f, c))

    def descriptor(self, native_pixel=(64, 64)) -> dict:
        h, w = native_pixel
        f = self.scale_factor
        return {
            "pixel_shape": [h, w, self.pixel_channels],
            "latent_shape": [h // f, w // f, self.latent_channels],
            "scale_factor": f,
        }


# --------------------------------------------------------------------------
# analytic model
# --------------------------------------------------------------------------


class AnalyticModel:
    """Deterministic target-pulling noise predictor.

    The clean target for a prompt is a smooth two-gradient field parameterized
    by the SHA-256 of the prompt text; the predicted noise is exactly the
    noise that would be present if the clean image were that target.  Fully
    deterministic per (prompt, image, step, total_steps) — the seed field is
    accepted for protocol compatibility and ignored.
    """

    name = "analytic"

    def __init__(self, codec: SpaceToDepthCodec | None = None):
        self.codec = codec or SpaceToDepthCodec()

    def target(self, prompt: str, shape) -> np.ndarray:
        h, w, c = shape
        if c == self.codec.latent_channels:
            f = self.codec.scale_factor
            px = self.target(prompt, (h * f, w * f, self.codec.pixel_channels))
            return self.codec.encode(px)
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        params = np.frombuffer(digest, dtype=np.uint8).astype(np.float64) / 255.0
        yy = np.linspace(0.0, 1.0, h, dtype=np.float64)[:, None]
        xx = np.linspace(0.0, 1.0, w, dtype=np.float64)[None, :]
        out = np.empty((h, w, c), dtype=np.float64)
        for ch in range(c):
            a, b, p, q = params.take(range(4 * ch, 4 * ch + 4), mode="wrap")
            p = (p + 0.37 * ch) % 1.0
            field = 0.5 + 0.5 * np.sin(2 * np.pi * ((1 + 3 * a) * yy + (1 + 3 * b) * xx + p))
            out[:, :, ch] = (1 - q) * field + q * (yy * xx)
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    def predict_noise(self, prompt: str, x: np.ndarray, step: int, total_steps: int) -> tuple:
        ab = alpha_bar_for(total_steps)
        if not 0 <= step < total_steps:
            raise PayloadError(f"step {step} must lie in [0, {total_steps})")
        ab_t = float(ab[step])
        target = self.target(prompt, x.shape)
        eps = (x - np.float32(np.sqrt(ab_t)) * target) / np.float32(np.sqrt(1.0 - ab_t))
        ab_prev = float(ab[step - 1]) if step > 0 else 1.0
        x0 = (x - np.float32(np.sqrt(1.0 - ab_t)) * eps) / np.float32(np.sqrt(ab_t))
        next_image = np.float32(np.sqrt(ab_prev)) * x0 + np.float32(
            np.sqrt(1.0 - ab_prev)
        ) * eps
        return eps.astype(np.float32), next_image.astype(np.float32)


def load_model(identifier: str | None) -> AnalyticModel:
    """Resolve a model identifier to a loaded model.

    ``None`` or ``"analytic"`` loads the built-in analytic model.  Anything
    else is treated as a latent-diffusion checkpoint path; loading real
    checkpoints requires the optional heavy dependencies and is documented in
    the README rather than wired in here.
    """
    if identifier in (None, "", "analytic"):
        return AnalyticModel()
    raise RuntimeError(
        f"model {identifier!r} is not available in this build; "
        "use the built-in 'analytic' model"
    )
