"""The pluggable denoiser boundary: request/response types, the analytic mock
denoiser used for deterministic tests, mock codecs, and the rollout loop.

The engine only ever sees this contract; swapping the mock for a remote
backend (see remote.py) changes nothing upstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, DimensionMismatchError
from .grids import as_array
from .schedule import NoiseSchedule, denoise_update, predict_clean


@dataclass(frozen=True)
class DenoiseRequest:
    image: np.ndarray
    prompt_id: str
    step: int
    total_steps: int
    guidance_scale: float = 7.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.step < self.total_steps:
            raise ValueError(f"step {self.step} must lie in [0, {self.total_steps})")
        if self.guidance_scale < 1.0:
            raise ValueError("guidance scale must be >= 1")


@dataclass(frozen=True)
class DenoiseResponse:
    guidance: np.ndarray
    next_image: np.ndarray


@dataclass(frozen=True)
class CodecDescriptor:
    latent_shape: tuple
    pixel_shape: tuple
    scale_factor: int

    def __post_init__(self):
        lh, lw, _ = self.latent_shape
        ph, pw, _ = self.pixel_shape
        if ph != lh * self.scale_factor or pw != lw * self.scale_factor:
            raise ValueError("pixel shape must be latent shape times the scale factor")


def procedural_target(prompt: str, shape) -> np.ndarray:
    """Deterministic pseudo-image for a prompt; shared with the test backend.

    A smooth two-gradient field whose parameters come from the SHA-256 of the
    prompt, so distinct prompts give visually distinct targets in [0, 1].
    """
    h, w, c = shape
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    params = np.frombuffer(digest, dtype=np.uint8).astype(np.float64) / 255.0
    yy = np.linspace(0.0, 1.0, h, dtype=np.float64)[:, None]
    xx = np.linspace(0.0, 1.0, w, dtype=np.float64)[None, :]
    out = np.empty((h, w, c), dtype=np.float64)
    for ch in range(c):
        a, b, p, q = params.take(range(4 * ch, 4 * ch + 4), mode="wrap")
        p = (p + 0.37 * ch) % 1.0  # decorrelate channels past the digest length
        field = 0.5 + 0.5 * np.sin(2 * np.pi * ((1 + 3 * a) * yy + (1 + 3 * b) * xx + p))
        out[:, :, ch] = (1 - q) * field + q * (yy * xx)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


class MockDenoiser:
    """Analytic target-pulling denoiser.

    Predicts the noise that would be present if the clean image were the
    target, so the denoising update contracts toward the target.  ``strength``
    below 1 blends that prediction with a no-op estimate, giving rollouts a
    gradual, real-diffusion-like approach instead of a one-step jump.
    """

    def __init__(self, prompt: str, target=None, strength: float = 1.0,
                 schedule_kind: str = "linear", codec=None):
        if not 0.0 < strength <= 1.0:
            raise ValueError("strength must be in (0, 1]")
        self.prompt = prompt
        self.target = None if target is None else as_array(target)
        self.strength = float(strength)
        self.schedule_kind = schedule_kind
        self.codec = codec  # set when requests arrive in latent space
        self._schedules: dict[int, NoiseSchedule] = {}
        self._latent_targets: dict[tuple, np.ndarray] = {}

    def _schedule(self, total_steps: int) -> NoiseSchedule:
        if total_steps not in self._schedules:
            self._schedules[total_steps] = NoiseSchedule.of_kind(self.schedule_kind, total_steps)
        return self._schedules[total_steps]

    def _target_for(self, shape) -> np.ndarray:
        shape = tuple(shape)
        if self.codec is not None and shape[2] == self.codec.latent_channels:
            # latent-space request: the target is the encoded pixel target
            if shape not in self._latent_targets:
                f = self.codec.scale_factor
                px_shape = (shape[0] * f, shape[1] * f, self.codec.pixel_channels)
                self._latent_targets[shape] = self.codec.encode(self._target_for(px_shape))
            return self._latent_targets[shape]
        if self.target is not None:
            if self.target.shape != shape:
                raise DimensionMismatchError(
                    f"mock target shape {self.target.shape} != request shape {shape}"
                )
            return self.target
        return procedural_target(self.prompt, shape)

    def guidance_step(self, req: DenoiseRequest) -> DenoiseResponse:
        x = np.asarray(req.image, dtype=np.float32)
        sched = self._schedule(req.total_steps)
        ab_t = float(sched.alpha_bar[req.step])
        target = self._target_for(x.shape)
        eps_exact = (x - np.float32(np.sqrt(ab_t)) * target) / np.float32(np.sqrt(1.0 - ab_t))
        if self.strength < 1.0:
            # partial pull: clean estimate moves only `strength` of the way
            x0_part = np.float32(self.strength) * target + np.float32(1.0 - self.strength) * x
            eps = (x - np.float32(np.sqrt(ab_t)) * x0_part) / np.float32(np.sqrt(1.0 - ab_t))
        else:
            eps = eps_exact
        ab_prev = float(sched.alpha_bar[req.step - 1]) if req.step > 0 else 1.0
        return DenoiseResponse(guidance=eps, next_image=denoise_update(x, eps, ab_t, ab_prev))


class MockCodec:
    """Latent codec stand-in.

    With ``latent_channels == pixel_channels * scale_factor**2`` (the default)
    encoding is an exact space-to-depth rearrangement and decode inverts it
    bit-for-bit.  Other channel counts give a lossy average-pool/replicate
    pair with the requested geometry (e.g. the conventional 8x downscale to 4
    channels).
    """

    def __init__(self, scale_factor: int = 1, pixel_channels: int = 3, latent_channels=None):
        self.scale_factor = int(scale_factor)
        self.pixel_channels = int(pixel_channels)
        self.latent_channels = (
            pixel_channels * scale_factor**2 if latent_channels is None else int(latent_channels)
        )
        self.exact = self.latent_channels == self.pixel_channels * self.scale_factor**2

    def descriptor_for(self, pixel_shape) -> CodecDescriptor:
        h, w, c = pixel_shape
        f = self.scale_factor
        return CodecDescriptor(
            latent_shape=(h // f, w // f, self.latent_channels),
            pixel_shape=(h, w, c),
            scale_factor=f,
        )

    def encode(self, img) -> np.ndarray:
        a = as_array(img)
        h, w, c = a.shape
        f = self.scale_factor
        if h % f or w % f:
            raise DimensionMismatchError(f"image {h}x{w} not divisible by scale factor {f}")
        if c != self.pixel_channels:
            raise DimensionMismatchError(f"expected {self.pixel_channels} channels, got {c}")
        blocks = a.reshape(h // f, f, w // f, f, c).transpose(0, 2, 1, 3, 4)
        if self.exact:
            return np.ascontiguousarray(blocks.reshape(h // f, w // f, f * f * c))
        pooled = blocks.mean(axis=(2, 3))  # (h/f, w/f, c)
        z = np.zeros((h // f, w // f, self.latent_channels), np.float32)
        for k in range(self.latent_channels):
            z[:, :, k] = pooled[:, :, k % c]
        return z

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        lh, lw, lc = z.shape
        if lc != self.latent_channels:
            raise DimensionMismatchError(f"expected {self.latent_channels} latent channels, got {lc}")
        f = self.scale_factor
        c = self.pixel_channels
        if self.exact:
            blocks = z.reshape(lh, lw, f, f, c).transpose(0, 2, 1, 3, 4)
            return np.ascontiguousarray(blocks.reshape(lh * f, lw * f, c))
        px = np.empty((lh, lw, c), np.float32)
        counts = np.zeros(c, np.int32)
        acc = np.zeros((lh, lw, c), np.float64)
        for k in range(self.latent_channels):
            acc[:, :, k % c] += z[:, :, k]
            counts[k % c] += 1
        px = (acc / counts).astype(np.float32)
        return np.clip(np.repeat(np.repeat(px, f, axis=0), f, axis=1), 0.0, 1.0)


def rollout(session, start, from_step: int, schedule: NoiseSchedule, *,
            lookahead=None, rng_seed: int = 0, guidance_scale: float = 7.5) -> np.ndarray:
    """Run the denoise update from ``from_step`` toward 0 and return the
    idealized (noise-free) image.

    A full run (``lookahead=None``) iterates every remaining step; a lookahead
    stops early and returns the clean-image estimate from the last step taken.
    ``from_step == 0`` returns ``start`` unchanged.
    """
    if from_step > schedule.steps:
        raise ValueError(f"from_step {from_step} exceeds schedule length {schedule.steps}")
    n_steps = from_step if lookahead is None else min(lookahead, from_step)
    x = np.asarray(start, dtype=np.float32)
    x0 = x
    for k in range(n_steps):
        t = from_step - 1 - k
        resp = session.guidance_step(
            DenoiseRequest(
                image=x,
                prompt_id=session.prompt,
                step=t,
                total_steps=schedule.steps,
                guidance_scale=guidance_scale,
                rng_seed=rng_seed,
            )
        )
        eps = np.asarray(resp.guidance, dtype=np.float32)
        if eps.shape != x.shape:
            raise BackendError(f"guidance shape {eps.shape} != image shape {x.shape}")
        ab_t = float(schedule.alpha_bar[t])
        x0 = predict_clean(x, eps, ab_t)
        ab_prev = float(schedule.alpha_bar[t - 1]) if t > 0 else 1.0
        x = denoise_update(x, eps, ab_t, ab_prev)
    return x0 if n_steps else x
