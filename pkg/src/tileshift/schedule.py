"""DDPM-style noise schedules and mixing weights.

Short sampling schedules are subsampled from a canonical 1000-step base
schedule (linear betas in [1e-4, 0.02], or the squared-cosine variant) so that
a 15-step run still spans nearly-clean to nearly-pure-noise.  Weights satisfy
w_image^2 + w_noise^2 = 1 at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BASE_STEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02


@dataclass(frozen=True)
class MixWeights:
    w_image: float
    w_noise: float


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step betas and cumulative alpha products; t=0 is the cleanest step."""

    betas: np.ndarray
    alpha_bar: np.ndarray
    kind: str

    @property
    def steps(self) -> int:
        return self.alpha_bar.shape[0]

    @classmethod
    def linear(cls, steps: int, beta_start: float = BETA_START, beta_end: float = BETA_END,
               base_steps: int = BASE_STEPS) -> "NoiseSchedule":
        base = np.linspace(beta_start, beta_end, base_steps, dtype=np.float64)
        return cls._subsample(np.cumprod(1.0 - base), steps, "linear")

    @classmethod
    def cosine(cls, steps: int, s: float = 0.008, base_steps: int = BASE_STEPS) -> "NoiseSchedule":
        t = np.arange(base_steps + 1, dtype=np.float64) / base_steps
        f = np.cos((t + s) / (1.0 + s) * np.pi / 2.0) ** 2
        ab = np.clip(f[1:] / f[0], 1e-8, 1.0 - 1e-8)
        return cls._subsample(ab, steps, "cosine")

    @classmethod
    def _subsample(cls, ab_full: np.ndarray, steps: int, kind: str) -> "NoiseSchedule":
        if steps <= 0:
            raise ValueError("schedule needs at least one step")
        base = ab_full.shape[0]
        if steps > base:
            raise ValueError(f"cannot subsample {steps} steps from a {base}-step base")
        idx = (np.arange(steps) * base) // steps
        ab = ab_full[idx]
        prev = np.concatenate(([1.0], ab[:-1]))
        betas = 1.0 - ab / prev
        return cls(betas=betas, alpha_bar=ab, kind=kind)

    @classmethod
    def of_kind(cls, kind: str, steps: int) -> "NoiseSchedule":
        if kind == "linear":
            return cls.linear(steps)
        if kind == "cosine":
            return cls.cosine(steps)
        raise ValueError(f"unknown schedule kind {kind!r}")


def weights_at(s: NoiseSchedule, t: int) -> MixWeights:
    """Schedule-derived mixing weights at step t (image weight shrinks with t)."""
    if not 0 <= t < s.steps:
        raise IndexError(f"step {t} outside schedule of {s.steps} steps")
    ab = float(s.alpha_bar[t])
    return MixWeights(w_image=float(np.sqrt(ab)), w_noise=float(np.sqrt(1.0 - ab)))


def mix(img, noise, w: MixWeights) -> np.ndarray:
    """Element-wise weighted blend of an image with a noise field."""
    a = np.asarray(img, dtype=np.float32)
    n = np.asarray(noise, dtype=np.float32)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    return np.float32(w.w_image) * a + np.float32(w.w_noise) * n


def fixed_ratio_weights(ratio: float, s: NoiseSchedule) -> MixWeights:
    """Rollout-start weights with image/(image+noise) amplitude ratio fixed.

    The noise component keeps the schedule's start-of-process magnitude; the
    image amplitude is scaled to hit the requested ratio (default 2% in the
    engine config).
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("mixing ratio must be in (0, 1)")
    w_noise = float(np.sqrt(1.0 - s.alpha_bar[s.steps - 1]))
    w_image = w_noise * ratio / (1.0 - ratio)
    return MixWeights(w_image=w_image, w_noise=w_noise)


def predict_clean(x: np.ndarray, eps: np.ndarray, alpha_bar_t: float) -> np.ndarray:
    """Clean-image estimate implied by a noise prediction at level alpha_bar_t."""
    ab = np.float32(alpha_bar_t)
    return (x - np.float32(np.sqrt(1.0 - ab)) * eps) / np.float32(np.sqrt(ab))


def denoise_update(x: np.ndarray, eps: np.ndarray, alpha_bar_t: float,
                   alpha_bar_prev: float) -> np.ndarray:
    """Deterministic (DDIM-style) update from level t to the previous level.

    With alpha_bar_prev = 1.0 the update lands exactly on the clean estimate.
    """
    x0 = predict_clean(x, eps, alpha_bar_t)
    return np.float32(np.sqrt(alpha_bar_prev)) * x0 + np.float32(
        np.sqrt(1.0 - alpha_bar_prev)
    ) * eps
