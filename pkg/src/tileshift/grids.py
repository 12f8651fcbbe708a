"""Image containers and tiling geometry.

Internally all images are ``float32`` arrays of shape ``(H, W, C)``.  The
``ImageGrid`` wrapper carries the space tag (pixel vs latent) and validates
ranges; most internal code passes bare arrays around and only wraps at module
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

SPACES = ("pixel", "latent")


def as_array(img) -> np.ndarray:
    """Coerce an ImageGrid or array-like to a float32 (H, W, C) array."""
    if isinstance(img, ImageGrid):
        return img.values
    a = np.asarray(img, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DimensionMismatchError(f"expected (H, W, C) array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ImageGrid:
    """An H x W x C grid of pixel or latent values."""

    values: np.ndarray
    space: str = "pixel"

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float32)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise DimensionMismatchError(f"expected (H, W, C) array, got shape {a.shape}")
        h, w, c = a.shape
        if h <= 0 or w <= 0:
            raise DimensionMismatchError("height and width must be positive")
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        if self.space == "pixel" and not (1 <= c <= 4):
            raise DimensionMismatchError(f"pixel images must have 1-4 channels, got {c}")
        if self.space == "pixel" and a.size:
            lo, hi = float(a.min()), float(a.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")
        object.__setattr__(self, "values", a)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def like(self, values: np.ndarray) -> "ImageGrid":
        return ImageGrid(values=values, space=self.space)


@dataclass(frozen=True)
class Tiling:
    """A square M x M grid of equal-size tiles covering an image exactly."""

    grid_m: int
    tile_h: int
    tile_w: int

    def __post_init__(self):
        if self.grid_m <= 0 or self.tile_h <= 0 or self.tile_w <= 0:
            raise DimensionMismatchError("tiling parameters must be positive")

    @classmethod
    def for_image(cls, height: int, width: int, grid_m: int) -> "Tiling":
        if grid_m <= 0 or height % grid_m or width % grid_m:
            raise DimensionMismatchError(
                f"image {height}x{width} is not divisible into {grid_m}x{grid_m} tiles: "
                f"both sides must be exact multiples of the tile count"
            )
        return cls(grid_m=grid_m, tile_h=height // grid_m, tile_w=width // grid_m)

    @property
    def tile_count(self) -> int:
        return self.grid_m * self.grid_m

    def check(self, height: int, width: int):
        if height != self.grid_m * self.tile_h or width != self.grid_m * self.tile_w:
            raise DimensionMismatchError(
                f"image {height}x{width} does not match tiling "
                f"{self.grid_m}x{self.grid_m} of {self.tile_h}x{self.tile_w} tiles"
            )


def tiles_of(img, tiling: Tiling) -> np.ndarray:
    """Split an image into a (M*M, tile_h, tile_w, C) stack, row-major tile order."""
    a = as_array(img)
    h, w, c = a.shape
    tiling.check(h, w)
    m, th, tw = tiling.grid_m, tiling.tile_h, tiling.tile_w
    t = a.reshape(m, th, m, tw, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(t.reshape(m * m, th, tw, c))


def untile(tiles: np.ndarray, tiling: Tiling) -> np.ndarray:
    """Inverse of :func:`tiles_of`."""
    m, th, tw = tiling.grid_m, tiling.tile_h, tiling.tile_w
    n, gth, gtw, c = tiles.shape
    if n != m * m or gth != th or gtw != tw:
        raise DimensionMismatchError("tile stack does not match tiling")
    t = tiles.reshape(m, m, th, tw, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(t.reshape(m * th, m * tw, c))
