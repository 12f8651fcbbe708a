"""Invertible spatial transforms: tile permutations, ring rotations, block flips.

Each transform is immutable and has an exact inverse.  ``relative(t_i, t_1)``
composes ``t_i`` with the inverse of ``t_1`` into a single transform of the
same variant, which is the form the engine applies when relating the i-th
output to the first.

Block flip/rotation ops use D4 pose ids 0..7: ``id = 4*flip + rot`` where
``flip`` mirrors left-right first and ``rot`` then rotates counterclockwise by
``rot * 90`` degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, VariantMismatchError
from .grids import ImageGrid, Tiling, as_array, tiles_of, untile

# --------------------------------------------------------------------------
# D4 pose algebra
# --------------------------------------------------------------------------

POSE_COUNT = 8


def apply_pose(block: np.ndarray, pose: int) -> np.ndarray:
    """Apply a D4 pose to a (h, w, ...) block; flip first, then rotate CCW."""
    if pose >= 4:
        block = block[:, ::-1]
    k = pose % 4
    if k:
        block = np.rot90(block, k)
    return block


def _build_pose_tables():
    probe = np.arange(9).reshape(3, 3)
    posed = [apply_pose(probe, p) for p in range(POSE_COUNT)]
    compose = np.empty((POSE_COUNT, POSE_COUNT), np.int8)
    inverse = np.empty(POSE_COUNT, np.int8)
    for a in range(POSE_COUNT):
        for b in range(POSE_COUNT):
            ab = apply_pose(posed[b], a)  # b first, then a
            for c in range(POSE_COUNT):
                if np.array_equal(ab, posed[c]):
                    compose[a, b] = c
                    break
    for a in range(POSE_COUNT):
        for b in range(POSE_COUNT):
            if compose[a, b] == 0:
                inverse[a] = b
    return compose, inverse


POSE_COMPOSE, POSE_INVERSE = _build_pose_tables()


def pose_of(flip_horizontal: bool, rotation_degrees: int) -> int:
    """Pose id from the (flip, rotation) description of a block op."""
    if rotation_degrees % 90:
        raise ValueError("block rotations must be multiples of 90 degrees")
    return 4 * int(bool(flip_horizontal)) + (rotation_degrees // 90) % 4


def pose_params(pose: int) -> tuple[bool, int]:
    return pose >= 4, (pose % 4) * 90


# --------------------------------------------------------------------------
# Transform variants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    def __repr__(self):
        return "Identity()"


@dataclass(frozen=True, eq=False)
class TilePermutation:
    """mapping[dest] = source tile index; a bijection on 0..M^2-1."""

    tiling: Tiling
    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        n = self.tiling.tile_count
        if m.shape != (n,) or not np.array_equal(np.sort(m), np.arange(n)):
            raise ValueError(f"mapping must be a bijection on 0..{n - 1}")
        object.__setattr__(self, "mapping", m)

    def __eq__(self, other):
        return (
            isinstance(other, TilePermutation)
            and self.tiling == other.tiling
            and np.array_equal(self.mapping, other.mapping)
        )

    def __hash__(self):
        return hash((self.tiling, self.mapping.tobytes()))


@dataclass(frozen=True, eq=False)
class RingRotation:
    """Independent rotations of concentric equal-width rings about the center."""

    ring_count: int
    rotations: np.ndarray
    angular_step: float = 5.0

    def __post_init__(self):
        r = np.asarray(self.rotations, dtype=np.float64) % 360.0
        if r.shape != (self.ring_count,):
            raise ValueError("need one rotation per ring")
        steps = r / self.angular_step
        if not np.allclose(steps, np.round(steps), atol=1e-9):
            raise ValueError(f"rotations must be multiples of {self.angular_step} degrees")
        object.__setattr__(self, "rotations", r)

    def __eq__(self, other):
        return (
            isinstance(other, RingRotation)
            and self.ring_count == other.ring_count
            and self.angular_step == other.angular_step
            and np.array_equal(self.rotations, other.rotations)
        )

    def __hash__(self):
        return hash((self.ring_count, self.angular_step, self.rotations.tobytes()))


@dataclass(frozen=True, eq=False)
class FlipConfig:
    """Per-block flip/rotation ops at a chain of division levels.

    ``ops[k]`` is a (d_k, d_k) array of D4 pose ids for division ``divisions[k]``.
    Levels are applied coarse-to-fine (smallest d first).  Divisions must form a
    divisibility chain (each divides the next) so that composition and inversion
    stay within the variant.
    """

    divisions: tuple
    ops: tuple = field(default=None)

    def __post_init__(self):
        divs = tuple(int(d) for d in self.divisions)
        if not divs or any(d <= 0 for d in divs):
            raise ValueError("divisions must be positive")
        if list(divs) != sorted(set(divs)):
            raise ValueError("divisions must be strictly ascending")
        for a, b in zip(divs, divs[1:]):
            if b % a:
                raise ValueError(
                    f"divisions must form a divisibility chain ({a} does not divide {b})"
                )
        ops = self.ops
        if ops is None:
            ops = tuple(np.zeros((d, d), np.int8) for d in divs)
        fixed = []
        for d, grid in zip(divs, ops):
            g = np.asarray(grid, dtype=np.int8)
            if g.shape != (d, d):
                raise ValueError(f"ops grid for division {d} must be {d}x{d}")
            if g.min() < 0 or g.max() >= POSE_COUNT:
                raise ValueError("pose ids must be in 0..7")
            fixed.append(g)
        object.__setattr__(self, "divisions", divs)
        object.__setattr__(self, "ops", tuple(fixed))

    def __eq__(self, other):
        return (
            isinstance(other, FlipConfig)
            and self.divisions == other.divisions
            and all(np.array_equal(a, b) for a, b in zip(self.ops, other.ops))
        )

    def __hash__(self):
        return hash((self.divisions, tuple(g.tobytes() for g in self.ops)))


TransformSpec = Identity | TilePermutation | RingRotation | FlipConfig


@dataclass(frozen=True, eq=False)
class TileSelection:
    """mapping[dest] = source tile index into a (possibly multi-image) tile bank.

    Unlike TilePermutation the mapping need not be a bijection: with copies > 1
    or multiple basis images, source tiles may repeat.  Forward application
    only; not part of the invertible TransformSpec algebra.
    """

    tiling: Tiling
    mapping: np.ndarray
    bank_size: int

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.shape != (self.tiling.tile_count,):
            raise ValueError("need one source index per destination tile")
        if m.min() < 0 or m.max() >= self.bank_size:
            raise ValueError("source indices out of range")
        object.__setattr__(self, "mapping", m)

    def __eq__(self, other):
        return (
            isinstance(other, TileSelection)
            and self.tiling == other.tiling
            and self.bank_size == other.bank_size
            and np.array_equal(self.mapping, other.mapping)
        )

    def compose_from(self, bank_tiles: np.ndarray) -> np.ndarray:
        """Assemble the output image from a (bank_size, th, tw, C) tile bank."""
        if bank_tiles.shape[0] != self.bank_size:
            raise DimensionMismatchError("tile bank size mismatch")
        return untile(bank_tiles[self.mapping], self.tiling)


# --------------------------------------------------------------------------
# Ring geometry
# --------------------------------------------------------------------------


def ring_index_map(height: int, width: int, ring_count: int) -> np.ndarray:
    """Ring index per pixel; corners beyond the inscribed circle join the outer ring."""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.mgrid[0:height, 0:width]
    r = np.hypot(yy - cy, xx - cx)
    max_r = min(height - 1, width - 1) / 2.0
    idx = np.floor(ring_count * r / max_r).astype(np.int64)
    return np.minimum(idx, ring_count - 1)


def rotation_source_map(height: int, width: int, theta_deg: float):
    """(src_y, src_x) index maps for a rotation by theta about the image center.

    Destination pixel p takes its value from the nearest source pixel at angle
    -theta relative to p (nearest-neighbor, no interpolation).
    """
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.mgrid[0:height, 0:width]
    dy, dx = yy - cy, xx - cx
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    sy = np.rint(cy + c * dy - s * dx).astype(np.int64)
    sx = np.rint(cx + s * dy + c * dx).astype(np.int64)
    np.clip(sy, 0, height - 1, out=sy)
    np.clip(sx, 0, width - 1, out=sx)
    return sy, sx


def _apply_ring(t: RingRotation, a: np.ndarray) -> np.ndarray:
    h, w, _ = a.shape
    rings = ring_index_map(h, w, t.ring_count)
    out = np.empty_like(a)
    for k in range(t.ring_count):
        mask = rings == k
        sy, sx = rotation_source_map(h, w, float(t.rotations[k]))
        out[mask] = a[sy[mask], sx[mask]]
    return out


# --------------------------------------------------------------------------
# Flip block-map representation (position permutation + pose per fine block)
# --------------------------------------------------------------------------


def _pose_positions(q: int, pose: int) -> np.ndarray:
    """flat source position feeding each destination cell of a q x q grid."""
    return apply_pose(np.arange(q * q).reshape(q, q), pose)


class _BlockMap:
    """Normal form of a flip transform at its finest division f.

    ``src[i, j]``  = flat index of the fine block whose content lands at (i, j).
    ``pose[i, j]`` = net D4 pose applied to that content.
    """

    def __init__(self, f: int, src=None, pose=None):
        self.f = f
        self.src = np.arange(f * f).reshape(f, f) if src is None else src
        self.pose = np.zeros((f, f), np.int8) if pose is None else pose

    @classmethod
    def from_config(cls, fc: FlipConfig) -> "_BlockMap":
        f = fc.divisions[-1]
        bm = cls(f)
        for d, grid in zip(fc.divisions, fc.ops):
            bm._apply_level(d, grid)
        return bm

    @classmethod
    def from_level(cls, f: int, d: int, grid) -> "_BlockMap":
        bm = cls(f)
        bm._apply_level(d, grid)
        return bm

    def _apply_level(self, d: int, grid):
        q = self.f // d
        for bi in range(d):
            for bj in range(d):
                p = int(grid[bi, bj])
                if p == 0:
                    continue
                sl = (slice(bi * q, (bi + 1) * q), slice(bj * q, (bj + 1) * q))
                self.src[sl] = apply_pose(self.src[sl], p)
                self.pose[sl] = POSE_COMPOSE[p, apply_pose(self.pose[sl], p)]

    def inverse(self) -> "_BlockMap":
        f = self.f
        src = np.empty((f, f), np.int64)
        pose = np.empty((f, f), np.int8)
        flat_dest = np.arange(f * f)
        src_flat = self.src.reshape(-1)
        src.reshape(-1)[src_flat] = flat_dest
        pose.reshape(-1)[src_flat] = POSE_INVERSE[self.pose.reshape(-1)]
        return _BlockMap(f, src, pose)

    def after(self, first: "_BlockMap") -> "_BlockMap":
        """Composition self(first(x))."""
        f = self.f
        src1 = first.src.reshape(-1)
        pose1 = first.pose.reshape(-1)
        src = src1[self.src]
        pose = POSE_COMPOSE[self.pose, pose1[self.src]]
        return _BlockMap(f, src, pose.astype(np.int8))

    def to_config(self, divisions: tuple) -> FlipConfig:
        """Decompose back into per-level op grids (divisions must be a chain)."""
        f = divisions[-1]
        if f != self.f:
            raise VariantMismatchError("division sets do not match")
        residual = self
        grids = []
        for li, d in enumerate(divisions):
            finer = divisions[li + 1] if li + 1 < len(divisions) else None
            q = f // d
            grid = np.zeros((d, d), np.int8)
            for bi in range(d):
                for bj in range(d):
                    grid[bi, bj] = residual._infer_block_pose(bi, bj, q, f, finer)
            residual = residual.after(_BlockMap.from_level(f, d, grid).inverse())
            grids.append(grid)
        if residual.src.reshape(-1).tolist() != list(range(f * f)) or residual.pose.any():
            raise VariantMismatchError("flip transform is not expressible at these divisions")
        return FlipConfig(divisions=divisions, ops=tuple(grids))

    def _infer_block_pose(self, bi, bj, q, f, finer):
        # q = fine blocks per side of this level's block; finer = next division
        sl = (slice(bi * q, (bi + 1) * q), slice(bj * q, (bj + 1) * q))
        block_src = self.src[sl]
        local = np.empty((q, q), np.int64)
        for i in range(q):
            for j in range(q):
                s = block_src[i, j]
                li, lj = s // f - bi * q, s % f - bj * q
                if not (0 <= li < q and 0 <= lj < q):
                    raise VariantMismatchError(
                        "flip transform is not expressible at these divisions"
                    )
                local[i, j] = li * q + lj
        if q == 1:
            # finest level: the op is whatever pose remains on this block
            return int(self.pose[sl][0, 0])
        # the chosen pose must route each fine block into the finer-level block
        # that the composite map puts it in; finer levels cannot move blocks
        # across their own boundaries, so matching at that granularity pins it
        sub = f // finer if finer is not None else 1
        la_i, la_j = local // q, local % q
        for p in range(POSE_COUNT):
            pos = _pose_positions(q, p)
            pa_i, pa_j = pos // q, pos % q
            if np.array_equal(pa_i // sub, la_i // sub) and np.array_equal(
                pa_j // sub, la_j // sub
            ):
                return p
        raise VariantMismatchError("flip transform is not expressible at these divisions")


def _apply_flip(fc: FlipConfig, a: np.ndarray) -> np.ndarray:
    h, w, _ = a.shape
    side = h
    if h != w:
        raise DimensionMismatchError("flip transforms require square images")
    for d in fc.divisions:
        if side % d:
            raise DimensionMismatchError(
                f"image side {side} is not divisible by flip division {d}"
            )
    out = a
    for d, grid in zip(fc.divisions, fc.ops):
        b = side // d
        nxt = out.copy()
        for bi in range(d):
            for bj in range(d):
                p = int(grid[bi, bj])
                if p:
                    sl = (slice(bi * b, (bi + 1) * b), slice(bj * b, (bj + 1) * b))
                    nxt[sl] = apply_pose(out[sl], p)
        out = nxt
    return out


# --------------------------------------------------------------------------
# apply / invert / relative
# --------------------------------------------------------------------------


def apply(t: TransformSpec, img):
    """Apply a transform; returns the same kind (ImageGrid or ndarray) as given."""
    a = as_array(img)
    if isinstance(t, Identity):
        out = a
    elif isinstance(t, TilePermutation):
        out = untile(tiles_of(a, t.tiling)[t.mapping], t.tiling)
    elif isinstance(t, RingRotation):
        out = _apply_ring(t, a)
    elif isinstance(t, FlipConfig):
        out = _apply_flip(t, a)
    elif isinstance(t, TileSelection):
        raise VariantMismatchError(
            "TileSelection composes from a tile bank; use TileSelection.compose_from"
        )
    else:
        raise VariantMismatchError(f"unknown transform {type(t).__name__}")
    if isinstance(img, ImageGrid):
        return img.like(out)
    return out


def invert(t: TransformSpec) -> TransformSpec:
    if isinstance(t, Identity):
        return t
    if isinstance(t, TilePermutation):
        return TilePermutation(tiling=t.tiling, mapping=np.argsort(t.mapping, kind="stable"))
    if isinstance(t, RingRotation):
        return RingRotation(
            ring_count=t.ring_count,
            rotations=(-t.rotations) % 360.0,
            angular_step=t.angular_step,
        )
    if isinstance(t, FlipConfig):
        return _BlockMap.from_config(t).inverse().to_config(t.divisions)
    raise VariantMismatchError(f"cannot invert {type(t).__name__}")


def relative(t_i: TransformSpec, t_1: TransformSpec) -> TransformSpec:
    """The composition t_i applied after the inverse of t_1, as one transform."""
    if isinstance(t_1, Identity):
        return t_i
    if isinstance(t_i, Identity):
        return invert(t_1)
    if type(t_i) is not type(t_1):
        raise VariantMismatchError(
            f"cannot relate {type(t_i).__name__} to {type(t_1).__name__}"
        )
    if isinstance(t_i, TilePermutation):
        if t_i.tiling != t_1.tiling:
            raise VariantMismatchError("tile permutations use different tilings")
        inv1 = np.argsort(t_1.mapping, kind="stable")
        return TilePermutation(tiling=t_i.tiling, mapping=inv1[t_i.mapping])
    if isinstance(t_i, RingRotation):
        if t_i.ring_count != t_1.ring_count or t_i.angular_step != t_1.angular_step:
            raise VariantMismatchError("ring rotations use different geometries")
        return RingRotation(
            ring_count=t_i.ring_count,
            rotations=(t_i.rotations - t_1.rotations) % 360.0,
            angular_step=t_i.angular_step,
        )
    if isinstance(t_i, FlipConfig):
        if t_i.divisions != t_1.divisions:
            raise VariantMismatchError("flip configs use different division sets")
        bm = _BlockMap.from_config(t_i).after(_BlockMap.from_config(t_1).inverse())
        return bm.to_config(t_i.divisions)
    raise VariantMismatchError(f"cannot relate {type(t_i).__name__}")


def is_identity(t: TransformSpec) -> bool:
    if isinstance(t, Identity):
        return True
    if isinstance(t, TilePermutation):
        return bool(np.array_equal(t.mapping, np.arange(t.mapping.shape[0])))
    if isinstance(t, RingRotation):
        return not t.rotations.any()
    if isinstance(t, FlipConfig):
        return not any(g.any() for g in t.ops)
    return False
