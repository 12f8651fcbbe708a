"""Tile cost matrices and energy-minimizing transform fits.

Square and rectangular (multi-copy) assignments are solved optimally with a
Jonker-Volgenant shortest-augmenting-path solver; copy expansion is logical
(the duplicated-row matrix is never materialized).  Ring rotations and block
flips use exhaustive/greedy scans over their small candidate sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, InfeasibleCopiesError
from .grids import Tiling, as_array, tiles_of
from .transforms import (
    POSE_COUNT,
    FlipConfig,
    RingRotation,
    apply_pose,
    ring_index_map,
    rotation_source_map,
)

# relative tolerance for treating two assignment costs as tied
TIE_TOL = 1e-9


@dataclass(frozen=True)
class CostMatrix:
    """entries[i, j] = distance from source tile i to destination tile j."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if not np.all(np.isfinite(e)) or e.size and e.min() < 0:
            raise ValueError("cost entries must be finite and non-negative")
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class Assignment:
    """mapping[j] = source row assigned to destination column j."""

    mapping: np.ndarray
    total_cost: float


@dataclass(frozen=True)
class CopySpec:
    """How many times each source tile may be used."""

    copies_per_tile: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.copies_per_tile, dtype=np.int64)
        if c.ndim != 1 or c.size == 0 or c.min() <= 0:
            raise ValueError("copy counts must be a non-empty array of positive ints")
        object.__setattr__(self, "copies_per_tile", c)

    @classmethod
    def uniform(cls, n_tiles: int, copies: int = 1) -> "CopySpec":
        return cls(np.full(n_tiles, copies, np.int64))


def tile_cost_matrix(a, b, tiling: Tiling, metric=None) -> CostMatrix:
    """Pairwise tile distances between two equally tiled images (L2 by default).

    ``metric`` may override the distance: a callable taking two flattened tile
    stacks (n, K) and (m, K) and returning an (n, m) matrix.
    """
    av, bv = as_array(a), as_array(b)
    if av.shape != bv.shape:
        raise DimensionMismatchError(f"image shapes differ: {av.shape} vs {bv.shape}")
    ta = tiles_of(av, tiling).reshape(tiling.tile_count, -1)
    tb = tiles_of(bv, tiling).reshape(tiling.tile_count, -1)
    return CostMatrix(entries=_distances(ta, tb, metric))


def cross_cost_matrix(source_tiles: np.ndarray, dest_tiles: np.ndarray, metric=None) -> CostMatrix:
    """Cost matrix between an arbitrary source tile bank and destination tiles."""
    ta = source_tiles.reshape(source_tiles.shape[0], -1)
    tb = dest_tiles.reshape(dest_tiles.shape[0], -1)
    if ta.shape[1] != tb.shape[1]:
        raise DimensionMismatchError("source and destination tiles differ in size")
    return CostMatrix(entries=_distances(ta, tb, metric))


def _distances(ta, tb, metric):
    if metric is not None:
        return np.asarray(metric(ta, tb), dtype=np.float64)
    if kernels.NUMBA_ENABLED:
        return kernels.tile_cost_kernel(ta, tb)
    return kernels.tile_cost_numpy(ta, tb)


def solve_square(d: CostMatrix) -> Assignment:
    """Minimum-cost perfect matching of a square cost matrix (optimal, exact)."""
    if d.rows != d.cols:
        raise ValueError(f"solve_square requires a square matrix, got {d.rows}x{d.cols}")
    return solve_rectangular(d, CopySpec.uniform(d.rows, 1))


def solve_rectangular(d: CostMatrix, copies: CopySpec) -> Assignment:
    """Minimum-cost assignment covering every destination, respecting copy counts."""
    c = copies.copies_per_tile
    if c.shape[0] != d.rows:
        raise ValueError("copy spec length must equal the number of source tiles")
    if int(c.sum()) < d.cols:
        raise InfeasibleCopiesError(
            f"{int(c.sum())} available copies cannot cover {d.cols} destinations"
        )
    tol = TIE_TOL * max(1.0, float(np.abs(d.entries).max(initial=0.0))) * d.cols
    mapping = kernels.solve_with_lex_tiebreak(d.entries, c, tol)
    total = float(d.entries[mapping, np.arange(d.cols)].sum())
    return Assignment(mapping=mapping, total_cost=total)


def best_ring_rotation(a, b, spec_template: RingRotation) -> RingRotation:
    """Per-ring exhaustive scan for the rotations best aligning a to b.

    For each ring independently, evaluates all 360/angular_step candidate
    rotations of ``a`` and keeps the one minimizing squared L2 distance to the
    corresponding ring of ``b``; ties go to the smallest angle (0 first).
    """
    av, bv = as_array(a), as_array(b)
    if av.shape != bv.shape:
        raise DimensionMismatchError(f"image shapes differ: {av.shape} vs {bv.shape}")
    h, w, _ = av.shape
    n_rings = spec_template.ring_count
    step = spec_template.angular_step
    rings = ring_index_map(h, w, n_rings)
    n_cand = int(round(360.0 / step))
    best_angle = np.zeros(n_rings, np.float64)
    best_energy = np.full(n_rings, np.inf)
    for k in range(n_cand):
        theta = k * step
        sy, sx = rotation_source_map(h, w, theta)
        sq = ((av[sy, sx].astype(np.float64) - bv.astype(np.float64)) ** 2).sum(axis=2)
        for r in range(n_rings):
            e = float(sq[rings == r].sum())
            if e < best_energy[r]:
                best_energy[r] = e
                best_angle[r] = theta
    return RingRotation(ring_count=n_rings, rotations=best_angle, angular_step=step)


def best_flip_config(a, b, divisions) -> FlipConfig:
    """Greedy coarse-to-fine flip/rotation fit of a toward b.

    For each division in ascending order and each block, the op among the 8
    flip/rotation candidates minimizing squared L2 distance to the matching
    block of ``b`` is chosen, holding coarser choices fixed.  Ties prefer the
    identity op (pose id order).
    """
    av, bv = as_array(a), as_array(b)
    if av.shape != bv.shape:
        raise DimensionMismatchError(f"image shapes differ: {av.shape} vs {bv.shape}")
    h, w, _ = av.shape
    if h != w:
        raise DimensionMismatchError("flip transforms require square images")
    divisions = tuple(int(d) for d in divisions)
    for d in divisions:
        if h % d:
            raise DimensionMismatchError(f"image side {h} is not divisible by division {d}")
    work = av.astype(np.float64)
    target = bv.astype(np.float64)
    grids = []
    for d in divisions:
        side = h // d
        grid = np.zeros((d, d), np.int8)
        for bi in range(d):
            for bj in range(d):
                sl = (slice(bi * side, (bi + 1) * side), slice(bj * side, (bj + 1) * side))
                blk, tgt = work[sl], target[sl]
                best_p, best_e = 0, np.inf
                for p in range(POSE_COUNT):
                    e = float(((apply_pose(blk, p) - tgt) ** 2).sum())
                    if e < best_e:
                        best_e, best_p = e, p
                grid[bi, bj] = best_p
                if best_p:
                    work[sl] = apply_pose(blk, best_p)
        grids.append(grid)
    return FlipConfig(divisions=divisions, ops=tuple(grids))


def fit_energy(t, a, b) -> float:
    """Squared L2 energy of apply(t, a) against b; the quantity the fits minimize."""
    from .transforms import apply

    av, bv = as_array(a), as_array(b)
    return float(((apply(t, av).astype(np.float64) - bv.astype(np.float64)) ** 2).sum())
