"""Lossless octree occupancy coding of (x, y, t) point sets.

Conventions (normative for the bitstream):
  * child index c = (x_bit << 2) | (y_bit << 1) | t_bit, taking coordinate
    bits most-significant-first down the tree;
  * occupancy byte packs children LSB-first (bit 0 = child 0);
  * bytes are serialized in level order (BFS), children visited in their
    parents' emission order, which equals numeric order of interleaved codes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class CorruptionError(ValueError):
    """Structurally inconsistent occupancy byte sequence."""


@dataclass(frozen=True)
class OctreeParams:
    depth: int
    cube_side: int


@dataclass
class OccupancyStream:
    data: np.ndarray          # uint8 occupancy bytes, level order
    level_offsets: list[int]  # start index of each level

    def __len__(self) -> int:
        return len(self.data)


def compute_depth(x_max: int, y_max: int, t_max: int) -> OctreeParams:
    """Depth D = ceil(log2(max bound)), minimum 1; cube_side = 2**D.

    The ceiling makes non-power-of-two sensor dimensions lossless; the
    standard configurations (640/480/1024, 1280/720/2048) hit powers of two.
    """
    m = max(x_max, y_max, t_max)
    if m < 1:
        raise ValueError("bounds must be >= 1")
    if m <= 2:
        if m <= 1:
            log.warning("degenerate bounds %r padded to depth 1", (x_max, y_max, t_max))
        return OctreeParams(1, 2)
    depth = int(m - 1).bit_length()
    return OctreeParams(depth, 1 << depth)


def _interleave(points: np.ndarray, depth: int) -> np.ndarray:
    """Per-point path code: 3 bits per level, (x, y, t) MSB-first."""
    x, y, t = points[:, 0], points[:, 1], points[:, 2]
    code = np.zeros(len(points), dtype=np.int64)
    for level in range(depth):
        shift = depth - 1 - level
        c = (((x >> shift) & 1) << 2) | (((y >> shift) & 1) << 1) | ((t >> shift) & 1)
        code = (code << 3) | c
    return code


def _deinterleave(codes: np.ndarray, depth: int) -> np.ndarray:
    x = np.zeros(len(codes), dtype=np.int64)
    y = np.zeros_like(x)
    t = np.zeros_like(x)
    for i in range(depth):
        triple = (codes >> (3 * i)) & 7
        x |= ((triple >> 2) & 1) << i
        y |= ((triple >> 1) & 1) << i
        t |= (triple & 1) << i
    return np.stack([x, y, t], axis=1)


def build_occupancy(points: np.ndarray, params: OctreeParams) -> OccupancyStream:
    """Level-order occupancy bytes of the octree over a non-empty point set."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot build an octree over an empty point set")
    if pts.min() < 0 or pts.max() >= params.cube_side:
        raise ValueError(f"coordinates outside [0, {params.cube_side})")
    depth = params.depth
    codes = np.unique(_interleave(pts, depth))

    chunks = []
    offsets = []
    total = 0
    # level-(k+1) node keys, grouped by parent, yield the level-k bytes
    for k in range(depth):
        keys = np.unique(codes >> (3 * (depth - k - 1)))
        parents = keys >> 3
        starts = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]])
        bits = (np.int64(1) << (keys & 7))
        level = np.bitwise_or.reduceat(bits, starts).astype(np.uint8)
        offsets.append(total)
        total += len(level)
        chunks.append(level)
    return OccupancyStream(np.concatenate(chunks), offsets)


def decode_occupancy(data: np.ndarray, params: OctreeParams) -> np.ndarray:
    """Exact inverse of :func:`build_occupancy`; returns (n, 3) unique points."""
    data = np.asarray(data, dtype=np.uint8)
    depth = params.depth
    prefixes = np.zeros(1, dtype=np.int64)
    pos = 0
    bit_idx = np.arange(8, dtype=np.int64)
    for k in range(depth):
        n = len(prefixes)
        if pos + n > len(data):
            raise CorruptionError(f"occupancy stream exhausted at level {k}")
        level = data[pos:pos + n]
        if (level == 0).any():
            raise CorruptionError(f"zero occupancy byte at level {k}")
        pos += n
        mask = ((level[:, None] >> bit_idx) & 1).astype(bool)
        children = (prefixes[:, None] << 3) | bit_idx
        prefixes = children[mask]  # row-major: parent order, then child index
    if pos != len(data):
        raise CorruptionError(f"{len(data) - pos} unconsumed occupancy bytes")
    return _deinterleave(prefixes, depth)
