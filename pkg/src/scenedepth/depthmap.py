"""Per-pixel metric depth with a validity mask and a sky sentinel.

Serialization formats:

* 16-bit PNG, value = round(depth_m * 256), 0 = invalid or sky (the KITTI
  ground-truth convention).  PNG cannot distinguish sky from missing data.
* Raw float32 little-endian binary: an 8-byte header (width, height as
  uint32 LE) followed by the row-major pixel grid.  Sky pixels are stored
  as +infinity, invalid pixels as 0.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError, SceneDepthError

PNG_DEPTH_SCALE = 256.0


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray  # (H, W) float64, 0.0 where not valid
    valid: np.ndarray   # (H, W) bool
    sky: np.ndarray     # (H, W) bool, disjoint from valid

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DimensionMismatchError(f"depth grid must be 2D, got {self.values.shape}")
        if self.valid.shape != self.values.shape or self.sky.shape != self.values.shape:
            raise DimensionMismatchError("values/valid/sky shapes differ")
        if (self.valid & self.sky).any():
            raise SceneDepthError("a pixel cannot be both valid and sky")
        v = self.values[self.valid]
        if v.size and (not np.all(np.isfinite(v)) or not np.all(v > 0)):
            raise SceneDepthError("valid depth values must be finite and positive")

    @classmethod
    def create(cls, values: np.ndarray, valid: np.ndarray, sky: np.ndarray | None = None) -> "DepthMap":
        """Normalize inputs: invalid pixels carry no value; arrays are frozen."""
        values = np.asarray(values, dtype=np.float64).copy()
        valid = np.asarray(valid, dtype=bool).copy()
        if sky is None:
            sky = np.zeros_like(valid)
        else:
            sky = np.asarray(sky, dtype=bool).copy()
        values[~valid] = 0.0
        for a in (values, valid, sky):
            a.flags.writeable = False
        return cls(values, valid, sky)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def same_shape_as(self, other: "DepthMap") -> bool:
        return self.values.shape == other.values.shape


def encode_png16(depth: DepthMap) -> bytes:
    """16-bit PNG; 0 = invalid/sky; depths clamp at the uint16 ceiling."""
    import io

    raw = np.zeros(depth.values.shape, dtype=np.uint16)
    q = np.round(depth.values[depth.valid] * PNG_DEPTH_SCALE)
    raw[depth.valid] = np.clip(q, 0, 65535).astype(np.uint16)
    im = Image.fromarray(raw)
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def decode_png16(data: bytes) -> DepthMap:
    import io

    arr = np.array(Image.open(io.BytesIO(data)))
    if arr.ndim != 2:
        raise SceneDepthError(f"depth PNG must be single-channel, got shape {arr.shape}")
    arr = arr.astype(np.float64)
    valid = arr > 0
    return DepthMap.create(arr / PNG_DEPTH_SCALE, valid)


def encode_f32(depth: DepthMap) -> bytes:
    grid = depth.values.astype(np.float32)
    grid[~depth.valid] = 0.0
    grid[depth.sky] = np.inf
    header = struct.pack("<II", depth.width, depth.height)
    return header + grid.astype("<f4").tobytes()


def decode_f32(data: bytes) -> DepthMap:
    if len(data) < 8:
        raise SceneDepthError("f32 depth blob shorter than its 8-byte header")
    w, h = struct.unpack("<II", data[:8])
    expected = 8 + 4 * w * h
    if len(data) != expected:
        raise SceneDepthError(f"f32 depth blob is {len(data)} bytes, expected {expected} for {w}x{h}")
    grid = np.frombuffer(data[8:], dtype="<f4").reshape(h, w).astype(np.float64)
    sky = np.isinf(grid)
    valid = (grid > 0) & ~sky
    grid = grid.copy()
    grid[sky] = 0.0
    return DepthMap.create(grid, valid, sky)
