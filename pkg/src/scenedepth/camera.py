"""Pinhole camera model and closed-form backprojection onto the ground plane.

Coordinate conventions
======================
World frame:
  - Y axis points TOWARD the ground, so the ground plane is y_w = h where
    h is the camera height above the ground (meters).
  - X right, Z forward when the camera is axis-aligned with the world.

Camera frame (standard computer vision):
  - X right, Y down, Z forward along the optical axis.
  - Extrinsics map world to camera:  X_c = R @ X_w + T.

Image frame:
  - u right, v down, origin at the top-left; principal point (ox, oy).
  - Projection:  z_c * [u, v, 1]^T = K @ [R | T] @ [X_w, 1]^T = A @ [X_w, 1]^T.

Backprojection of a pixel onto the ground plane substitutes y_w = h into the
three scalar projection equations

    z_c * u = a11*x_w + a12*y_w + a13*z_w + a14
    z_c * v = a21*x_w + a22*y_w + a23*z_w + a24
    z_c     = a31*x_w + a32*y_w + a33*z_w + a34

and solves the resulting 3x3 linear system for (x_w, z_w, z_c).  When the
camera frame is aligned with the world frame (R = I, T = 0) this collapses to
the closed form  z_c = fy*h / (v - oy),  x_c = (u - ox)*z_c / fx,  y_c = h.

Rays through pixels at or above the horizon (the locus where the viewing ray
is parallel to the plane) have no ground intersection and are reported as
invalid rather than producing meaningless multi-kilometer depths; the same
goes for intersections beyond the configured maximum range.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .depthmap import DepthMap
from .errors import BehindCameraError, CalibrationError, ConfigError, NoIntersectionError

# Fast-path horizon guard: |v - oy| must exceed this many pixels.
HORIZON_EPS_PX = 1e-6
# General-path singularity guard: |det| relative to the column-norm product.
_SINGULAR_RTOL = 1e-12

DEFAULT_MAX_RANGE_M = 200.0


class DepthMode(enum.Enum):
    """How per-pixel depth is reported for a ground point."""

    EUCLIDEAN = "euclidean"  # point-to-point distance from the camera center
    Z_DEPTH = "z_depth"      # camera-frame z coordinate (LiDAR-projected GT convention)


@dataclass(frozen=True)
class Intrinsics:
    """Focal lengths and principal point, all in pixels."""

    fx: float
    fy: float
    ox: float
    oy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CalibrationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not all(np.isfinite([self.fx, self.fy, self.ox, self.oy])):
            raise CalibrationError("intrinsics must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.ox], [0.0, self.fy, self.oy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


def _identity_extrinsics() -> tuple[np.ndarray, np.ndarray]:
    return np.eye(3), np.zeros(3)


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera rigid transform: X_c = R @ X_w + T."""

    rotation: np.ndarray    # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        T = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3):
            raise CalibrationError(f"rotation must be 3x3, got {R.shape}")
        if T.shape != (3,):
            raise CalibrationError(f"translation must be a 3-vector, got shape {T.shape}")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(T)):
            raise CalibrationError("extrinsics must be finite")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9:
            raise CalibrationError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise CalibrationError("rotation determinant is not +1 within 1e-9")
        R = R.copy()
        T = T.copy()
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(*_identity_extrinsics())

    @property
    def is_identity(self) -> bool:
        return bool(
            np.array_equal(self.rotation, np.eye(3)) and np.array_equal(self.translation, np.zeros(3))
        )


@dataclass(frozen=True)
class CameraRig:
    """Full camera description: optics, pose, height above ground, image size."""

    intrinsics: Intrinsics
    extrinsics: Extrinsics
    height_m: float
    width_px: int
    height_px: int
    depth_mode: DepthMode = DepthMode.EUCLIDEAN
    max_range_m: float = DEFAULT_MAX_RANGE_M

    def __post_init__(self):
        if not (self.height_m > 0 and np.isfinite(self.height_m)):
            raise CalibrationError(f"camera height must be positive, got {self.height_m}")
        if self.width_px < 1 or self.height_px < 1:
            raise CalibrationError("image dimensions must be at least 1x1")
        if not (self.max_range_m > 0):
            raise CalibrationError("max_range_m must be positive")


@dataclass(frozen=True)
class ProjectionMatrix:
    """The combined 3x4 projection A = K @ [R | T]."""

    a: np.ndarray  # (3, 4)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.shape != (3, 4):
            raise CalibrationError(f"projection matrix must be 3x4, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise CalibrationError("projection matrix entries must be finite")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class GroundPoint:
    """A pixel backprojected onto the ground plane, in both frames."""

    xc: float
    yc: float
    zc: float
    xw: float
    yw: float
    zw: float
    u: float
    v: float


def projection_matrix(intr: Intrinsics, extr: Extrinsics) -> ProjectionMatrix:
    """Assemble A = K @ [R | T]."""
    rt = np.hstack([extr.rotation, extr.translation.reshape(3, 1)])
    return ProjectionMatrix(intr.matrix @ rt)


def _plane_rhs(a: np.ndarray, h: float) -> np.ndarray:
    # Moving the y_w = h terms and the affine terms to the right-hand side.
    return np.array(
        [-(a[0, 1] * h + a[0, 3]), -(a[1, 1] * h + a[1, 3]), -(a[2, 1] * h + a[2, 3])]
    )


def solve_world_on_plane(A: ProjectionMatrix, u: float, v: float, h: float) -> tuple[float, float, float]:
    """Solve the ground-plane backprojection system for one pixel.

    Returns (x_w, z_w, z_c) such that projecting (x_w, h, z_w) through A lands
    on (u, v).  Raises NoIntersectionError when the ray is parallel to the
    plane and BehindCameraError when the intersection has z_c <= 0.
    """
    a = A.a
    m = np.array(
        [
            [a[0, 0], a[0, 2], -u],
            [a[1, 0], a[1, 2], -v],
            [a[2, 0], a[2, 2], -1.0],
        ]
    )
    rhs = _plane_rhs(a, h)
    det = np.linalg.det(m)
    scale = np.prod(np.linalg.norm(m, axis=0))
    if abs(det) <= _SINGULAR_RTOL * scale or scale == 0.0:
        raise NoIntersectionError(
            f"viewing ray through ({u}, {v}) is parallel to the ground plane"
        )
    xw, zw, zc = np.linalg.solve(m, rhs)
    if zc <= 0:
        raise BehindCameraError(f"plane intersection for ({u}, {v}) lies behind the camera")
    return float(xw), float(zw), float(zc)


def backproject_ground_pixel(rig: CameraRig, u: float, v: float) -> GroundPoint:
    """Backproject a pixel onto the ground plane, returning both coordinate frames.

    Uses the aligned-frame closed form when extrinsics are identity (y_c = h),
    otherwise the general linear solve followed by the world-to-camera
    transform.
    """
    intr = rig.intrinsics
    h = rig.height_m
    if rig.extrinsics.is_identity:
        denom = v - intr.oy
        if denom <= HORIZON_EPS_PX:
            raise NoIntersectionError(
                f"pixel ({u}, {v}) is at or above the horizon row v = {intr.oy}"
            )
        zc = intr.fy * h / denom
        xc = (u - intr.ox) * zc / intr.fx
        return GroundPoint(xc=xc, yc=h, zc=zc, xw=xc, yw=h, zw=zc, u=u, v=v)
    A = projection_matrix(intr, rig.extrinsics)
    xw, zw, zc = solve_world_on_plane(A, u, v, h)
    pw = np.array([xw, h, zw])
    pc = rig.extrinsics.rotation @ pw + rig.extrinsics.translation
    return GroundPoint(
        xc=float(pc[0]), yc=float(pc[1]), zc=float(pc[2]), xw=xw, yw=h, zw=zw, u=u, v=v
    )


def ground_range(p: GroundPoint, mode: DepthMode) -> float:
    """Depth of a ground point: camera-center distance or camera-frame z."""
    if mode is DepthMode.EUCLIDEAN:
        return float(np.sqrt(p.xc * p.xc + p.yc * p.yc + p.zc * p.zc))
    return float(p.zc)


def _surface_grids_identity(rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form per-pixel depth for the aligned camera; z depends on v only."""
    intr = rig.intrinsics
    h = rig.height_m
    v = np.arange(rig.height_px, dtype=np.float64)
    denom = v - intr.oy
    row_ok = denom > HORIZON_EPS_PX
    zc_row = np.zeros(rig.height_px)
    zc_row[row_ok] = intr.fy * h / denom[row_ok]
    zc = np.broadcast_to(zc_row[:, None], (rig.height_px, rig.width_px))
    valid = np.broadcast_to(row_ok[:, None], zc.shape)
    if rig.depth_mode is DepthMode.Z_DEPTH:
        return zc.copy(), valid.copy()
    u = np.arange(rig.width_px, dtype=np.float64)
    xc = (u[None, :] - intr.ox) * zc / intr.fx
    depth = np.sqrt(xc * xc + h * h + zc * zc)
    return depth, valid.copy()


def _surface_grids_general(rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Cramer solve of the plane system for every pixel."""
    a = projection_matrix(rig.intrinsics, rig.extrinsics).a
    h = rig.height_m
    r1, r2, r3 = _plane_rhs(a, h)
    u = np.arange(rig.width_px, dtype=np.float64)[None, :]
    v = np.arange(rig.height_px, dtype=np.float64)[:, None]

    # det of [[a11, a13, -u], [a21, a23, -v], [a31, a33, -1]] and the Cramer
    # numerators, expanded so only u- and v-dependent terms are per-pixel.
    det = a[0, 0] * (a[2, 2] * v - a[1, 2]) + a[1, 0] * (a[0, 2] - a[2, 2] * u) + a[2, 0] * (
        a[1, 2] * u - a[0, 2] * v
    )
    det_x = r1 * (a[2, 2] * v - a[1, 2]) + r2 * (a[0, 2] - a[2, 2] * u) + r3 * (
        a[1, 2] * u - a[0, 2] * v
    )
    det_zw = a[0, 0] * (r3 * v - r2) + a[1, 0] * (r1 - r3 * u) + a[2, 0] * (r2 * u - r1 * v)
    det_zc = (
        r1 * (a[1, 0] * a[2, 2] - a[2, 0] * a[1, 2])
        + r2 * (a[2, 0] * a[0, 2] - a[0, 0] * a[2, 2])
        + r3 * (a[0, 0] * a[1, 2] - a[1, 0] * a[0, 2])
    )

    # Condition-style guard: det small relative to the product of column norms
    # means the ray is (numerically) parallel to the plane.
    c1 = np.sqrt(a[0, 0] ** 2 + a[1, 0] ** 2 + a[2, 0] ** 2)
    c2 = np.sqrt(a[0, 2] ** 2 + a[1, 2] ** 2 + a[2, 2] ** 2)
    c3 = np.sqrt(u * u + v * v + 1.0)
    nonsingular = np.abs(det) > _SINGULAR_RTOL * (c1 * c2 * c3)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(nonsingular, 1.0 / np.where(det == 0.0, 1.0, det), 0.0)
    zc = det_zc * inv
    valid = nonsingular & (zc > 0)
    if rig.depth_mode is DepthMode.Z_DEPTH:
        return np.where(valid, zc, 0.0), valid
    xw = det_x * inv
    zw = det_zw * inv
    R, T = rig.extrinsics.rotation, rig.extrinsics.translation
    xc = R[0, 0] * xw + R[0, 1] * h + R[0, 2] * zw + T[0]
    yc = R[1, 0] * xw + R[1, 1] * h + R[1, 2] * zw + T[1]
    depth = np.sqrt(xc * xc + yc * yc + zc * zc)
    return np.where(valid, depth, 0.0), valid


def surface_depth(rig: CameraRig) -> DepthMap:
    """Per-pixel depth under the everything-is-the-ground-plane assumption.

    Pixels at/above the horizon and intersections beyond rig.max_range_m are
    invalid; per-pixel failures never abort the computation.
    """
    if rig.extrinsics.is_identity:
        depth, valid = _surface_grids_identity(rig)
    else:
        depth, valid = _surface_grids_general(rig)
    valid = valid & (depth > 0) & (depth <= rig.max_range_m)
    return DepthMap.create(np.ascontiguousarray(depth), valid)


# ---------------------------------------------------------------------------
# Camera configuration document (key = value text schema)
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "fx", "fy", "ox", "oy", "height_m", "rotation", "translation",
    "depth_mode", "max_range_m", "width_px", "height_px",
}


def parse_camera_config(text: str, width_px: int | None = None, height_px: int | None = None) -> CameraRig:
    """Parse a camera configuration document into a CameraRig.

    Schema (one ``key = value`` per line, ``#`` comments allowed)::

        fx = 721.5377            # focal length x, pixels           (required)
        fy = 721.5377            # focal length y, pixels           (required)
        ox = 609.5593            # principal point x, pixels        (required)
        oy = 172.854             # principal point y, pixels        (required)
        height_m = 1.65          # camera height above ground, m    (required)
        rotation = 1 0 0 0 1 0 0 0 1   # row-major 3x3, default identity
        translation = 0 0 0            # meters, default zero
        depth_mode = euclidean         # euclidean | z_depth, default euclidean
        max_range_m = 200              # default 200
        width_px = 1242          # optional; may instead be supplied by the caller
        height_px = 375          # optional; may instead be supplied by the caller

    Image dimensions may be omitted from the document when the caller knows
    them (e.g. from the segmentation map being processed).
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"camera config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"camera config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"camera config line {lineno}: duplicate key {key!r}")
        values[key] = val.strip()

    missing = {"fx", "fy", "ox", "oy", "height_m"} - values.keys()
    if missing:
        raise ConfigError(f"camera config missing required keys: {sorted(missing)}")

    def _floats(key: str, n: int) -> np.ndarray:
        parts = values[key].split()
        if len(parts) != n:
            raise ConfigError(f"camera config key {key!r} needs {n} numbers, got {len(parts)}")
        try:
            return np.array([float(p) for p in parts])
        except ValueError as e:
            raise ConfigError(f"camera config key {key!r}: {e}") from e

    try:
        intr = Intrinsics(
            fx=float(values["fx"]), fy=float(values["fy"]),
            ox=float(values["ox"]), oy=float(values["oy"]),
        )
    except ValueError as e:
        raise ConfigError(f"camera config: {e}") from e
    R = _floats("rotation", 9).reshape(3, 3) if "rotation" in values else np.eye(3)
    T = _floats("translation", 3) if "translation" in values else np.zeros(3)
    mode_name = values.get("depth_mode", "euclidean").lower()
    try:
        mode = DepthMode(mode_name)
    except ValueError:
        raise ConfigError(
            f"camera config: depth_mode must be one of "
            f"{[m.value for m in DepthMode]}, got {mode_name!r}"
        ) from None
    w = int(values["width_px"]) if "width_px" in values else width_px
    h_px = int(values["height_px"]) if "height_px" in values else height_px
    if w is None or h_px is None:
        raise ConfigError(
            "camera config lacks width_px/height_px and no dimensions were supplied by the caller"
        )
    return CameraRig(
        intrinsics=intr,
        extrinsics=Extrinsics(R, T),
        height_m=float(values["height_m"]),
        width_px=w,
        height_px=h_px,
        depth_mode=mode,
        max_range_m=float(values.get("max_range_m", DEFAULT_MAX_RANGE_M)),
    )


def format_camera_config(rig: CameraRig) -> str:
    """Serialize a CameraRig back to the key = value document form."""
    intr = rig.intrinsics
    R = " ".join(repr(float(x)) for x in rig.extrinsics.rotation.reshape(-1))
    T = " ".join(repr(float(x)) for x in rig.extrinsics.translation)
    return "\n".join(
        [
            f"fx = {intr.fx!r}",
            f"fy = {intr.fy!r}",
            f"ox = {intr.ox!r}",
            f"oy = {intr.oy!r}",
            f"height_m = {rig.height_m!r}",
            f"rotation = {R}",
            f"translation = {T}",
            f"depth_mode = {rig.depth_mode.value}",
            f"max_range_m = {rig.max_range_m!r}",
            f"width_px = {rig.width_px}",
            f"height_px = {rig.height_px}",
            "",
        ]
    )
