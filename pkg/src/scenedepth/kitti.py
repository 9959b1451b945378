"""KITTI raw-dataset calibration parsing into a CameraRig.

Reads the `calib_cam_to_cam.txt` key: value format and builds a rig from the
rectified projection matrix of the requested camera.  Rectified frames are
treated as ground-aligned (identity extrinsics); the camera height above the
road defaults to the stock mounting height and can be overridden.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraRig, DepthMode, Extrinsics, Intrinsics
from .errors import ConfigError

DEFAULT_CAMERA_HEIGHT_M = 1.65


def parse_calib_cam_to_cam(text: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            out[key.strip()] = np.array([float(x) for x in rest.split()])
        except ValueError:
            continue  # non-numeric entries (calib_time, ...)
    return out


def rig_from_kitti_calib(
    text: str,
    cam: int = 2,
    height_m: float = DEFAULT_CAMERA_HEIGHT_M,
    depth_mode: DepthMode = DepthMode.EUCLIDEAN,
    max_range_m: float = 200.0,
) -> CameraRig:
    """Build a CameraRig from calib_cam_to_cam.txt contents for camera `cam`."""
    calib = parse_calib_cam_to_cam(text)
    pkey = f"P_rect_{cam:02d}"
    skey = f"S_rect_{cam:02d}"
    if pkey not in calib:
        raise ConfigError(f"calibration lacks {pkey}")
    if skey not in calib:
        raise ConfigError(f"calibration lacks {skey}")
    P = calib[pkey]
    if P.size != 12:
        raise ConfigError(f"{pkey} must have 12 numbers, got {P.size}")
    P = P.reshape(3, 4)
    size = calib[skey]
    if size.size != 2:
        raise ConfigError(f"{skey} must have 2 numbers, got {size.size}")
    return CameraRig(
        intrinsics=Intrinsics(fx=float(P[0, 0]), fy=float(P[1, 1]),
                              ox=float(P[0, 2]), oy=float(P[1, 2])),
        extrinsics=Extrinsics.identity(),
        height_m=height_m,
        width_px=int(round(size[0])),
        height_px=int(round(size[1])),
        depth_mode=depth_mode,
        max_range_m=max_range_m,
    )
