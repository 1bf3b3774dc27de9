"""Pinhole camera model: back-projection, projection, point-cloud extraction.

All 3D coordinates are in the camera frame, meters. Raw depth values are
sensor units; dividing by ``depth_scale`` yields meters. A raw depth of 0
marks an invalid sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coordsys import PixelPoint


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.depth_scale <= 0:
            raise ValueError("focal lengths and depth_scale must be positive")

    def ray(self, p: PixelPoint) -> np.ndarray:
        """Direction through pixel p at unit depth: ((u-cx)/fx, (v-cy)/fy, 1)."""
        return np.array([(p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0])


@dataclass(frozen=True)
class Point3D:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError(f"non-finite 3D point ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class DepthMap:
    """Raw depth grid; ``samples`` is (height, width), nonnegative, 0 = invalid."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (self.height, self.width):
            raise ValueError(
                f"depth grid shape {self.samples.shape} does not match "
                f"declared {self.height}x{self.width}"
            )
        if np.any(self.samples < 0):
            raise ValueError("raw depth samples must be nonnegative")


class InvalidDepthError(ValueError):
    """Raw depth is zero/invalid where a valid sample is required."""


class BehindCameraError(ValueError):
    """Projection requested for a point with z <= 0."""


def backproject(p: PixelPoint, d: float, cam: CameraModel) -> Point3D:
    """Lift pixel p with raw depth d to camera-frame meters.

    s = d / depth_scale, then (x, y, z) = s * ((u-cx)/fx, (v-cy)/fy, 1).
    """
    if d <= 0:
        raise InvalidDepthError(f"raw depth must be positive, got {d}")
    s = d / cam.depth_scale
    return Point3D(
        x=s * (p.u - cam.cx) / cam.fx,
        y=s * (p.v - cam.cy) / cam.fy,
        z=s,
    )


def project(point: Point3D, cam: CameraModel) -> tuple[PixelPoint, float]:
    """Inverse of backproject: pixel coordinates plus raw depth."""
    if point.z <= 0:
        raise BehindCameraError(f"point behind camera, z = {point.z}")
    u = cam.fx * point.x / point.z + cam.cx
    v = cam.fy * point.y / point.z + cam.cy
    return PixelPoint(u=u, v=v), point.z * cam.depth_scale


def cloud_from_depth(
    depth: DepthMap, cam: CameraModel, mask: np.ndarray | None = None
) -> list[Point3D]:
    """Back-project every valid (nonzero) pixel, row-major order.

    ``mask``, when given, must match the depth resolution; only pixels with a
    nonzero mask value are considered.
    """
    valid = depth.samples > 0
    if mask is not None:
        if mask.shape != depth.samples.shape:
            raise ValueError(f"mask shape {mask.shape} != depth shape {depth.samples.shape}")
        valid &= mask != 0
    rows, cols = np.nonzero(valid)
    s = depth.samples[rows, cols] / cam.depth_scale
    xs = s * (cols - cam.cx) / cam.fx
    ys = s * (rows - cam.cy) / cam.fy
    return [Point3D(float(x), float(y), float(z)) for x, y, z in zip(xs, ys, s)]
