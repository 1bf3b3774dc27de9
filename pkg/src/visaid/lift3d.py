"""Lift 2D visual traces to executable 3D trajectories.

Raw depth lookups hug the object surface, so intermediate depths are
refined by minimizing total Euclidean path length along the fixed pixel
rays, holding the first and last depth fixed. Each distance term is a norm
of a function affine in the depths, so the objective is convex and plain
gradient descent (with backtracking halving) reaches the global minimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera3d import CameraModel, DepthMap, Point3D, backproject
from .coordsys import ImageShape, from_norm
from .labelgen import Trace2D

MIN_RAW_DEPTH = 1.0


class MissingDepthError(ValueError):
    """No valid depth at (or around) a trace point; ``index`` names the point."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class LiftConfig:
    step_size: float = 1e-2
    max_iters: int = 2000
    tol: float = 1e-8
    neighborhood: int = 5

    def __post_init__(self):
        if min(self.step_size, self.max_iters, self.tol, self.neighborhood) <= 0:
            raise ValueError("all lift configuration values must be positive")


@dataclass(frozen=True)
class Trace3D:
    points: tuple[Point3D, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a 3D trace needs at least 2 points")

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.z] for p in self.points])


@dataclass(frozen=True)
class Waypoint:
    position: Point3D
    orientation: tuple[float, float, float, float]  # unit quaternion, wxyz

    def __post_init__(self):
        norm = float(np.linalg.norm(self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"waypoint orientation norm {norm} is not 1")


@dataclass(frozen=True)
class PoseTrajectory:
    waypoints: tuple[Waypoint, ...]


@dataclass(frozen=True)
class OptimizeResult:
    depths: list[float]
    initial_objective: float
    final_objective: float
    iterations: int
    objective_history: list[float]

    @property
    def skipped(self) -> bool:
        return self.iterations == 0


def _trace_pixels(trace: Trace2D, shape: ImageShape) -> list:
    return [from_norm(p, shape) for p in trace.points]


def lookup_depths(
    trace: Trace2D,
    shape: ImageShape,
    depth: DepthMap,
    neighborhood: int = 5,
) -> list[float]:
    """Raw depth at each de-normalized trace point.

    An invalid (zero) sample falls back to the median of valid depths within
    a +/- ``neighborhood`` pixel window; a window with no valid depth raises
    MissingDepthError naming the point index.
    """
    grid = depth.samples
    depths = []
    for i, pixel in enumerate(_trace_pixels(trace, shape)):
        col = min(int(pixel.u), depth.width - 1)
        row = min(int(pixel.v), depth.height - 1)
        d = float(grid[row, col])
        if d <= 0:
            window = grid[
                max(0, row - neighborhood) : row + neighborhood + 1,
                max(0, col - neighborhood) : col + neighborhood + 1,
            ]
            valid = window[window > 0]
            if valid.size == 0:
                raise MissingDepthError(
                    i, f"no valid depth within {neighborhood}px of trace point {i}"
                )
            d = float(np.median(valid))
        depths.append(d)
    return depths


def lift_naive(
    trace: Trace2D, depths: list[float], cam: CameraModel, shape: ImageShape
) -> Trace3D:
    """Back-project each trace point at its measured depth."""
    if len(depths) != len(trace.points):
        raise ValueError(f"{len(depths)} depths for {len(trace.points)} trace points")
    points = []
    for i, (pixel, d) in enumerate(zip(_trace_pixels(trace, shape), depths)):
        if d <= 0:
            raise MissingDepthError(i, f"non-positive depth {d} at trace point {i}")
        points.append(backproject(pixel, d, cam))
    return Trace3D(tuple(points))


def _path_objective(z: np.ndarray, rays: np.ndarray) -> float:
    segs = z[1:, None] * rays[1:] - z[:-1, None] * rays[:-1]
    return float(np.linalg.norm(segs, axis=1).sum())


def _path_gradient(z: np.ndarray, rays: np.ndarray) -> np.ndarray:
    """Gradient of the path length in all depths (endpoints included).

    Zero-length segments contribute a zero subgradient, which handles exact
    depth ties on shared rays.
    """
    points = z[:, None] * rays
    segs = points[1:] - points[:-1]
    norms = np.linalg.norm(segs, axis=1)
    grad = np.zeros_like(z)
    for i, norm in enumerate(norms):
        if norm == 0.0:
            continue
        unit = segs[i] / norm
        grad[i + 1] += float(unit @ rays[i + 1])
        grad[i] -= float(unit @ rays[i])
    return grad


def optimize_depths(
    trace: Trace2D,
    depths: list[float],
    cam: CameraModel,
    shape: ImageShape,
    config: LiftConfig | None = None,
) -> OptimizeResult:
    """Shorten the lifted path by refining the intermediate depths.

    The first and last depth stay bit-identical to the input. Descent works
    on metric depths (z = d / depth_scale) so the default step size is on a
    meter scale; depths never drop below one raw unit.
    """
    cfg = config or LiftConfig()
    if len(depths) != len(trace.points):
        raise ValueError(f"{len(depths)} depths for {len(trace.points)} trace points")
    rays = np.array([cam.ray(p).tolist() for p in _trace_pixels(trace, shape)])
    z = np.asarray(depths, dtype=float) / cam.depth_scale
    objective = _path_objective(z, rays)
    history = [objective]
    if len(depths) < 3:
        return OptimizeResult(
            depths=list(depths),
            initial_objective=objective,
            final_objective=objective,
            iterations=0,
            objective_history=history,
        )

    z_min = MIN_RAW_DEPTH / cam.depth_scale
    free = slice(1, len(depths) - 1)
    iterations = 0
    for _ in range(cfg.max_iters):
        grad = _path_gradient(z, rays)
        grad[0] = grad[-1] = 0.0
        if not np.any(grad[free]):
            break
        step = cfg.step_size
        improved = False
        while step > 1e-18:
            candidate = z.copy()
            candidate[free] = np.maximum(z[free] - step * grad[free], z_min)
            cand_objective = _path_objective(candidate, rays)
            if cand_objective < objective:
                improved = True
                break
            step /= 2.0
        if not improved:
            break
        z = candidate
        iterations += 1
        history.append(cand_objective)
        if abs(objective - cand_objective) <= cfg.tol * max(objective, 1e-30):
            objective = cand_objective
            break
        objective = cand_objective

    out = (z * cam.depth_scale).tolist()
    out[0] = depths[0]
    out[-1] = depths[-1]
    return OptimizeResult(
        depths=out,
        initial_objective=history[0],
        final_objective=history[-1],
        iterations=iterations,
        objective_history=history,
    )


def _normalize_quat(q) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    norm = float(np.linalg.norm(arr))
    if not 0.999999 < norm < 1.000001:
        raise ValueError(f"orientation must be a unit quaternion, norm = {norm}")
    return arr / norm


def slerp(q0, q1, t: float) -> tuple[float, float, float, float]:
    """Spherical interpolation along the shorter arc; quaternions are wxyz."""
    a = _normalize_quat(q0)
    b = _normalize_quat(q1)
    dot = float(a @ b)
    if dot < 0.0:  # antipodal representations: flip to the shorter arc
        b, dot = -b, -dot
    if dot > 1.0 - 1e-12:
        out = (1.0 - t) * a + t * b
    else:
        theta = np.arccos(min(dot, 1.0))
        out = (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / np.sin(theta)
    out = out / np.linalg.norm(out)
    return tuple(float(v) for v in out)


def se3_waypoints(trace3d: Trace3D, start_orientation, end_orientation) -> PoseTrajectory:
    """Poses along the trace: positions copied, orientations slerped.

    Interpolation fractions follow normalized arc length (0 at the first
    point, 1 at the last); a zero-length path falls back to index fractions.
    """
    positions = trace3d.positions()
    seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    total = float(seg.sum())
    if total > 0.0:
        fractions = np.concatenate([[0.0], np.cumsum(seg)]) / total
    else:
        fractions = np.linspace(0.0, 1.0, len(positions))
    waypoints = tuple(
        Waypoint(position=p, orientation=slerp(start_orientation, end_orientation, float(t)))
        for p, t in zip(trace3d.points, fractions)
    )
    return PoseTrajectory(waypoints=waypoints)
