import numpy as np
import pytest

from visaid.camera3d import CameraModel, DepthMap
from visaid.coordsys import ImageShape, NormPoint
from visaid.labelgen import Trace2D
from visaid.lift3d import (
    LiftConfig,
    MissingDepthError,
    Trace3D,
    lift_naive,
    lookup_depths,
    optimize_depths,
    se3_waypoints,
    slerp,
)
from visaid.camera3d import Point3D

CAM = CameraModel(fx=500, fy=500, cx=320, cy=320, depth_scale=1000)
SHAPE = ImageShape(640, 640)


def trace_of(*points) -> Trace2D:
    return Trace2D(tuple(NormPoint(x, y) for x, y in points))


def constant_depth(value: float, size: int = 640) -> DepthMap:
    return DepthMap(width=size, height=size, samples=np.full((size, size), value))


class TestLookupDepths:
    def test_constant_map(self):
        depths = lookup_depths(trace_of((100, 100), (500, 500)), SHAPE, constant_depth(1500))
        assert depths == [1500.0, 1500.0]

    def test_hole_filled_by_neighborhood_median(self):
        samples = np.full((640, 640), 1000.0)
        # normalized (500, 500) in a 640x640 image lands on pixel (320, 320)
        samples[320, 320] = 0.0
        depth = DepthMap(width=640, height=640, samples=samples)
        assert lookup_depths(trace_of((500, 500), (10, 10)), SHAPE, depth) == [1000.0, 1000.0]

    def test_all_invalid_names_point_index(self):
        with pytest.raises(MissingDepthError) as err:
            lookup_depths(trace_of((10, 10), (500, 500)), SHAPE, constant_depth(0.0))
        assert err.value.index == 0


class TestLiftNaive:
    def test_principal_trace_stays_on_axis(self):
        # normalized (500, 500) is pixel (320.32, 320.32), essentially the principal point
        trace3d = lift_naive(trace_of((500, 500), (500, 500)), [1000.0, 2000.0], CAM, SHAPE)
        for p, z in zip(trace3d.points, (1.0, 2.0)):
            # quantization leaves the de-normalized pixel 0.32px off the
            # principal point, i.e. under 0.64/500 meters per meter of depth
            assert abs(p.x) < 1.5e-3 and abs(p.y) < 1.5e-3
            assert p.z == pytest.approx(z)

    def test_matches_per_point_oracle(self):
        from visaid.camera3d import backproject
        from visaid.coordsys import from_norm

        trace = trace_of((100, 200), (800, 900))
        depths = [1200.0, 3400.0]
        trace3d = lift_naive(trace, depths, CAM, SHAPE)
        for point, norm, d in zip(trace3d.points, trace.points, depths):
            want = backproject(from_norm(norm, SHAPE), d, CAM)
            np.testing.assert_allclose(point.as_array(), want.as_array())

    def test_zero_depth_propagates_index(self):
        with pytest.raises(MissingDepthError) as err:
            lift_naive(trace_of((100, 100), (200, 200)), [1000.0, 0.0], CAM, SHAPE)
        assert err.value.index == 1


class TestOptimizeDepths:
    def test_two_points_unchanged(self):
        result = optimize_depths(trace_of((100, 100), (500, 500)), [1000.0, 2000.0], CAM, SHAPE)
        assert result.depths == [1000.0, 2000.0]
        assert result.skipped
        assert result.initial_objective == result.final_objective

    def test_shared_ray_middle_converges_to_endpoint_depth(self):
        trace = trace_of((500, 500), (500, 500), (500, 500))
        result = optimize_depths(trace, [1000.0, 1500.0, 1000.0], CAM, SHAPE)
        assert abs(result.depths[1] - 1000.0) <= 1e-3 * 1000.0
        assert result.depths[0] == 1000.0 and result.depths[2] == 1000.0

    def test_endpoints_bit_identical(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            coords = rng.integers(0, 1000, size=6)
            trace = trace_of(*[(int(coords[i]), int(coords[i + 1])) for i in range(0, 6, 2)])
            depths = [float(v) for v in rng.uniform(500, 3000, size=3)]
            result = optimize_depths(trace, depths, CAM, SHAPE)
            assert result.depths[0] == depths[0]
            assert result.depths[-1] == depths[-1]

    def test_objective_never_increases(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            coords = rng.integers(0, 1000, size=10)
            trace = trace_of(*[(int(coords[i]), int(coords[i + 1])) for i in range(0, 10, 2)])
            depths = [float(v) for v in rng.uniform(500, 3000, size=5)]
            result = optimize_depths(trace, depths, CAM, SHAPE)
            history = np.array(result.objective_history)
            assert np.all(np.diff(history) <= 1e-12)
            assert result.final_objective <= result.initial_objective + 1e-12

    def test_t3_matches_grid_search_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(25):
            coords = rng.integers(0, 1000, size=6)
            trace = trace_of(*[(int(coords[i]), int(coords[i + 1])) for i in range(0, 6, 2)])
            depths = [float(v) for v in rng.uniform(800, 2500, size=3)]
            result = optimize_depths(trace, depths, CAM, SHAPE)

            rays = [CAM.ray(_pixel(trace, i)) for i in range(3)]
            grid = np.linspace(0.5 * depths[1], 2.0 * depths[1], 10_000)
            best = min(
                _objective([depths[0], d, depths[2]], rays, CAM.depth_scale) for d in grid
            )
            assert result.final_objective <= best + 1e-4 * best


def _pixel(trace: Trace2D, i: int):
    from visaid.coordsys import from_norm

    return from_norm(trace.points[i], SHAPE)


def _objective(depths, rays, depth_scale):
    pts = np.array([(d / depth_scale) * r for d, r in zip(depths, rays)])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


class TestSe3Waypoints:
    def test_constant_orientation(self):
        trace3d = Trace3D((Point3D(0, 0, 1), Point3D(0, 0, 2), Point3D(0, 0, 3)))
        q = (1.0, 0.0, 0.0, 0.0)
        poses = se3_waypoints(trace3d, q, q)
        assert all(w.orientation == pytest.approx(q) for w in poses.waypoints)

    def test_midpoint_of_right_angle_rotation(self):
        trace3d = Trace3D((Point3D(0, 0, 1), Point3D(0, 0, 2), Point3D(0, 0, 3)))
        start = (1.0, 0.0, 0.0, 0.0)
        end = (np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4))  # 90 deg about z
        poses = se3_waypoints(trace3d, start, end)
        middle = poses.waypoints[1].orientation
        want = (np.cos(np.pi / 8), 0.0, 0.0, np.sin(np.pi / 8))  # 45 deg about z
        assert middle == pytest.approx(want)

    def test_positions_preserved_and_unit_norm(self):
        rng = np.random.default_rng(8)
        pts = tuple(Point3D(*rng.uniform(-1, 1, size=2), float(rng.uniform(0.5, 2))) for _ in range(5))
        trace3d = Trace3D(pts)
        q0 = _random_unit_quat(rng)
        q1 = _random_unit_quat(rng)
        poses = se3_waypoints(trace3d, q0, q1)
        for w, p in zip(poses.waypoints, pts):
            assert w.position == p
            assert abs(np.linalg.norm(w.orientation) - 1.0) <= 1e-9

    def test_antipodal_quaternions_take_shorter_arc(self):
        q0 = (1.0, 0.0, 0.0, 0.0)
        q1 = (-1.0, 0.0, 0.0, 0.0)  # same rotation, opposite sign
        mid = slerp(q0, q1, 0.5)
        assert abs(abs(np.array(mid) @ np.array(q0)) - 1.0) < 1e-9

    def test_arc_length_fractions(self):
        # unequal segment lengths: 1 then 3 -> fractions 0, 0.25, 1
        trace3d = Trace3D((Point3D(0, 0, 1), Point3D(0, 0, 2), Point3D(0, 0, 5)))
        start = (1.0, 0.0, 0.0, 0.0)
        end = (np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4))
        poses = se3_waypoints(trace3d, start, end)
        middle = poses.waypoints[1].orientation
        want = slerp(start, end, 0.25)
        assert middle == pytest.approx(want)


def _random_unit_quat(rng):
    q = rng.normal(size=4)
    return tuple(q / np.linalg.norm(q))
